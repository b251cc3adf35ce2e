#include <gtest/gtest.h>

#include "clora/nn.hpp"
#include "test_oracles.hpp"

using namespace clora;

TEST(Linear, IdentityWeight) {
    Graph g;
    LinearLayer l;
    l.weight = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor x = Tensor::from_data({1, 2}, {3.5, -2});
    Tensor y = linear_forward(g, l, x);
    EXPECT_EQ(y.data(), x.data());
}

TEST(Linear, ZeroWeight) {
    Graph g;
    LinearLayer l;
    l.weight = Tensor::zeros({3, 2});
    Tensor y = linear_forward(g, l, Tensor::from_data({1, 2}, {5, 7}));
    for (scalar v : y.data()) EXPECT_EQ(v, 0);
}

TEST(Linear, HandMatrixMultiply) {
    Graph g;
    LinearLayer l;
    l.weight = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor y = linear_forward(g, l, Tensor::from_data({1, 2}, {1, 1}));
    EXPECT_DOUBLE_EQ(y.data()[0], 3);
    EXPECT_DOUBLE_EQ(y.data()[1], 7);
}

TEST(Linear, DimMismatch) {
    Graph g;
    LinearLayer l;
    l.weight = Tensor::zeros({2, 3});
    EXPECT_THROW(linear_forward(g, l, Tensor::zeros({1, 4})), ShapeError);
}

TEST(Conv, OneByOneIdentity) {
    Graph g;
    ConvLayer c;
    c.kernel = Tensor::from_data({1, 1, 1, 1}, {1});
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(conv_forward(g, c, x).data(), x.data());
}

TEST(Conv, ZeroKernel) {
    Graph g;
    ConvLayer c;
    c.kernel = Tensor::zeros({2, 1, 3, 3});
    c.pad = 1;
    Tensor y = conv_forward(g, c, Tensor::full({1, 1, 4, 4}, 3));
    for (scalar v : y.data()) EXPECT_EQ(v, 0);
}

TEST(Conv, OnesKernelBorderCounts) {
    Graph g;
    ConvLayer c;
    c.kernel = Tensor::full({1, 1, 3, 3}, 1);
    c.pad = 1;
    Tensor y = conv_forward(g, c, Tensor::full({1, 1, 3, 3}, 1));
    // center sees 9 neighbours, edges 6, corners 4
    const std::vector<scalar> want{4, 6, 4, 6, 9, 6, 4, 6, 4};
    for (size_t i = 0; i < want.size(); ++i) EXPECT_DOUBLE_EQ(y.data()[i], want[i]);
}

TEST(Conv, NonPositiveOutputRejected) {
    Graph g;
    ConvLayer c;
    c.kernel = Tensor::zeros({1, 1, 5, 5});
    EXPECT_THROW(conv_forward(g, c, Tensor::zeros({1, 1, 3, 3})), ShapeError);
}

TEST(Attention, SingleContextToken) {
    Graph g;
    RngStream rng(3);
    AttentionLayer at = make_attention(4, 4, 4, AttentionMode::cross_attn, rng);
    Tensor x = Tensor::randn({1, 3, 4}, rng);
    Tensor ctx = Tensor::randn({1, 1, 4}, rng);
    Tensor y = attention_forward(g, at, x, &ctx);
    // softmax over one element is 1, so every query returns that token's V row
    Graph g2;
    Tensor vrow = matmul(g2, ctx, at.wv, true);
    for (int64_t t = 0; t < 3; ++t)
        for (int64_t d = 0; d < 4; ++d)
            EXPECT_NEAR(y.data()[static_cast<size_t>(t * 4 + d)], vrow.data()[static_cast<size_t>(d)], 1e-12);
}

TEST(Attention, IdenticalKeysGiveUniformMix) {
    Graph g;
    RngStream rng(4);
    AttentionLayer at = make_attention(2, 2, 2, AttentionMode::cross_attn, rng);
    // three identical context tokens => attention weights 1/3 each
    Tensor ctx = Tensor::from_data({1, 3, 2}, {1, 2, 1, 2, 1, 2});
    Tensor x = Tensor::randn({1, 2, 2}, rng);
    Tensor y = attention_forward(g, at, x, &ctx);
    Graph g2;
    Tensor v = matmul(g2, ctx, at.wv, true);
    for (int64_t t = 0; t < 2; ++t)
        for (int64_t d = 0; d < 2; ++d) {
            scalar mean = (v.data()[0 * 2 + d] + v.data()[1 * 2 + d] + v.data()[2 * 2 + d]) / 3;
            EXPECT_NEAR(y.data()[static_cast<size_t>(t * 2 + d)], mean, 1e-12);
        }
}

TEST(Attention, MatchesScalarOracle) {
    Graph g;
    AttentionLayer at;
    at.wq = Tensor::from_data({2, 2}, {0.5, -1, 2, 0.25});
    at.wk = Tensor::from_data({2, 2}, {1, 0.5, -0.5, 1});
    at.wv = Tensor::from_data({2, 2}, {2, 1, 0, -1});
    at.head_dim = 2;
    at.mode = AttentionMode::self_attn;
    Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, -1, 0.5});
    Tensor y = attention_forward(g, at, x, nullptr);

    auto proj = [](const std::vector<std::vector<scalar>>& xs, const Tensor& w) {
        std::vector<std::vector<scalar>> out;
        for (const auto& row : xs) {
            std::vector<scalar> o(2, 0);
            for (size_t i = 0; i < 2; ++i)
                for (size_t j = 0; j < 2; ++j) o[i] += w.data()[i * 2 + j] * row[j];
            out.push_back(o);
        }
        return out;
    };
    std::vector<std::vector<scalar>> tokens{{1, 2}, {-1, 0.5}};
    auto ref = oracle::naive_attention(proj(tokens, at.wq), proj(tokens, at.wk), proj(tokens, at.wv), 2);
    for (size_t t = 0; t < 2; ++t)
        for (size_t d = 0; d < 2; ++d) EXPECT_NEAR(y.data()[t * 2 + d], ref[t][d], 1e-12);
}

TEST(Attention, CrossModeRequiresContext) {
    Graph g;
    RngStream rng(5);
    AttentionLayer at = make_attention(2, 2, 2, AttentionMode::cross_attn, rng);
    Tensor x = Tensor::randn({1, 2, 2}, rng);
    EXPECT_THROW(attention_forward(g, at, x, nullptr), ShapeError);
}

TEST(LayerNorm, ConstantVectorToZeros) {
    Graph g;
    Tensor x = Tensor::full({1, 4}, 3.7);
    Tensor y = layer_norm_last(g, x, Tensor::full({4}, 1), Tensor::zeros({4}));
    for (scalar v : y.data()) EXPECT_NEAR(v, 0, 1e-12);
}

TEST(LayerNorm, AlreadyNormalized) {
    Graph g;
    Tensor x = Tensor::from_data({1, 2}, {1, -1});
    Tensor y = layer_norm_last(g, x, Tensor::full({2}, 1), Tensor::zeros({2}));
    EXPECT_NEAR(y.data()[0], 1, 1e-5);
    EXPECT_NEAR(y.data()[1], -1, 1e-5);
}

TEST(LayerNorm, MatchesScalarArithmetic) {
    Graph g;
    Tensor x = Tensor::from_data({1, 3}, {1, 2, 3});
    Tensor y = layer_norm_last(g, x, Tensor::full({3}, 1), Tensor::zeros({3}));
    const scalar mean = 2, var = scalar(2.0 / 3.0);
    for (int i = 0; i < 3; ++i)
        EXPECT_NEAR(y.data()[static_cast<size_t>(i)], (scalar(i + 1) - mean) / std::sqrt(var + scalar(1e-5)),
                    1e-12);
}

TEST(Softmax, RowsSumToOne) {
    Graph g;
    RngStream rng(6);
    for (int c = 0; c < 10; ++c) {
        Tensor x = Tensor::randn({rng.uniform_int(1, 4), rng.uniform_int(2, 7)}, rng, 3);
        Tensor y = softmax(g, x);
        const int64_t d = x.shape().back();
        for (int64_t r = 0; r < x.numel() / d; ++r) {
            scalar s = 0;
            for (int64_t i = 0; i < d; ++i) s += y.data()[static_cast<size_t>(r * d + i)];
            EXPECT_NEAR(s, 1, 1e-12);
        }
    }
}

// a 1x1 conv on a 1x1 spatial input must equal the reshaped linear layer
// exactly, including bias handling
TEST(ConvLinearDegeneracy, ExactEquality) {
    RngStream rng(8);
    const int64_t d = 5, k = 3;
    Tensor w = Tensor::randn({d, k}, rng);
    Tensor b = Tensor::randn({d}, rng);
    Tensor xv = Tensor::randn({k}, rng);

    Graph g;
    LinearLayer lin;
    lin.weight = w;
    lin.bias = b;
    Tensor ylin = linear_forward(g, lin, Tensor::from_data({1, k}, xv.data()));

    ConvLayer conv;
    conv.kernel = Tensor::from_data({d, k, 1, 1}, w.data());
    conv.bias = b;
    Tensor yconv = conv_forward(g, conv, Tensor::from_data({1, k, 1, 1}, xv.data()));

    ASSERT_EQ(ylin.numel(), yconv.numel());
    for (int64_t i = 0; i < d; ++i)
        EXPECT_EQ(ylin.data()[static_cast<size_t>(i)], yconv.data()[static_cast<size_t>(i)]);
}

TEST(FrozenLayers, NoGradFlowsToFrozenWeights) {
    RngStream rng(9);
    LinearLayer frozen = make_linear(3, 3, rng, true, /*frozen=*/true);
    Tensor x = Tensor::randn({2, 3}, rng);
    x.set_requires_grad(true);
    Graph g;
    Tensor y = mean_all(g, linear_forward(g, frozen, x));
    g.backward(y);
    EXPECT_TRUE(x.has_grad());
    EXPECT_FALSE(frozen.weight.has_grad());
}
