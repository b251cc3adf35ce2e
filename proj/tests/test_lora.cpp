#include <gtest/gtest.h>

#include "clora/lora.hpp"
#include "test_oracles.hpp"

using namespace clora;

namespace {

LinearLayer identity_linear(int64_t n) {
    LinearLayer l;
    l.weight = Tensor::zeros({n, n});
    for (int64_t i = 0; i < n; ++i) l.weight.data()[static_cast<size_t>(i * n + i)] = 1;
    return l;
}

}  // namespace

TEST(AffineModulate, IdentityAffine) {
    Graph g;
    Tensor z = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    ModulationSignal sig{Tensor::full({3}, 1), Tensor::zeros({3}), false};
    Tensor y = affine_modulate(g, z, sig);
    EXPECT_EQ(y.data(), z.data());
}

TEST(AffineModulate, ZeroGammaGivesBeta) {
    Graph g;
    Tensor z = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    ModulationSignal sig{Tensor::zeros({2}), Tensor::from_data({2}, {-1, 3}), false};
    Tensor y = affine_modulate(g, z, sig);
    EXPECT_DOUBLE_EQ(y.data()[0], -1);
    EXPECT_DOUBLE_EQ(y.data()[1], 3);
    EXPECT_DOUBLE_EQ(y.data()[2], -1);
    EXPECT_DOUBLE_EQ(y.data()[3], 3);
}

TEST(AffineModulate, HandArithmetic) {
    Graph g;
    Tensor z = Tensor::from_data({2}, {1, 2});
    ModulationSignal sig{Tensor::from_data({2}, {2, 3}), Tensor::from_data({2}, {-1, 0}), false};
    Tensor y = affine_modulate(g, z, sig);
    EXPECT_DOUBLE_EQ(y.data()[0], 1);
    EXPECT_DOUBLE_EQ(y.data()[1], 6);
}

TEST(AffineModulate, ShapeMismatch) {
    Graph g;
    Tensor z = Tensor::zeros({2, 3});
    ModulationSignal sig{Tensor::zeros({4}), Tensor::zeros({4}), false};
    EXPECT_THROW(affine_modulate(g, z, sig), ShapeError);
}

TEST(LoraLinear, ZeroInitIsNoOp) {
    RngStream rng(1);
    LinearLayer base = make_linear(4, 6, rng);
    LinearLora lora = make_linear_lora(4, 6, 2, rng);
    Tensor x = Tensor::randn({3, 6}, rng);
    Graph g;
    Tensor with = lora_linear_forward(g, base, lora, 1.0, x);
    Tensor without = linear_forward(g, base, x);
    for (int64_t i = 0; i < with.numel(); ++i)
        EXPECT_EQ(std::fabs(with.data()[static_cast<size_t>(i)] - without.data()[static_cast<size_t>(i)]), 0);
}

TEST(LoraLinear, LambdaZeroIsNoOp) {
    RngStream rng(2);
    LinearLayer base = make_linear(4, 6, rng);
    LinearLora lora = make_linear_lora(4, 6, 2, rng);
    // make B nonzero so only lambda turns the branch off
    for (auto& v : lora.B.data()) v = 0.5;
    Tensor x = Tensor::randn({1, 6}, rng);
    Graph g;
    Tensor with = lora_linear_forward(g, base, lora, 0.0, x);
    Tensor without = linear_forward(g, base, x);
    for (int64_t i = 0; i < with.numel(); ++i)
        EXPECT_EQ(std::fabs(with.data()[static_cast<size_t>(i)] - without.data()[static_cast<size_t>(i)]), 0);
}

TEST(LoraLinear, HandArithmetic) {
    Graph g;
    LinearLayer base = identity_linear(2);
    LinearLora lora;
    lora.A = Tensor::from_data({1, 2}, {1, 0});
    lora.B = Tensor::from_data({2, 1}, {1, 0});
    Tensor y = lora_linear_forward(g, base, lora, 1.0, Tensor::from_data({1, 2}, {3, 4}));
    EXPECT_DOUBLE_EQ(y.data()[0], 6);
    EXPECT_DOUBLE_EQ(y.data()[1], 4);
}

TEST(LoraLinear, RankBoundEnforced) {
    RngStream rng(3);
    EXPECT_THROW(make_linear_lora(4, 6, 3, rng), ShapeError);   // min(4,6)/2 = 2
    EXPECT_THROW(make_linear_lora(4, 6, 0, rng), ShapeError);
    EXPECT_NO_THROW(make_linear_lora(8, 8, 4, rng));
}

TEST(CondLoraLinear, IdentityAffineEqualsPlainLora) {
    RngStream rng(4);
    LinearLayer base = make_linear(6, 8, rng);
    LinearLora lora = make_linear_lora(6, 8, 3, rng);
    for (auto& v : lora.B.data()) v = 0.25;  // exercise a live adapter branch
    Tensor x = Tensor::randn({2, 8}, rng);
    Graph g;
    Tensor plain = lora_linear_forward(g, base, lora, 0.7, x);
    Tensor conded = cond_lora_linear_forward(g, base, lora, identity_signal(3), 0.7, x);
    for (int64_t i = 0; i < plain.numel(); ++i)
        EXPECT_EQ(plain.data()[static_cast<size_t>(i)], conded.data()[static_cast<size_t>(i)]);
}

TEST(CondLoraLinear, ZeroBIgnoresSignal) {
    RngStream rng(5);
    LinearLayer base = make_linear(4, 8, rng);
    LinearLora lora = make_linear_lora(4, 8, 2, rng);
    ModulationSignal wild{Tensor::from_data({2}, {13, -7}), Tensor::from_data({2}, {100, 5}), false};
    Tensor x = Tensor::randn({1, 8}, rng);
    Graph g;
    Tensor with = cond_lora_linear_forward(g, base, lora, wild, 1.0, x);
    Tensor without = linear_forward(g, base, x);
    for (int64_t i = 0; i < with.numel(); ++i)
        EXPECT_EQ(std::fabs(with.data()[static_cast<size_t>(i)] - without.data()[static_cast<size_t>(i)]), 0);
}

TEST(CondLoraLinear, HandArithmeticWithSignal) {
    Graph g;
    LinearLayer base = identity_linear(2);
    LinearLora lora;
    lora.A = Tensor::from_data({1, 2}, {1, 0});
    lora.B = Tensor::from_data({2, 1}, {1, 0});
    ModulationSignal sig{Tensor::from_data({1}, {2}), Tensor::from_data({1}, {1}), false};
    Tensor y = cond_lora_linear_forward(g, base, lora, sig, 1.0, Tensor::from_data({1, 2}, {3, 4}));
    // W0 x = [3,4]; A x = 3; 2*3+1 = 7; B*7 = [7,0]
    EXPECT_DOUBLE_EQ(y.data()[0], 10);
    EXPECT_DOUBLE_EQ(y.data()[1], 4);
}

TEST(CondLoraLinear, SpatialSignalRejected) {
    RngStream rng(6);
    LinearLayer base = make_linear(4, 8, rng);
    LinearLora lora = make_linear_lora(4, 8, 2, rng);
    ModulationSignal sp{Tensor::zeros({2, 3, 3}), Tensor::zeros({2, 3, 3}), true};
    Graph g;
    EXPECT_THROW(cond_lora_linear_forward(g, base, lora, sp, 1.0, Tensor::zeros({1, 8})), ShapeError);
}

TEST(CondLoraConv, ZeroKBIsBaseConv) {
    RngStream rng(7);
    ConvLayer base = make_conv(4, 3, 3, 3, 1, 1, rng);
    ConvLora lora = make_conv_lora(base, 2, rng);
    Tensor x = Tensor::randn({1, 3, 5, 5}, rng);
    ModulationSignal sig{Tensor::randn({2, 5, 5}, rng), Tensor::randn({2, 5, 5}, rng), true};
    Graph g;
    Tensor with = cond_lora_conv_forward(g, base, lora, sig, 1.0, x);
    Tensor without = conv_forward(g, base, x);
    for (int64_t i = 0; i < with.numel(); ++i)
        EXPECT_EQ(std::fabs(with.data()[static_cast<size_t>(i)] - without.data()[static_cast<size_t>(i)]), 0);
}

// 1x1 kernels on a 1x1 spatial input reduce to the linear adapter exactly
TEST(CondLoraConv, DegeneratesToLinearAdapter) {
    RngStream rng(8);
    const int64_t d = 6, k = 4, r = 2;
    LinearLayer lbase = make_linear(d, k, rng, false);
    LinearLora llora = make_linear_lora(d, k, r, rng);
    for (auto& v : llora.B.data()) v = rng.normal();

    ConvLayer cbase;
    cbase.kernel = Tensor::from_data({d, k, 1, 1}, lbase.weight.data());
    ConvLora clora;
    clora.KA = Tensor::from_data({r, k, 1, 1}, llora.A.data());
    clora.KB = Tensor::from_data({d, r, 1, 1}, llora.B.data());

    Tensor xv = Tensor::randn({k}, rng);
    Tensor gam = Tensor::randn({r}, rng);
    Tensor bet = Tensor::randn({r}, rng);
    ModulationSignal sig{gam, bet, false};

    Graph g;
    Tensor ylin =
        cond_lora_linear_forward(g, lbase, llora, sig, 0.8, Tensor::from_data({1, k}, xv.data()));
    Tensor yconv =
        cond_lora_conv_forward(g, cbase, clora, sig, 0.8, Tensor::from_data({1, k, 1, 1}, xv.data()));
    for (int64_t i = 0; i < d; ++i)
        EXPECT_EQ(ylin.data()[static_cast<size_t>(i)], yconv.data()[static_cast<size_t>(i)]);
}

// hand-set spatial modulation against a direct-summation oracle
TEST(CondLoraConv, MatchesNaiveOracle) {
    RngStream rng(9);
    const int64_t H = 4, r = 1;
    ConvLayer base = make_conv(1, 1, 3, 3, 1, 1, rng);
    ConvLora lora = make_conv_lora(base, r, rng);
    for (auto& v : lora.KB.data()) v = rng.normal();
    Tensor x = Tensor::randn({1, 1, H, H}, rng);
    Tensor gam = Tensor::randn({r, H, H}, rng);
    Tensor bet = Tensor::randn({r, H, H}, rng);
    Graph g;
    Tensor y = cond_lora_conv_forward(g, base, lora, ModulationSignal{gam, bet, true}, 1.0, x);

    int64_t ho, wo;
    auto base_out = oracle::naive_conv2d(x.data(), 1, 1, H, H, base.kernel.data(), 1, 3, 3, 1, 1, ho, wo);
    auto z = oracle::naive_conv2d(x.data(), 1, 1, H, H, lora.KA.data(), r, 3, 3, 1, 1, ho, wo);
    for (size_t i = 0; i < z.size(); ++i) z[i] = gam.data()[i] * z[i] + bet.data()[i];
    auto delta = oracle::naive_conv2d(z, 1, r, H, H, lora.KB.data(), 1, 1, 1, 1, 0, ho, wo);
    for (size_t i = 0; i < base_out.size(); ++i) {
        const scalar want = base_out[i] + delta[i] + base.bias.data()[0];
        EXPECT_NEAR(y.data()[i], want, 1e-12);
    }
}

TEST(CondLoraConv, SpatialDimMismatchRejected) {
    RngStream rng(10);
    ConvLayer base = make_conv(2, 1, 3, 3, 1, 1, rng);
    ConvLora lora = make_conv_lora(base, 1, rng);
    ModulationSignal bad{Tensor::zeros({1, 3, 3}), Tensor::zeros({1, 3, 3}), true};
    Graph g;
    EXPECT_THROW(cond_lora_conv_forward(g, base, lora, bad, 1.0, Tensor::zeros({1, 1, 5, 5})), ShapeError);
}

// output(lambda) - base is exactly linear in lambda
TEST(LambdaContract, ThreePointCollinearity) {
    RngStream rng(11);
    LinearLayer base = make_linear(6, 8, rng);
    LinearLora lora = make_linear_lora(6, 8, 3, rng);
    for (auto& v : lora.B.data()) v = rng.normal();
    Tensor x = Tensor::randn({2, 8}, rng);
    ModulationSignal sig{Tensor::randn({3}, rng), Tensor::randn({3}, rng), false};

    auto out = [&](scalar lam) {
        Graph g;
        return cond_lora_linear_forward(g, base, lora, sig, lam, x);
    };
    Tensor y1 = out(0.5), y2 = out(1.25), y3 = out(2.0);
    // lambda2 = (lambda1 + lambda3)/2  =>  y2 == (y1 + y3)/2
    for (int64_t i = 0; i < y1.numel(); ++i) {
        const scalar mid = (y1.data()[static_cast<size_t>(i)] + y3.data()[static_cast<size_t>(i)]) / 2;
        EXPECT_NEAR(y2.data()[static_cast<size_t>(i)], mid, 1e-10);
    }
}

// deltas across arbitrary signals stay inside B's column space (rank <= r)
TEST(RankProperty, DeltasSpanAtMostR) {
    RngStream rng(12);
    const int64_t d = 6, k = 6, r = 2, trials = 10;
    LinearLayer base = make_linear(d, k, rng);
    LinearLora lora = make_linear_lora(d, k, r, rng);
    for (auto& v : lora.B.data()) v = rng.normal();
    Tensor x = Tensor::randn({1, k}, rng);

    std::vector<scalar> deltas(static_cast<size_t>(d * trials), 0);
    Graph g;
    Tensor base_out = linear_forward(g, base, x);
    for (int64_t t = 0; t < trials; ++t) {
        ModulationSignal sig{Tensor::randn({r}, rng), Tensor::randn({r}, rng), false};
        Tensor y = cond_lora_linear_forward(g, base, lora, sig, 1.0, x);
        for (int64_t i = 0; i < d; ++i)
            deltas[static_cast<size_t>(i * trials + t)] =
                y.data()[static_cast<size_t>(i)] - base_out.data()[static_cast<size_t>(i)];
    }
    auto sv = oracle::singular_values(deltas, d, trials);
    int rank = 0;
    for (scalar s : sv)
        if (s > 1e-6 * sv[0]) rank++;
    EXPECT_LE(rank, r);
    EXPECT_GE(rank, 1);  // live adapter actually moves the output
}
