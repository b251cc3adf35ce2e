#pragma once

// Test-only reference implementations, kept deliberately independent of the
// library code paths they check.

#include <cmath>
#include <vector>

#include "clora/tensor.hpp"

namespace oracle {

using clora::scalar;

// Direct-summation cross-correlation with plain nested loops over output
// coordinates (the library accumulates in a different loop nesting).
inline std::vector<scalar> naive_conv2d(const std::vector<scalar>& x, int64_t B, int64_t ci, int64_t H, int64_t W,
                                        const std::vector<scalar>& k, int64_t co, int64_t kh, int64_t kw,
                                        int64_t stride, int64_t pad, int64_t& Ho, int64_t& Wo) {
    Ho = (H + 2 * pad - kh) / stride + 1;
    Wo = (W + 2 * pad - kw) / stride + 1;
    std::vector<scalar> out(static_cast<size_t>(B * co * Ho * Wo), 0);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < co; ++oc)
            for (int64_t oy = 0; oy < Ho; ++oy)
                for (int64_t ox = 0; ox < Wo; ++ox) {
                    scalar acc = 0;
                    for (int64_t ic = 0; ic < ci; ++ic)
                        for (int64_t r = 0; r < kh; ++r)
                            for (int64_t c = 0; c < kw; ++c) {
                                const int64_t iy = oy * stride - pad + r;
                                const int64_t ix = ox * stride - pad + c;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += k[static_cast<size_t>(((oc * ci + ic) * kh + r) * kw + c)] *
                                       x[static_cast<size_t>(((b * ci + ic) * H + iy) * W + ix)];
                            }
                    out[static_cast<size_t>(((b * co + oc) * Ho + oy) * Wo + ox)] = acc;
                }
    return out;
}

// Scalar-by-scalar single-head attention for a handful of tokens:
// out[i] = sum_j softmax_j(q_i . k_j / sqrt(d)) v_j
inline std::vector<std::vector<scalar>> naive_attention(const std::vector<std::vector<scalar>>& q,
                                                        const std::vector<std::vector<scalar>>& k,
                                                        const std::vector<std::vector<scalar>>& v,
                                                        scalar head_dim) {
    const size_t T = q.size(), S = k.size(), d = q[0].size(), dv = v[0].size();
    std::vector<std::vector<scalar>> out(T, std::vector<scalar>(dv, 0));
    for (size_t i = 0; i < T; ++i) {
        std::vector<scalar> logits(S, 0);
        for (size_t j = 0; j < S; ++j) {
            scalar dot = 0;
            for (size_t l = 0; l < d; ++l) dot += q[i][l] * k[j][l];
            logits[j] = dot / std::sqrt(head_dim);
        }
        scalar mx = logits[0];
        for (scalar lv : logits) mx = std::max(mx, lv);
        scalar denom = 0;
        std::vector<scalar> w(S);
        for (size_t j = 0; j < S; ++j) {
            w[j] = std::exp(logits[j] - mx);
            denom += w[j];
        }
        for (size_t j = 0; j < S; ++j)
            for (size_t l = 0; l < dv; ++l) out[i][l] += (w[j] / denom) * v[j][l];
    }
    return out;
}

// Singular values of an (m x n) matrix via a cyclic Jacobi eigensolver on
// the n x n Gram matrix. Good enough for the tiny rank checks in tests.
inline std::vector<scalar> singular_values(const std::vector<scalar>& a, int64_t m, int64_t n) {
    std::vector<scalar> gram(static_cast<size_t>(n * n), 0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            scalar acc = 0;
            for (int64_t r = 0; r < m; ++r)
                acc += a[static_cast<size_t>(r * n + i)] * a[static_cast<size_t>(r * n + j)];
            gram[static_cast<size_t>(i * n + j)] = acc;
        }
    for (int sweep = 0; sweep < 60; ++sweep) {
        scalar off = 0;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) off += std::fabs(gram[static_cast<size_t>(p * n + q)]);
        if (off < scalar(1e-14)) break;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                const scalar apq = gram[static_cast<size_t>(p * n + q)];
                if (std::fabs(apq) < scalar(1e-300)) continue;
                const scalar app = gram[static_cast<size_t>(p * n + p)];
                const scalar aqq = gram[static_cast<size_t>(q * n + q)];
                const scalar theta = (aqq - app) / (2 * apq);
                const scalar t = (theta >= 0 ? scalar(1) : scalar(-1)) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1));
                const scalar c = scalar(1) / std::sqrt(t * t + 1);
                const scalar s = t * c;
                for (int64_t i = 0; i < n; ++i) {
                    const scalar aip = gram[static_cast<size_t>(i * n + p)];
                    const scalar aiq = gram[static_cast<size_t>(i * n + q)];
                    gram[static_cast<size_t>(i * n + p)] = c * aip - s * aiq;
                    gram[static_cast<size_t>(i * n + q)] = s * aip + c * aiq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const scalar api = gram[static_cast<size_t>(p * n + i)];
                    const scalar aqi = gram[static_cast<size_t>(q * n + i)];
                    gram[static_cast<size_t>(p * n + i)] = c * api - s * aqi;
                    gram[static_cast<size_t>(q * n + i)] = s * api + c * aqi;
                }
            }
    }
    std::vector<scalar> sv;
    for (int64_t i = 0; i < n; ++i)
        sv.push_back(std::sqrt(std::max(scalar(0), gram[static_cast<size_t>(i * n + i)])));
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

}  // namespace oracle
