#pragma once

// Noise schedule, forward noising, the simple noise-prediction loss,
// classifier-free guidance, conditioning dropout and deterministic DDIM
// sampling.

#include <vector>

#include "clora/denoiser.hpp"
#include "clora/tensor.hpp"

namespace clora {

// T timesteps with cumulative noise levels abar_t, strictly decreasing in
// (0, 1). abar is stored 0-indexed with abar[0] = 1 (the data itself), so
// abar_t for t in [1, T] lives at index t.
struct DiffusionSchedule {
    int64_t T = 1000;
    std::vector<scalar> abar;  // length T + 1, abar[0] == 1

    scalar alpha_bar(int64_t t) const {
        if (t < 0 || t > T) detail::shape_fail("alpha_bar", "t=" + std::to_string(t) + " outside [0," +
                                                                std::to_string(T) + "]");
        return abar[static_cast<size_t>(t)];
    }
};

// Linear beta schedule; abar_t = prod_{s<=t} (1 - beta_s).
inline DiffusionSchedule make_schedule(int64_t T = 1000, scalar beta_start = scalar(1e-4),
                                       scalar beta_end = scalar(0.02)) {
    if (T < 1) detail::shape_fail("make_schedule", "T must be >= 1");
    DiffusionSchedule s;
    s.T = T;
    s.abar.resize(static_cast<size_t>(T) + 1);
    s.abar[0] = 1;
    scalar prod = 1;
    for (int64_t t = 1; t <= T; ++t) {
        const scalar beta =
            T == 1 ? beta_start : beta_start + (beta_end - beta_start) * static_cast<scalar>(t - 1) /
                                                   static_cast<scalar>(T - 1);
        prod *= (scalar(1) - beta);
        s.abar[static_cast<size_t>(t)] = prod;
        if (prod <= 0 || prod >= 1 || prod >= s.abar[static_cast<size_t>(t - 1)])
            detail::shape_fail("make_schedule", "alpha_bar not strictly decreasing in (0,1) at t=" +
                                                    std::to_string(t));
    }
    return s;
}

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, for t in [1, T].
inline Tensor add_noise(const DiffusionSchedule& sched, const Tensor& x0, const Tensor& eps, int64_t t) {
    if (t < 1 || t > sched.T)
        detail::shape_fail("add_noise", "t=" + std::to_string(t) + " outside [1," + std::to_string(sched.T) + "]");
    if (x0.shape() != eps.shape())
        detail::shape_fail("add_noise", "noise shape " + shape_str(eps.shape()) + " != data shape " +
                                            shape_str(x0.shape()));
    const scalar a = std::sqrt(sched.alpha_bar(t));
    const scalar b = std::sqrt(scalar(1) - sched.alpha_bar(t));
    Tensor out = Tensor::zeros(x0.shape());
    const auto& xd = x0.data();
    const auto& ed = eps.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = a * xd[i] + b * ed[i];
    return out;
}

// Per-sample timesteps over a batch (B, ...).
inline Tensor add_noise_batch(const DiffusionSchedule& sched, const Tensor& x0, const Tensor& eps,
                              const std::vector<int64_t>& ts) {
    const int64_t B = x0.dim(0);
    if (static_cast<int64_t>(ts.size()) != B) detail::shape_fail("add_noise_batch", "one timestep per sample");
    Tensor out = Tensor::zeros(x0.shape());
    const int64_t n = x0.numel() / B;
    for (int64_t b = 0; b < B; ++b) {
        const scalar a = std::sqrt(sched.alpha_bar(ts[static_cast<size_t>(b)]));
        const scalar bb = std::sqrt(scalar(1) - sched.alpha_bar(ts[static_cast<size_t>(b)]));
        const scalar* X = x0.data().data() + b * n;
        const scalar* E = eps.data().data() + b * n;
        scalar* O = out.data().data() + b * n;
        for (int64_t i = 0; i < n; ++i) O[i] = a * X[i] + bb * E[i];
    }
    return out;
}

// Mean squared difference over all elements (batch mean).
inline Tensor simple_loss(Graph& g, const Tensor& eps, const Tensor& eps_hat) {
    if (eps.shape() != eps_hat.shape())
        detail::shape_fail("simple_loss", "shape mismatch " + shape_str(eps.shape()) + " vs " +
                                              shape_str(eps_hat.shape()));
    Tensor d = sub(g, eps_hat, eps);
    return mean_all(g, mul(g, d, d));
}

struct GuidanceConfig {
    scalar w = scalar(7.5);
};

// eps_hat = w * eps_cond + (1 - w) * eps_uncond
inline Tensor cfg_combine(const Tensor& eps_c, const Tensor& eps_u, scalar w) {
    if (eps_c.shape() != eps_u.shape())
        detail::shape_fail("cfg_combine", "branch shapes differ: " + shape_str(eps_c.shape()) + " vs " +
                                              shape_str(eps_u.shape()));
    Tensor out = Tensor::zeros(eps_c.shape());
    const auto& c = eps_c.data();
    const auto& u = eps_u.data();
    auto& o = out.data();
    for (size_t i = 0; i < o.size(); ++i) o[i] = w * c[i] + (scalar(1) - w) * u[i];
    return out;
}

// Each condition is independently replaced by its null variant with
// probability p; one draw per condition from the supplied stream.
inline std::vector<Condition> drop_conditions(const std::vector<Condition>& conds, scalar p, RngStream& rng) {
    if (p < 0 || p > 1) detail::shape_fail("drop_conditions", "p outside [0,1]");
    std::vector<Condition> out;
    out.reserve(conds.size());
    for (const auto& c : conds) out.push_back(rng.bernoulli(p) ? null_like(c) : c);
    return out;
}

// Deterministic (eta = 0) DDIM update:
//   x0_hat  = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
//   x_{t'}  = sqrt(abar_{t'}) x0_hat + sqrt(1 - abar_{t'}) eps_hat
// t' == t returns x_t unchanged (the update is the identity there).
inline Tensor ddim_step(const DiffusionSchedule& sched, const Tensor& x_t, const Tensor& eps_hat, int64_t t,
                        int64_t t_prev) {
    if (t_prev > t) detail::shape_fail("ddim_step", "t' must not exceed t");
    if (x_t.shape() != eps_hat.shape())
        detail::shape_fail("ddim_step", "prediction shape " + shape_str(eps_hat.shape()) + " != state shape " +
                                            shape_str(x_t.shape()));
    const scalar at = sched.alpha_bar(t);
    if (at == 0) detail::shape_fail("ddim_step", "alpha_bar(t) == 0");
    if (t_prev == t) return x_t;
    const scalar ap = sched.alpha_bar(t_prev);
    const scalar sa_t = std::sqrt(at), sb_t = std::sqrt(scalar(1) - at);
    const scalar sa_p = std::sqrt(ap), sb_p = std::sqrt(scalar(1) - ap);
    Tensor out = Tensor::zeros(x_t.shape());
    const auto& x = x_t.data();
    const auto& e = eps_hat.data();
    auto& o = out.data();
    for (size_t i = 0; i < o.size(); ++i) {
        const scalar x0 = (x[i] - sb_t * e[i]) / sa_t;
        o[i] = sa_p * x0 + sb_p * e[i];
    }
    return out;
}

struct SampleRequest {
    int64_t steps = 50;
    GuidanceConfig guidance;
    uint64_t seed = 0;
    bool clip_x0 = true;  // clamp the x0 estimate to [-1, 1] inside the loop
};

// Evenly spaced timestep subsequence from T down to 1 (inclusive).
inline std::vector<int64_t> sample_timesteps(int64_t T, int64_t steps) {
    if (steps < 1) detail::shape_fail("sample_timesteps", "steps must be >= 1");
    std::vector<int64_t> ts;
    if (steps == 1) {
        ts.push_back(T);
        return ts;
    }
    int64_t prev = 0;
    for (int64_t i = 0; i < steps; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(steps - 1);
        int64_t t = T - static_cast<int64_t>(std::llround(f * static_cast<double>(T - 1)));
        if (!ts.empty() && t >= prev) t = prev - 1;  // keep strictly decreasing under rounding
        if (t < 1) t = 1;
        ts.push_back(t);
        prev = t;
    }
    return ts;
}

// Deterministic DDIM sampling from seeded Gaussian noise. CFG applies to the
// prompt (labels) and style conditions only; structure conditions are fed
// identically to both branches, so structure-only sampling is w-invariant.
// The unconditional branch is skipped entirely when w == 1 or when nothing
// differs between branches.
inline Tensor sample_images(const Denoiser& net, const std::vector<BoundAdapter>& adapters,
                     const DiffusionSchedule& sched, const std::vector<int64_t>& labels,
                     const SampleRequest& req) {
    const int64_t B = static_cast<int64_t>(labels.size());
    const int64_t H = net.cfg.image_size;
    RngStream rng = RngStream::child(req.seed, "sample-noise");
    Tensor x = Tensor::randn({B, net.cfg.in_channels, H, H}, rng);

    // unconditional branch: null labels, null style conditions, structure kept
    std::vector<int64_t> null_labels(static_cast<size_t>(B), 0);
    std::vector<BoundAdapter> uncond;
    bool branches_differ = false;
    for (int64_t l : labels) branches_differ = branches_differ || l != 0;
    for (const auto& b : adapters) {
        BoundAdapter u;
        u.adapter = b.adapter;
        if (b.adapter->kind == ConditionKind::style) {
            for (const auto& c : b.conds) {
                u.conds.push_back(null_like(c));
                branches_differ = branches_differ || !c.is_null;
            }
        } else {
            u.conds = b.conds;
        }
        uncond.push_back(std::move(u));
    }
    const bool use_cfg = req.guidance.w != scalar(1) && branches_differ;

    Graph quiet;
    quiet.recording = false;
    const auto ts = sample_timesteps(sched.T, req.steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        const int64_t t = ts[i];
        const int64_t t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        std::vector<int64_t> tb(static_cast<size_t>(B), t);
        Tensor eps_c = denoise_forward(quiet, net, adapters, x, tb, labels);
        Tensor eps_hat = eps_c;
        if (use_cfg) {
            Tensor eps_u = denoise_forward(quiet, net, uncond, x, tb, null_labels);
            eps_hat = cfg_combine(eps_c, eps_u, req.guidance.w);
        }
        if (req.clip_x0 && t_prev != t) {
            // clamp the implied x0 estimate, then renoise to t'
            const scalar at = sched.alpha_bar(t);
            const scalar sa_t = std::sqrt(at), sb_t = std::sqrt(scalar(1) - at);
            const scalar sa_p = std::sqrt(sched.alpha_bar(t_prev));
            const scalar sb_p = std::sqrt(scalar(1) - sched.alpha_bar(t_prev));
            Tensor next = Tensor::zeros(x.shape());
            const auto& xd = x.data();
            const auto& ed = eps_hat.data();
            auto& nd = next.data();
            for (size_t j = 0; j < nd.size(); ++j) {
                scalar x0 = (xd[j] - sb_t * ed[j]) / sa_t;
                x0 = std::min(scalar(1), std::max(scalar(-1), x0));
                nd[j] = sa_p * x0 + sb_p * ed[j];
            }
            x = next;
        } else {
            x = ddim_step(sched, x, eps_hat, t, t_prev);
        }
        quiet.clear();
    }
    return x;
}

}  // namespace clora
