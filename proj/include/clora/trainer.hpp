#pragma once

// Adapter-only training: the base network stays frozen while the LoRA
// factors and mappers minimize the noise-prediction loss under conditioning
// dropout. Separate rng streams per concern (data order, timesteps, noise,
// dropout) keep every run independently reproducible and resumable.

#include <chrono>
#include <fstream>
#include <string>
#include <vector>

#include "clora/checkpoint.hpp"
#include "clora/dataset.hpp"
#include "clora/denoiser.hpp"
#include "clora/diffusion.hpp"

namespace clora {

struct TrainConfig {
    int64_t steps = 2000;
    int64_t batch_size = 4;
    scalar lr = scalar(1e-3);
    scalar weight_decay = scalar(0.01);
    scalar dropout_p = scalar(0.05);
    uint64_t seed = 11;
    int64_t log_every = 50;
    int64_t checkpoint_every = 1000;

    void validate() const {
        if (steps < 1 || batch_size < 1 || lr <= 0)
            detail::shape_fail("TrainConfig", "steps, batch size and lr must be positive");
        if (dropout_p < 0 || dropout_p > 1) detail::shape_fail("TrainConfig", "dropout outside [0,1]");
    }
};

// Decoupled-weight-decay optimizer state. Moment buffers are keyed by
// parameter name so they serialize alongside the adapter tensors.
struct OptimizerState {
    scalar lr = scalar(1e-3);
    scalar beta1 = scalar(0.9);
    scalar beta2 = scalar(0.999);
    scalar eps = scalar(1e-8);
    scalar weight_decay = scalar(0.01);
    int64_t step_count = 0;
    std::map<std::string, std::vector<scalar>> m, v;
};

// p <- p * (1 - lr*wd); then bias-corrected first/second moment update.
inline void optimizer_step(OptimizerState& opt, const std::vector<std::pair<std::string, Tensor>>& params) {
    opt.step_count++;
    const scalar bc1 = scalar(1) - std::pow(opt.beta1, static_cast<scalar>(opt.step_count));
    const scalar bc2 = scalar(1) - std::pow(opt.beta2, static_cast<scalar>(opt.step_count));
    for (const auto& [name, pt] : params) {
        Tensor p = pt;
        auto& pd = p.data();
        auto& m = opt.m[name];
        auto& v = opt.v[name];
        if (m.empty()) m.assign(pd.size(), 0);
        if (v.empty()) v.assign(pd.size(), 0);
        if (m.size() != pd.size())
            detail::shape_fail("optimizer_step", "moment size mismatch for " + name);
        const bool has_grad = p.has_grad();
        const std::vector<scalar>* gp = has_grad ? &p.grad() : nullptr;
        for (size_t i = 0; i < pd.size(); ++i) {
            const scalar g = gp ? (*gp)[i] : scalar(0);
            if (!std::isfinite(g)) detail::shape_fail("optimizer_step", "non-finite gradient in " + name);
            pd[i] *= (scalar(1) - opt.lr * opt.weight_decay);
            m[i] = opt.beta1 * m[i] + (scalar(1) - opt.beta1) * g;
            v[i] = opt.beta2 * v[i] + (scalar(1) - opt.beta2) * g * g;
            const scalar mhat = m[i] / bc1;
            const scalar vhat = v[i] / bc2;
            pd[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
        p.zero_grad();
    }
}

struct TrainBatch {
    Tensor x0;  // (B, 3, H, W) in [-1, 1]
    std::vector<Condition> conds;
    std::vector<int64_t> labels;
};

// Training-side rng streams, serialized into checkpoints for exact resume.
struct TrainStreams {
    RngStream data, timestep, noise, dropout;

    static TrainStreams from_seed(uint64_t seed) {
        TrainStreams s;
        s.data = RngStream::child(seed, "data-order");
        s.timestep = RngStream::child(seed, "timestep");
        s.noise = RngStream::child(seed, "noise");
        s.dropout = RngStream::child(seed, "dropout");
        return s;
    }

    RngStateBlob to_blob() const {
        RngStateBlob b;
        b.streams = {{"data", data.state()},
                     {"timestep", timestep.state()},
                     {"noise", noise.state()},
                     {"dropout", dropout.state()}};
        return b;
    }

    void restore(const RngStateBlob& b) {
        auto need = [&](const char* name) {
            const auto* st = b.find(name);
            if (!st) throw IoError(std::string("rng stream missing from checkpoint: ") + name);
            return *st;
        };
        data.set_state(need("data"));
        timestep.set_state(need("timestep"));
        noise.set_state(need("noise"));
        dropout.set_state(need("dropout"));
    }
};

class Trainer {
  public:
    Trainer(const Denoiser& net, CondAdapter& adapter, const DiffusionSchedule& sched, const Dataset& data,
            const TrainConfig& cfg, const StyleEncoder& encoder)
        : net_(net), adapter_(adapter), sched_(sched), data_(data), cfg_(cfg), encoder_(encoder) {
        cfg.validate();
        streams_ = TrainStreams::from_seed(cfg.seed);
        opt_.lr = cfg.lr;
        opt_.weight_decay = cfg.weight_decay;
        params_ = adapter.named_params();
    }

    int64_t step_count() const { return opt_.step_count; }
    OptimizerState& optimizer() { return opt_; }
    TrainStreams& streams() { return streams_; }
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

    TrainBatch draw_batch() {
        TrainBatch b;
        const int64_t B = cfg_.batch_size;
        const int64_t H = data_.image_size;
        b.x0 = Tensor::zeros({B, 3, H, H});
        for (int64_t i = 0; i < B; ++i) {
            const int64_t idx = streams_.data.uniform_int(0, data_.size() - 1);
            Tensor xi = image_to_tensor(data_.images[static_cast<size_t>(idx)]);
            std::copy(xi.data().begin(), xi.data().end(), b.x0.data().begin() + i * 3 * H * H);
            b.labels.push_back(data_.label(idx));
            if (adapter_.kind == ConditionKind::structure)
                b.conds.push_back(Condition::structure(map_to_tensor(data_.maps[static_cast<size_t>(idx)])));
            else
                b.conds.push_back(Condition::style(encoder_.embed(data_.descriptors[static_cast<size_t>(idx)])));
        }
        return b;
    }

    // One optimization step: sample t and noise, drop conditions, forward,
    // backward, update. Returns the loss value.
    scalar train_step(const TrainBatch& batch) {
        const int64_t B = batch.x0.dim(0);
        std::vector<int64_t> ts;
        for (int64_t i = 0; i < B; ++i) ts.push_back(streams_.timestep.uniform_int(1, sched_.T));
        Tensor eps = Tensor::randn(batch.x0.shape(), streams_.noise);
        Tensor x_t = add_noise_batch(sched_, batch.x0, eps, ts);

        std::vector<Condition> conds = drop_conditions(batch.conds, cfg_.dropout_p, streams_.dropout);
        std::vector<int64_t> labels = batch.labels;
        for (auto& l : labels)
            if (streams_.dropout.bernoulli(cfg_.dropout_p)) l = 0;  // prompt dropout

        Graph g;
        BoundAdapter bound{&adapter_, conds};
        Tensor eps_hat = denoise_forward(g, net_, {bound}, x_t, ts, labels);
        Tensor loss = simple_loss(g, eps, eps_hat);
        const scalar lv = loss.item();
        if (!std::isfinite(lv)) {
            scalar max_act = 0;
            for (scalar v : eps_hat.data()) max_act = std::max(max_act, std::fabs(v));
            detail::shape_fail("train_step", "non-finite loss at step " + std::to_string(opt_.step_count + 1) +
                                                 " (t=" + join(ts) + ", max |eps_hat|=" +
                                                 std::to_string(static_cast<double>(max_act)) + ")");
        }
        g.backward(loss);
        optimizer_step(opt_, params_);
        return lv;
    }

    // Full loop with CSV metrics ("step,loss,lr,wallclock_ms") and periodic
    // checkpoints. Returns the final loss.
    scalar run(int64_t steps, const std::string& metrics_path = "", const std::string& ckpt_path = "",
               uint64_t config_digest = 0, uint64_t arch = 0) {
        std::ofstream log;
        if (!metrics_path.empty()) {
            const bool fresh = opt_.step_count == 0;
            log.open(metrics_path, fresh ? std::ios::out : std::ios::app);
            if (!log) throw IoError("cannot write metrics log " + metrics_path);
            if (fresh) log << "step,loss,lr,wallclock_ms\n";
        }
        const auto t0 = std::chrono::steady_clock::now();
        scalar last = 0;
        for (int64_t i = 0; i < steps; ++i) {
            TrainBatch b = draw_batch();
            last = train_step(b);
            const int64_t step = opt_.step_count;
            if (log && (step % cfg_.log_every == 0 || i + 1 == steps)) {
                const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count();
                log << step << "," << static_cast<double>(last) << "," << static_cast<double>(opt_.lr) << ","
                    << ms << "\n";
                log.flush();
            }
            if (!ckpt_path.empty() && (step % cfg_.checkpoint_every == 0 || i + 1 == steps))
                save(ckpt_path, config_digest, arch);
        }
        return last;
    }

    Checkpoint to_checkpoint(uint64_t config_digest, uint64_t arch) const {
        Checkpoint ck;
        ck.config_digest = config_digest;
        ck.arch_digest = arch;
        ck.rng_blob = streams_.to_blob().encode();
        ck.tensors = params_;
        for (const auto& [name, t] : params_) {
            auto mit = opt_.m.find(name);
            if (mit == opt_.m.end()) continue;
            ck.tensors.emplace_back("opt/m/" + name, Tensor::from_data(t.shape(), mit->second));
            ck.tensors.emplace_back("opt/v/" + name, Tensor::from_data(t.shape(), opt_.v.at(name)));
        }
        ck.tensors.emplace_back("opt/step",
                                Tensor::from_data({1}, {static_cast<scalar>(opt_.step_count)}));
        return ck;
    }

    void save(const std::string& path, uint64_t config_digest, uint64_t arch) const {
        save_checkpoint(path, to_checkpoint(config_digest, arch));
    }

    void restore(const Checkpoint& ck) {
        restore_model_params(ck, params_);
        for (const auto& [name, t] : params_) {
            if (const Tensor* m = ck.find("opt/m/" + name)) opt_.m[name] = m->data();
            if (const Tensor* v = ck.find("opt/v/" + name)) opt_.v[name] = v->data();
        }
        if (const Tensor* st = ck.find("opt/step"))
            opt_.step_count = static_cast<int64_t>(st->data()[0]);
        streams_.restore(RngStateBlob::decode(ck.rng_blob));
    }

  private:
    const Denoiser& net_;
    CondAdapter& adapter_;
    const DiffusionSchedule& sched_;
    const Dataset& data_;
    TrainConfig cfg_;
    const StyleEncoder& encoder_;
    TrainStreams streams_;
    OptimizerState opt_;
    std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace clora
