#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "refinelab/types.hpp"

namespace refinelab::nn {

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    int warmup_steps = 1000;
    double clip_norm = 1.0;

    void validate() const {
        if (lr <= 0 || beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1 || eps <= 0)
            throw config_error("bad optimizer config");
        if (warmup_steps < 0 || clip_norm <= 0) throw config_error("bad optimizer config");
    }
};

// AdamW with global-norm gradient clipping, linear warmup and decoupled
// weight decay. Deterministic: one flat pass over the parameter vector.
template <typename Real>
class AdamW {
public:
    AdamW() = default;
    AdamW(AdamWConfig cfg, size_t n_params)
        : cfg_(cfg), m_(n_params, Real(0)), v_(n_params, Real(0)) {
        cfg_.validate();
    }

    struct StepStats {
        double grad_norm = 0;   // pre-clip global norm
        double clip_scale = 1;  // applied to gradients before moments
        double lr = 0;          // effective learning rate this step
    };

    int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }
    const std::vector<Real>& moment1() const { return m_; }
    const std::vector<Real>& moment2() const { return v_; }
    void restore(int64_t step, std::vector<Real> m, std::vector<Real> v) {
        step_ = step;
        m_ = std::move(m);
        v_ = std::move(v);
    }

    StepStats step(std::vector<Real>& params, std::vector<Real>& grads) {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw input_error("optimizer size mismatch");
        ++step_;

        StepStats stats;
        double norm_sq = 0;
        for (Real g : grads) norm_sq += double(g) * double(g);
        stats.grad_norm = std::sqrt(norm_sq);
        if (!std::isfinite(stats.grad_norm))
            throw numeric_error("non-finite gradient norm at optimizer step " +
                                std::to_string(step_));
        stats.clip_scale =
            stats.grad_norm > cfg_.clip_norm ? cfg_.clip_norm / stats.grad_norm : 1.0;

        const double warm =
            cfg_.warmup_steps > 0 ? std::min(1.0, double(step_) / cfg_.warmup_steps) : 1.0;
        stats.lr = cfg_.lr * warm;

        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(step_));
        for (size_t i = 0; i < params.size(); ++i) {
            const double g = double(grads[i]) * stats.clip_scale;
            const double m = cfg_.beta1 * double(m_[i]) + (1.0 - cfg_.beta1) * g;
            const double v = cfg_.beta2 * double(v_[i]) + (1.0 - cfg_.beta2) * g * g;
            m_[i] = Real(m);
            v_[i] = Real(v);
            const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
            const double p = double(params[i]) -
                             stats.lr * (update + cfg_.weight_decay * double(params[i]));
            if (!std::isfinite(p))
                throw numeric_error("non-finite parameter after optimizer step " +
                                    std::to_string(step_));
            params[i] = Real(p);
        }
        return stats;
    }

private:
    AdamWConfig cfg_;
    std::vector<Real> m_, v_;
    int64_t step_ = 0;
};

}  // namespace refinelab::nn
