#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "refinelab/dataset.hpp"
#include "refinelab/kernel.hpp"
#include "refinelab/losses.hpp"
#include "refinelab/nn/adamw.hpp"
#include "refinelab/nn/backbone.hpp"
#include "refinelab/nn/checkpoint.hpp"
#include "refinelab/paths.hpp"

namespace refinelab {

enum class TrainMode { baseline, adaptive, gidd };

inline const char* to_string(TrainMode m) {
    switch (m) {
        case TrainMode::baseline: return "baseline";
        case TrainMode::adaptive: return "adaptive";
        case TrainMode::gidd: return "gidd";
    }
    return "?";
}

inline TrainMode train_mode_from_string(const std::string& s) {
    if (s == "baseline") return TrainMode::baseline;
    if (s == "adaptive") return TrainMode::adaptive;
    if (s == "gidd") return TrainMode::gidd;
    throw config_error("unknown train mode: " + s);
}

struct TrainConfig {
    TrainMode mode = TrainMode::adaptive;
    int64_t steps = 3000;
    int batch_size = 64;
    int64_t checkpoint_every = 1000;
    int64_t log_every = 50;
    uint64_t seed = 1;
    Schedule schedule = Schedule::polynomial(2.0);
    double gidd_p_u_max = 0.2;
    LossConfig loss;
    nn::AdamWConfig optim;
    bool feed_time_adaptive = false;  // pass the path time into adaptive forwards
};

struct TrainRecord {
    int64_t step = 0;
    double total = 0, term1 = 0, term2 = 0, term3 = 0;
    double grad_norm = 0, lr = 0;
};

struct TrainStats {
    // fraction of non-clue tokens in training states that are neither mask
    // nor the solution token (the self-induced error exposure)
    double off_path_tokens = 0;
    double non_clue_tokens = 0;
    int64_t rollout_states = 0;
    int64_t total_states = 0;

    double off_path_fraction() const {
        return non_clue_tokens > 0 ? off_path_tokens / non_clue_tokens : 0.0;
    }
    double rollout_fraction() const {
        return total_states > 0 ? double(rollout_states) / double(total_states) : 0.0;
    }
};

// One training run: per step, draw a batch of instances and path times,
// build training states (path samples, plus gradient-free kernel draws in
// adaptive mode), evaluate the objective, and apply one optimizer step.
// All per-step randomness is derived from (seed, step), so interrupting and
// resuming from a checkpoint reproduces the uninterrupted run exactly.
template <typename Real>
class Trainer {
public:
    Trainer(const nn::Backbone<Real>& model, TrainConfig cfg, const Dataset& data)
        : model_(model), cfg_(cfg), data_(data), opt_(cfg.optim, model.n_params()) {
        cfg_.loss.validate();
        cfg_.optim.validate();
        if (data_.size() == 0) throw input_error("empty training dataset");
        vocab_ = data_.task.vocab();
        if (vocab_.size != model.config().vocab_size ||
            data_.task.d() != model.config().seq_len)
            throw config_error("model and dataset disagree on vocabulary or sequence length");
        if (cfg_.mode != TrainMode::adaptive &&
            model.config().variant != nn::Variant::baseline)
            throw config_error("cross-entropy training modes expect the baseline variant");
        if (cfg_.mode == TrainMode::adaptive &&
            model.config().variant != nn::Variant::adaptive)
            throw config_error("adaptive training expects the adaptive variant");
        params_ = model.init_params(derive_seed(cfg_.seed, 0xFFFF0001ULL));
        grads_.assign(model.n_params(), Real(0));
    }

    int64_t step_count() const { return step_; }
    const std::vector<Real>& params() const { return params_; }
    const TrainStats& stats() const { return stats_; }

    nn::Checkpoint<Real> make_checkpoint(std::map<std::string, std::string> meta) const {
        nn::Checkpoint<Real> ckpt;
        ckpt.meta = std::move(meta);
        ckpt.meta["train.step"] = std::to_string(step_);
        ckpt.meta["train.mode"] = to_string(cfg_.mode);
        ckpt.params = params_;
        ckpt.has_opt = true;
        ckpt.opt_step = opt_.step_count();
        ckpt.m = opt_.moment1();
        ckpt.v = opt_.moment2();
        return ckpt;
    }

    void restore(const nn::Checkpoint<Real>& ckpt) {
        if (!ckpt.has_opt) throw input_error("checkpoint has no optimizer state to resume from");
        params_ = ckpt.params;
        opt_.restore(ckpt.opt_step, ckpt.m, ckpt.v);
        step_ = ckpt.opt_step;
    }

    TrainRecord step() {
        Rng rng(derive_seed(cfg_.seed, uint64_t(step_)));
        Rng drop_rng(derive_seed(cfg_.seed, uint64_t(step_) | 0x8000000000000000ULL));
        const int B = cfg_.batch_size, d = model_.config().seq_len, N = vocab_.size;

        std::vector<const PuzzleInstance*> insts(B);
        std::vector<double> ts(B);
        for (int b = 0; b < B; ++b) insts[b] = &data_.instances[rng.below(data_.size())];
        for (int b = 0; b < B; ++b) ts[b] = rng.uniform01();

        nn::Batch batch;
        batch.B = B;
        batch.d = d;
        batch.tokens.resize(size_t(B) * d);
        batch.clues.resize(size_t(B) * d);
        std::vector<Token> x1(size_t(B) * d);
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < d; ++i) {
                batch.clues[size_t(b) * d + i] = insts[b]->clues[i];
                x1[size_t(b) * d + i] = insts[b]->x1[i];
            }

        LossGrads<Real> lg;
        nn::Activations<Real>& acts = loss_acts_;
        std::fill(grads_.begin(), grads_.end(), Real(0));

        if (cfg_.mode == TrainMode::adaptive) {
            build_adaptive_states(insts, ts, rng, batch);
            std::vector<double> tau_target(B);
            for (int b = 0; b < B; ++b) {
                SequenceState z(batch.tokens.begin() + size_t(b) * d,
                                batch.tokens.begin() + size_t(b + 1) * d);
                tau_target[b] = tau_true(z, *insts[b]);
            }
            if (cfg_.feed_time_adaptive) {
                batch.has_t = true;
                batch.t = ts;
            }
            model_.forward(params_, batch, true, &drop_rng, acts);
            lg = adaptive_loss_batch(cfg_.loss, B, d, N, acts.logits.data(), acts.conf.data(),
                                     acts.tau.data(), x1, batch.clues, tau_target);
            model_.backward(params_, batch, acts, lg.dlogits.data(), lg.dconf.data(),
                            lg.dtau.data(), grads_);
        } else {
            // masking (or generalized) path states with time conditioning
            GiddSchedule gidd{cfg_.schedule, cfg_.gidd_p_u_max};
            for (int b = 0; b < B; ++b) {
                SequenceState x_t =
                    cfg_.mode == TrainMode::gidd
                        ? sample_gidd_path(*insts[b], vocab_, gidd, ts[b], rng)
                        : sample_masking_path(*insts[b], vocab_, cfg_.schedule, ts[b], rng);
                for (int i = 0; i < d; ++i) batch.tokens[size_t(b) * d + i] = x_t[i];
            }
            batch.has_t = true;
            batch.t = ts;
            model_.forward(params_, batch, true, &drop_rng, acts);
            lg = baseline_ce_loss_batch(B, d, N, acts.logits.data(), x1, batch.clues);
            model_.backward(params_, batch, acts, lg.dlogits.data(), nullptr, nullptr, grads_);
        }

        auto opt_stats = opt_.step(params_, grads_);
        ++step_;

        TrainRecord rec;
        rec.step = step_;
        rec.total = lg.total;
        rec.term1 = lg.term1;
        rec.term2 = lg.term2;
        rec.term3 = lg.term3;
        rec.grad_norm = opt_stats.grad_norm;
        rec.lr = opt_stats.lr;
        if (!std::isfinite(rec.total))
            throw numeric_error("non-finite loss at step " + std::to_string(step_));
        return rec;
    }

private:
    const nn::Backbone<Real>& model_;
    TrainConfig cfg_;
    const Dataset& data_;
    Vocabulary vocab_;
    nn::AdamW<Real> opt_;
    std::vector<Real> params_;
    std::vector<Real> grads_;
    nn::Activations<Real> loss_acts_, sample_acts_;
    int64_t step_ = 0;
    TrainStats stats_;

    // Gradient-free on-policy construction, batched across the samples that
    // still need kernel draws. Rollout samples take up to rollout_len draws
    // with an early exit once the stop threshold fires (never on the first
    // draw, so every state is a fresh kernel sample).
    void build_adaptive_states(const std::vector<const PuzzleInstance*>& insts,
                               const std::vector<double>& ts, Rng& rng, nn::Batch& batch) {
        const int B = batch.B, d = batch.d, N = vocab_.size;
        std::vector<int> budget(B, 1);
        if (cfg_.loss.on_policy == OnPolicyMode::rollout) {
            for (int b = 0; b < B; ++b) {
                const bool use = rng.bernoulli(cfg_.loss.rollout_prob);
                budget[b] = use ? cfg_.loss.rollout_len : 1;
                stats_.rollout_states += use;
            }
        }
        stats_.total_states += B;

        std::vector<SequenceState> states(B);
        for (int b = 0; b < B; ++b)
            states[b] = sample_masking_path(*insts[b], vocab_, cfg_.schedule, ts[b], rng);

        std::vector<int> taken(B, 0);
        std::vector<int> active(B);
        for (int b = 0; b < B; ++b) active[b] = b;

        nn::Batch sub;
        nn::Activations<Real>& acts = sample_acts_;
        ModelOutput row;
        row.d = d;
        row.n_tokens = N;
        row.logits.resize(size_t(d) * N);
        row.confidence.resize(d);

        while (!active.empty()) {
            const int n = int(active.size());
            sub.B = n;
            sub.d = d;
            sub.has_t = cfg_.feed_time_adaptive;
            sub.tokens.resize(size_t(n) * d);
            sub.clues.resize(size_t(n) * d);
            sub.t.clear();
            for (int j = 0; j < n; ++j) {
                const int b = active[j];
                for (int i = 0; i < d; ++i) {
                    sub.tokens[size_t(j) * d + i] = states[b][i];
                    sub.clues[size_t(j) * d + i] = insts[b]->clues[i];
                }
                if (sub.has_t) sub.t.push_back(ts[b]);
            }
            model_.forward(params_, sub, false, nullptr, acts);

            std::vector<int> next_active;
            for (int j = 0; j < n; ++j) {
                const int b = active[j];
                for (int i = 0; i < d * N; ++i)
                    row.logits[i] = double(acts.logits[size_t(j) * d * N + i]);
                for (int i = 0; i < d; ++i)
                    row.confidence[i] = double(acts.conf[size_t(j) * d + i]);
                row.tau = double(acts.tau[j]);

                if (taken[b] > 0 && row.tau >= 1.0 - cfg_.loss.epsilon) continue;  // early exit
                states[b] = kernel_sample(row, states[b], insts[b]->clues, rng);
                ++taken[b];
                if (taken[b] < budget[b]) next_active.push_back(b);
            }
            active = std::move(next_active);
        }

        for (int b = 0; b < B; ++b) {
            for (int i = 0; i < d; ++i) {
                batch.tokens[size_t(b) * d + i] = states[b][i];
                if (!insts[b]->clues[i]) {
                    stats_.non_clue_tokens += 1;
                    if (states[b][i] != insts[b]->x1[i] && states[b][i] != vocab_.mask_id)
                        stats_.off_path_tokens += 1;
                }
            }
        }
    }
};

}  // namespace refinelab
