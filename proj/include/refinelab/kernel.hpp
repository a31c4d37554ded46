#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "refinelab/ctmc.hpp"
#include "refinelab/nn/ops.hpp"
#include "refinelab/paths.hpp"
#include "refinelab/rng.hpp"
#include "refinelab/schedule.hpp"
#include "refinelab/types.hpp"

namespace refinelab {

// Per-sample network output on the inference side (double precision; the
// backbone converts). Logits are the clipped denoiser logits over the N
// non-mask tokens.
struct ModelOutput {
    int d = 0;
    int n_tokens = 0;  // N, excluding mask
    std::vector<double> logits;      // d * N
    std::vector<double> confidence;  // d
    double tau = 0.0;

    std::vector<double> probs() const {
        std::vector<double> p(logits.size());
        nn::softmax_rows(logits.data(), p.data(), d, n_tokens);
        return p;
    }
};

// Samples -> outputs; `t` is forwarded to time-conditioned variants and empty
// for the time-homogeneous kernel.
using ModelFn =
    std::function<ModelOutput(const SequenceState&, const ClueMask&, std::optional<double>)>;

struct KernelConfig {
    double epsilon = 0.05;  // stop when tau >= 1 - epsilon
    int max_steps = 256;
    int rollout_len = 5;
    double rollout_prob = 0.1;

    void validate() const {
        if (epsilon <= 0.0 || epsilon >= 1.0) throw config_error("epsilon must lie in (0,1)");
        if (max_steps < 1) throw config_error("max_steps must be at least 1");
        if (rollout_len < 1 || rollout_prob < 0.0 || rollout_prob > 1.0)
            throw config_error("bad rollout settings");
    }
};

// One draw from the product branch of the transition kernel: per non-clue
// position, mask with probability 1-c, otherwise a token from the denoiser
// distribution. Clue positions keep their token.
inline SequenceState kernel_sample(const ModelOutput& out, const SequenceState& y,
                                   const ClueMask& clues, Rng& rng) {
    const int d = out.d, N = out.n_tokens;
    if (int(y.size()) != d || int(clues.size()) != d)
        throw input_error("kernel state size mismatch");
    const Token mask = Token(N);

    SequenceState x(d);
    std::vector<double> p(N);
    for (int i = 0; i < d; ++i) {
        if (clues[i]) {
            x[i] = y[i];
            continue;
        }
        const double c = out.confidence[i];
        if (rng.uniform01() < 1.0 - c) {
            x[i] = mask;
        } else {
            nn::softmax_rows(out.logits.data() + size_t(i) * N, p.data(), 1, N);
            x[i] = Token(rng.multinomial(p.data(), N));
        }
    }
    return x;
}

// Full transition: identity branch when the predicted progress has crossed
// 1 - epsilon, otherwise one product-branch draw.
inline std::pair<SequenceState, bool> kernel_step(const ModelOutput& out, const SequenceState& y,
                                                  const ClueMask& clues, const KernelConfig& cfg,
                                                  Rng& rng) {
    cfg.validate();
    if (out.tau >= 1.0 - cfg.epsilon) return {y, true};
    return {kernel_sample(out, y, clues, rng), false};
}

// Exact transition distribution over the full product space; usable only on
// tiny instances. States whose clue positions disagree with y have
// probability exactly zero.
inline DensePMF kernel_distribution(const ModelOutput& out, const SequenceState& y,
                                    const ClueMask& clues, const KernelConfig& cfg) {
    const int d = out.d, N = out.n_tokens;
    StateSpace space = make_state_space(d, N + 1);
    DensePMF pmf;
    pmf.space = space;

    if (out.tau >= 1.0 - cfg.epsilon) {
        pmf.p.assign(space.size(), 0.0);
        pmf.p[space.encode(y)] = 1.0;
        return pmf;
    }

    // per-position factors over token ids [0..N]
    std::vector<double> factors(size_t(d) * (N + 1), 0.0);
    std::vector<double> p(N);
    for (int i = 0; i < d; ++i) {
        double* f = factors.data() + size_t(i) * (N + 1);
        if (clues[i]) {
            f[y[i]] = 1.0;
            continue;
        }
        const double c = out.confidence[i];
        nn::softmax_rows(out.logits.data() + size_t(i) * N, p.data(), 1, N);
        for (int a = 0; a < N; ++a) f[a] = c * p[a];
        f[N] = 1.0 - c;
    }

    pmf.p.assign(space.size(), 0.0);
    for (size_t s = 0; s < space.size(); ++s) {
        SequenceState x = space.decode(s);
        double prob = 1.0;
        for (int i = 0; i < d && prob > 0.0; ++i)
            prob *= factors[size_t(i) * (N + 1) + x[i]];
        pmf.p[s] = prob;
    }
    return pmf;
}

// Training-state generation: a masking-path sample followed by one
// gradient-free kernel draw. The stopping branch is suppressed so the result
// is always a fresh kernel sample.
inline SequenceState on_policy_sample(const PuzzleInstance& inst, const Vocabulary& vocab,
                                      const Schedule& schedule, double t, const ModelFn& model,
                                      Rng& rng, bool feed_time = false) {
    SequenceState x_t = sample_masking_path(inst, vocab, schedule, t, rng);
    ModelOutput out =
        model(x_t, inst.clues, feed_time ? std::optional<double>(t) : std::nullopt);
    return kernel_sample(out, x_t, inst.clues, rng);
}

// Deeper training states: up to k gradient-free kernel draws from the path
// sample. The first draw always happens (k=1 therefore coincides with
// on_policy_sample); later draws exit early once the stop threshold fires.
inline SequenceState rollout(const PuzzleInstance& inst, const Vocabulary& vocab,
                             const Schedule& schedule, double t, const ModelFn& model, int k,
                             const KernelConfig& cfg, Rng& rng, bool feed_time = false) {
    if (k < 1) throw input_error("rollout needs at least one step");
    SequenceState x = sample_masking_path(inst, vocab, schedule, t, rng);
    for (int step = 0; step < k; ++step) {
        ModelOutput out =
            model(x, inst.clues, feed_time ? std::optional<double>(t) : std::nullopt);
        if (step > 0 && out.tau >= 1.0 - cfg.epsilon) break;
        x = kernel_sample(out, x, inst.clues, rng);
    }
    return x;
}

struct ChainTraceStep {
    SequenceState tokens;            // state after this evaluation's update
    std::vector<double> confidence;  // per-position mixing scores of the evaluation
    double tau = 0.0;
};

}  // namespace refinelab
