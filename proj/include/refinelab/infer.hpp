#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "refinelab/ctmc.hpp"
#include "refinelab/dataset.hpp"
#include "refinelab/kernel.hpp"
#include "refinelab/schedule.hpp"
#include "refinelab/task.hpp"

namespace refinelab {

enum class SolveMethod { adaptive, ensemble, euler, topk, topk_margin, remdm, gidd_euler };

inline const char* to_string(SolveMethod m) {
    switch (m) {
        case SolveMethod::adaptive: return "adaptive";
        case SolveMethod::ensemble: return "ensemble";
        case SolveMethod::euler: return "euler";
        case SolveMethod::topk: return "topk";
        case SolveMethod::topk_margin: return "topk_margin";
        case SolveMethod::remdm: return "remdm";
        case SolveMethod::gidd_euler: return "gidd-euler";
    }
    return "?";
}

inline SolveMethod solve_method_from_string(const std::string& s) {
    if (s == "adaptive") return SolveMethod::adaptive;
    if (s == "ensemble") return SolveMethod::ensemble;
    if (s == "euler") return SolveMethod::euler;
    if (s == "topk") return SolveMethod::topk;
    if (s == "topk_margin") return SolveMethod::topk_margin;
    if (s == "remdm") return SolveMethod::remdm;
    if (s == "gidd-euler" || s == "gidd_euler") return SolveMethod::gidd_euler;
    throw config_error("unknown inference method: " + s);
}

enum class StoppedBy { tau, max_steps, schedule_end };

struct SolveResult {
    SequenceState final;
    int steps = 0;           // function evaluations; for ensembles, the parallel
                             // step count (max over chains)
    long total_evals = 0;    // summed evaluations across chains
    StoppedBy stopped_by = StoppedBy::schedule_end;
    std::vector<ChainTraceStep> trace;
};

struct RemdmConfig {
    double eta = 0.9;
    int n_steps = 100;
    Schedule alpha = Schedule::polynomial(2.0);
};

struct InferConfig {
    SolveMethod method = SolveMethod::adaptive;
    int K = 1;
    int n_steps = 100;
    KernelConfig kernel;
    double eta = 0.9;
    Schedule schedule = Schedule::polynomial(2.0);
    double euler_end_clamp = 1e-3;
    int jobs = 1;
};

// Iterate the learned kernel from the clue state until the stopping head
// fires or the safety cap is reached. Hitting the cap flags the result, it
// is not an error.
inline SolveResult solve_adaptive(const ModelFn& model, const SequenceState& x0,
                                  const ClueMask& clues, const KernelConfig& cfg, Rng& rng,
                                  bool want_trace = false) {
    cfg.validate();
    SolveResult res;
    res.stopped_by = StoppedBy::max_steps;
    SequenceState x = x0;
    for (int n = 1; n <= cfg.max_steps; ++n) {
        ModelOutput out = model(x, clues, std::nullopt);
        auto [next, stopped] = kernel_step(out, x, clues, cfg, rng);
        x = next;
        if (want_trace) res.trace.push_back({x, out.confidence, out.tau});
        if (stopped) {
            res.steps = n;
            res.stopped_by = StoppedBy::tau;
            break;
        }
    }
    if (res.stopped_by == StoppedBy::max_steps) res.steps = cfg.max_steps;
    res.total_evals = res.steps;
    res.final = x;
    return res;
}

// K independent chains aggregated per position by argmax over final-token
// frequencies (mask counts as its own category; ties break to the lowest
// token id). Chains can run in parallel, so the reported step count is the
// slowest chain's; total_evals sums all chains.
inline SolveResult solve_ensemble(const std::vector<ModelFn>& models, const SequenceState& x0,
                                  const ClueMask& clues, int K, const KernelConfig& cfg,
                                  uint64_t seed) {
    if (K < 1) throw input_error("ensemble needs K >= 1");
    if (models.empty()) throw input_error("ensemble needs at least one model");
    const int d = int(x0.size());

    std::vector<SolveResult> chains(K);
    for (int c = 0; c < K; ++c) {
        Rng rng(derive_seed(seed, uint64_t(c)));
        chains[c] = solve_adaptive(models[c % models.size()], x0, clues, cfg, rng);
    }

    SolveResult res;
    res.final.assign(d, 0);
    int n_tokens = 0;
    for (const auto& c : chains)
        for (Token t : c.final) n_tokens = std::max(n_tokens, int(t) + 1);

    std::vector<int> counts(n_tokens);
    for (int i = 0; i < d; ++i) {
        if (clues[i]) {
            res.final[i] = x0[i];
            continue;
        }
        std::fill(counts.begin(), counts.end(), 0);
        for (const auto& c : chains) ++counts[c.final[i]];
        int best = 0;
        for (int a = 1; a < n_tokens; ++a)
            if (counts[a] > counts[best]) best = a;
        res.final[i] = Token(best);
    }

    int timeouts = 0;
    for (const auto& c : chains) {
        res.steps = std::max(res.steps, c.steps);
        res.total_evals += c.total_evals;
        timeouts += c.stopped_by == StoppedBy::max_steps;
    }
    res.stopped_by = timeouts * 2 > K ? StoppedBy::max_steps : StoppedBy::tau;
    return res;
}

// Unmask budget K_t = M_t (alpha_s - alpha_t)/(1 - alpha_t), rounded to the
// nearest integer, at least one while masks remain, never more than M_t.
inline int topk_unmask_count(int masked, double alpha_t, double alpha_s) {
    if (masked <= 0) return 0;
    int k = int(std::lround(masked * (alpha_s - alpha_t) / (1.0 - alpha_t)));
    return std::max(1, std::min(k, masked));
}

// Certainty of a categorical row: the top probability, or the gap between
// the two most probable tokens.
inline double topk_certainty(const double* p, int n, bool margin) {
    double top1 = -1, top2 = -1;
    for (int a = 0; a < n; ++a) {
        if (p[a] > top1) {
            top2 = top1;
            top1 = p[a];
        } else if (p[a] > top2) {
            top2 = p[a];
        }
    }
    return margin ? top1 - top2 : top1;
}

struct RemdmStepProbs {
    double sigma;     // remask probability for decoded positions
    double p_unmask;  // decode probability for masked positions
};

// sigma_t = eta * min(1, (1-alpha_s)/alpha_t); the masked-position posterior
// compensates for remasked mass so the mask marginal stays exactly 1-alpha.
inline RemdmStepProbs remdm_step_probs(double alpha_t, double alpha_s, double eta) {
    const double sigma_max = alpha_t <= 0.0 ? 1.0 : std::min(1.0, (1.0 - alpha_s) / alpha_t);
    const double sigma = eta * sigma_max;
    return {sigma, (alpha_s - (1.0 - sigma) * alpha_t) / (1.0 - alpha_t)};
}

namespace infer_detail {

// d x (N+1) posterior table with an all-zero mask column, as the velocity
// field expects
inline std::vector<double> extend_with_mask(const std::vector<double>& probs, int d, int N) {
    std::vector<double> ext(size_t(d) * (N + 1), 0.0);
    for (int i = 0; i < d; ++i)
        for (int a = 0; a < N; ++a) ext[size_t(i) * (N + 1) + a] = probs[size_t(i) * N + a];
    return ext;
}

inline Token argmax_row(const double* p, int n) {
    int best = 0;
    for (int a = 1; a < n; ++a)
        if (p[a] > p[best]) best = a;
    return Token(best);
}

}  // namespace infer_detail

// Flow-matching baseline: Euler transitions of the factorized velocity field
// on a uniform grid over [0, 1 - end_clamp], then an argmax fill of any
// remaining masks from the last forward pass.
inline SolveResult solve_dfm_euler(const ModelFn& model, const SequenceState& x0,
                                   const ClueMask& clues, int n_steps, const Schedule& schedule,
                                   Rng& rng, double end_clamp = 1e-3) {
    if (n_steps < 1) throw input_error("euler solver needs n_steps >= 1");
    const int d = int(x0.size());
    SequenceState x = x0;
    const double h = (1.0 - end_clamp) / n_steps;
    std::vector<double> last_probs;
    int N = 0;
    for (int k = 0; k < n_steps; ++k) {
        const double t = k * h;
        ModelOutput out = model(x, clues, t);
        N = out.n_tokens;
        last_probs = out.probs();
        auto rates =
            conditional_velocity(infer_detail::extend_with_mask(last_probs, d, N), x, t, schedule);
        x = euler_step(x, rates, h, rng, &clues);
    }
    const Token mask = Token(N);
    for (int i = 0; i < d; ++i)
        if (!clues[i] && x[i] == mask)
            x[i] = infer_detail::argmax_row(last_probs.data() + size_t(i) * N, N);

    SolveResult res;
    res.final = std::move(x);
    res.steps = n_steps;
    res.total_evals = n_steps;
    res.stopped_by = StoppedBy::schedule_end;
    return res;
}

// Certainty-ordered unmasking: per grid step, unmask the round(K_t) most
// certain masked positions, K_t = M_t (alpha_s - alpha_t)/(1 - alpha_t),
// with at least one when masks remain. Tokens are drawn by multinomial
// sampling; committed positions never change.
inline SolveResult solve_topk(const ModelFn& model, const SequenceState& x0,
                              const ClueMask& clues, int n_steps, const Schedule& schedule,
                              bool margin, Rng& rng) {
    if (n_steps < 1) throw input_error("topk solver needs n_steps >= 1");
    const int d = int(x0.size());
    SequenceState x = x0;
    SolveResult res;
    res.stopped_by = StoppedBy::schedule_end;

    for (int k = 0; k < n_steps; ++k) {
        const double t = double(k) / n_steps;
        const double alpha_t = schedule.value(t);
        const double alpha_s = schedule.value(double(k + 1) / n_steps);

        std::vector<int> masked;
        Token mask_guess = Token(-1);
        ModelOutput out = model(x, clues, t);
        ++res.steps;
        const int N = out.n_tokens;
        mask_guess = Token(N);
        for (int i = 0; i < d; ++i)
            if (!clues[i] && x[i] == mask_guess) masked.push_back(i);
        if (masked.empty()) break;

        auto probs = out.probs();
        const int k_t = topk_unmask_count(int(masked.size()), alpha_t, alpha_s);

        std::vector<std::pair<double, int>> certainty;
        certainty.reserve(masked.size());
        for (int i : masked)
            certainty.emplace_back(topk_certainty(probs.data() + size_t(i) * N, N, margin), i);
        std::sort(certainty.begin(), certainty.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;  // ties: lowest position index
        });
        for (int j = 0; j < k_t; ++j) {
            const int i = certainty[j].second;
            x[i] = Token(rng.multinomial(probs.data() + size_t(i) * N, N));
        }
    }
    res.final = std::move(x);
    res.total_evals = res.steps;
    return res;
}

// Remasking sampler: unmasked tokens return to mask with probability
// sigma_t = eta * min(1, (1-alpha_s)/alpha_t); masked positions decode with
// the compensated posterior (alpha_s - (1-sigma_t) alpha_t)/(1 - alpha_t),
// which preserves the masked-diffusion marginal exactly.
inline SolveResult solve_remdm(const ModelFn& model, const SequenceState& x0,
                               const ClueMask& clues, const RemdmConfig& cfg, Rng& rng) {
    if (cfg.n_steps < 1) throw input_error("remdm solver needs n_steps >= 1");
    if (cfg.eta < 0.0 || cfg.eta > 1.0) throw input_error("remdm eta must lie in [0,1]");
    const int d = int(x0.size());
    SequenceState x = x0;

    for (int k = 0; k < cfg.n_steps; ++k) {
        const double t = double(k) / cfg.n_steps;
        const double alpha_t = cfg.alpha.value(t);
        const double alpha_s = cfg.alpha.value(double(k + 1) / cfg.n_steps);
        const auto [sigma, p_unmask] = remdm_step_probs(alpha_t, alpha_s, cfg.eta);

        ModelOutput out = model(x, clues, t);
        const int N = out.n_tokens;
        const Token mask = Token(N);
        auto probs = out.probs();
        for (int i = 0; i < d; ++i) {
            if (clues[i]) continue;
            if (x[i] == mask) {
                if (rng.uniform01() < p_unmask)
                    x[i] = Token(rng.multinomial(probs.data() + size_t(i) * N, N));
            } else {
                if (rng.uniform01() < sigma) x[i] = mask;
            }
        }
    }
    SolveResult res;
    res.final = std::move(x);
    res.steps = cfg.n_steps;
    res.total_evals = cfg.n_steps;
    res.stopped_by = StoppedBy::schedule_end;
    return res;
}

inline SolveResult solve_instance(const std::vector<ModelFn>& models, const PuzzleInstance& inst,
                                  const InferConfig& cfg, uint64_t seed, bool want_trace = false) {
    Rng rng(seed);
    switch (cfg.method) {
        case SolveMethod::adaptive:
            return solve_adaptive(models.at(0), inst.x0, inst.clues, cfg.kernel, rng, want_trace);
        case SolveMethod::ensemble:
            return solve_ensemble(models, inst.x0, inst.clues, cfg.K, cfg.kernel, seed);
        case SolveMethod::euler:
        case SolveMethod::gidd_euler:
            return solve_dfm_euler(models.at(0), inst.x0, inst.clues, cfg.n_steps, cfg.schedule,
                                   rng, cfg.euler_end_clamp);
        case SolveMethod::topk:
            return solve_topk(models.at(0), inst.x0, inst.clues, cfg.n_steps, cfg.schedule, false,
                              rng);
        case SolveMethod::topk_margin:
            return solve_topk(models.at(0), inst.x0, inst.clues, cfg.n_steps, cfg.schedule, true,
                              rng);
        case SolveMethod::remdm: {
            RemdmConfig rc{cfg.eta, cfg.n_steps, cfg.schedule};
            return solve_remdm(models.at(0), inst.x0, inst.clues, rc, rng);
        }
    }
    throw config_error("unhandled solve method");
}

struct MetricsRecord {
    std::string method;
    int K = 1;
    int n_steps = 0;
    double accuracy = 0.0;
    double mean_steps = 0.0;
    double median_steps = 0.0;
    double timeout_rate = 0.0;
    uint64_t seed = 0;
};

struct EvalOutcome {
    MetricsRecord record;
    std::vector<uint8_t> solved;  // per instance
    std::vector<int> steps;       // per instance (parallel steps)
    std::vector<long> evals;      // per instance (summed evaluations)
};

// Solves every instance (per-instance derived seeds, optionally across a
// worker pool), then checks the results with the task's brute-force oracle.
inline EvalOutcome evaluate(const std::vector<ModelFn>& models, const Dataset& data,
                            const InferConfig& cfg, uint64_t seed) {
    const size_t n = data.size();
    if (n == 0) throw input_error("empty evaluation dataset");

    EvalOutcome out;
    out.solved.assign(n, 0);
    out.steps.assign(n, 0);
    out.evals.assign(n, 0);

    std::vector<uint8_t> timeout(n, 0);
    auto worker = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            const PuzzleInstance& inst = data.instances[i];
            SolveResult res = solve_instance(models, inst, cfg, derive_seed(seed, i));
            out.solved[i] = data.task.oracle_check(res.final, inst) ? 1 : 0;
            out.steps[i] = res.steps;
            out.evals[i] = res.total_evals;
            timeout[i] = res.stopped_by == StoppedBy::max_steps ? 1 : 0;
        }
    };

    const int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        worker(0, n);
    } else {
        std::vector<std::future<void>> futs;
        const size_t chunk = (n + jobs - 1) / jobs;
        for (int j = 0; j < jobs; ++j) {
            const size_t b = std::min(n, j * chunk), e = std::min(n, (j + 1) * chunk);
            if (b < e) futs.push_back(std::async(std::launch::async, worker, b, e));
        }
        for (auto& f : futs) f.get();
    }

    MetricsRecord& rec = out.record;
    rec.method = to_string(cfg.method);
    rec.K = cfg.method == SolveMethod::ensemble ? cfg.K : 1;
    rec.n_steps = cfg.n_steps;
    rec.seed = seed;
    double acc = 0, mean = 0, tr = 0;
    std::vector<int> sorted_steps(out.steps);
    std::sort(sorted_steps.begin(), sorted_steps.end());
    for (size_t i = 0; i < n; ++i) {
        acc += out.solved[i];
        mean += out.steps[i];
        tr += timeout[i];
    }
    rec.accuracy = acc / double(n);
    rec.mean_steps = mean / double(n);
    rec.median_steps = n % 2 == 1
                           ? double(sorted_steps[n / 2])
                           : 0.5 * (sorted_steps[n / 2 - 1] + sorted_steps[n / 2]);
    rec.timeout_rate = tr / double(n);
    return out;
}

inline std::string metrics_csv_header() {
    return "method,K,n_steps,accuracy,mean_steps,median_steps,timeout_rate,seed";
}

inline std::string metrics_csv_row(const MetricsRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%.6f,%.4f,%.1f,%.6f,%llu", r.method.c_str(), r.K,
                  r.n_steps, r.accuracy, r.mean_steps, r.median_steps, r.timeout_rate,
                  (unsigned long long)r.seed);
    return buf;
}

}  // namespace refinelab
