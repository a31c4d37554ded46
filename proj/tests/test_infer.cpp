#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "refinelab/infer.hpp"

using namespace refinelab;

namespace {

PuzzleInstance toy_instance(int d, int n_clues, int vocab) {
    PuzzleInstance inst;
    inst.x0.resize(d);
    inst.x1.resize(d);
    inst.clues.assign(d, 0);
    for (int i = 0; i < d; ++i) {
        inst.x1[i] = Token((3 * i + 1) % vocab);
        if (i < n_clues) {
            inst.clues[i] = 1;
            inst.x0[i] = inst.x1[i];
        } else {
            inst.x0[i] = Token(vocab);
        }
    }
    return inst;
}

ModelOutput peaked_output(const SequenceState& target, int N, double c, double tau) {
    ModelOutput out;
    out.d = int(target.size());
    out.n_tokens = N;
    out.logits.assign(size_t(out.d) * N, -50.0);
    for (int i = 0; i < out.d; ++i)
        if (target[i] < Token(N)) out.logits[size_t(i) * N + target[i]] = 50.0;
    out.confidence.assign(out.d, c);
    out.tau = tau;
    return out;
}

ModelFn perfect_model(const PuzzleInstance& inst, int N) {
    return [&inst, N](const SequenceState& y, const ClueMask&, std::optional<double>) {
        double correct = 0, total = 0;
        for (size_t i = 0; i < y.size(); ++i) {
            if (inst.clues[i]) continue;
            ++total;
            correct += y[i] == inst.x1[i];
        }
        return peaked_output(inst.x1, N, 1.0, total > 0 ? correct / total : 1.0);
    };
}

// stops only after `latency` commits; used for step-count behavior
ModelFn slow_model(const PuzzleInstance& inst, int N, int latency) {
    auto counter = std::make_shared<int>(0);
    return [&inst, N, latency, counter](const SequenceState& y, const ClueMask&,
                                        std::optional<double>) {
        double correct = 0, total = 0;
        for (size_t i = 0; i < y.size(); ++i) {
            if (inst.clues[i]) continue;
            ++total;
            correct += y[i] == inst.x1[i];
        }
        const bool done = correct == total && ++*counter > latency;
        return peaked_output(inst.x1, N, 1.0, done ? 0.99 : 0.3);
    };
}

ModelFn random_model(int N, uint64_t seed) {
    return [N, seed](const SequenceState& y, const ClueMask&, std::optional<double>) {
        uint64_t h = seed;
        for (Token t : y) h = mix64(h ^ uint64_t(t + 1));
        Rng rng(h);
        ModelOutput out;
        out.d = int(y.size());
        out.n_tokens = N;
        out.logits.resize(size_t(out.d) * N);
        for (auto& l : out.logits) l = rng.uniform(-2.0, 2.0);
        out.confidence.resize(out.d);
        for (auto& c : out.confidence) c = rng.uniform(0.05, 0.95);
        out.tau = rng.uniform(0.0, 0.5);
        return out;
    };
}

}  // namespace

TEST_CASE("adaptive solver: perfect model solves in at most two evaluations") {
    auto inst = toy_instance(10, 3, 4);
    auto model = perfect_model(inst, 4);
    KernelConfig cfg;
    Rng rng(1);
    auto res = solve_adaptive(model, inst.x0, inst.clues, cfg, rng);
    REQUIRE(res.final == inst.x1);
    REQUIRE(res.steps <= 2);
    REQUIRE(res.stopped_by == StoppedBy::tau);
}

TEST_CASE("adaptive solver: a never-committing model times out all-masked") {
    auto inst = toy_instance(10, 3, 4);
    ModelFn mute = [&](const SequenceState& y, const ClueMask&, std::optional<double>) {
        return peaked_output(inst.x1, 4, 0.0, 0.0);
    };
    KernelConfig cfg;
    cfg.max_steps = 17;
    Rng rng(2);
    auto res = solve_adaptive(mute, inst.x0, inst.clues, cfg, rng);
    REQUIRE(res.stopped_by == StoppedBy::max_steps);
    REQUIRE(res.steps == 17);
    for (int i = 3; i < 10; ++i) REQUIRE(res.final[i] == Token(4));
}

TEST_CASE("ensemble with K=1 is exactly one adaptive chain") {
    auto inst = toy_instance(10, 3, 4);
    auto model = slow_model(inst, 4, 2);
    KernelConfig cfg;
    const uint64_t seed = 77;
    auto ens = solve_ensemble({model}, inst.x0, inst.clues, 1, cfg, seed);
    Rng rng(derive_seed(seed, 0));
    auto one = solve_adaptive(slow_model(inst, 4, 2), inst.x0, inst.clues, cfg, rng);
    REQUIRE(ens.final == one.final);
    REQUIRE(ens.steps == one.steps);
    REQUIRE(ens.total_evals == one.total_evals);
}

TEST_CASE("ensemble aggregation: majority wins, ties break to the lowest token") {
    const int d = 4, N = 4;
    PuzzleInstance inst = toy_instance(d, 1, N);

    auto committed_model = [&](SequenceState target) {
        return ModelFn([target, N](const SequenceState& y, const ClueMask&,
                                   std::optional<double>) {
            return peaked_output(target, N, 1.0, y == target ? 0.99 : 0.1);
        });
    };
    // three chains: two vote (2,2,2) at free positions, one votes (3,3,3)
    SequenceState a = inst.x0, b = inst.x0;
    for (int i = 1; i < d; ++i) a[i] = Token(2);
    for (int i = 1; i < d; ++i) b[i] = Token(3);

    auto maj = solve_ensemble({committed_model(a), committed_model(a), committed_model(b)},
                              inst.x0, inst.clues, 3, KernelConfig{}, 5);
    for (int i = 1; i < d; ++i) REQUIRE(maj.final[i] == Token(2));

    // K=2 tie between token 2 and token 3: the lower id wins
    auto tie = solve_ensemble({committed_model(a), committed_model(b)}, inst.x0, inst.clues, 2,
                              KernelConfig{}, 6);
    for (int i = 1; i < d; ++i) REQUIRE(tie.final[i] == Token(2));
}

TEST_CASE("ensemble reports parallel steps as the slowest chain and sums evaluations") {
    auto inst = toy_instance(10, 3, 4);
    std::vector<ModelFn> models = {slow_model(inst, 4, 0), slow_model(inst, 4, 3),
                                   slow_model(inst, 4, 7)};
    auto res = solve_ensemble(models, inst.x0, inst.clues, 3, KernelConfig{}, 9);
    std::vector<int> steps;
    for (int c = 0; c < 3; ++c) {
        Rng rng(derive_seed(9, c));
        steps.push_back(
            solve_adaptive(slow_model(inst, 4, c == 0 ? 0 : (c == 1 ? 3 : 7)), inst.x0,
                           inst.clues, KernelConfig{}, rng)
                .steps);
    }
    REQUIRE(res.steps == *std::max_element(steps.begin(), steps.end()));
    REQUIRE(res.total_evals == steps[0] + steps[1] + steps[2]);
    REQUIRE(res.total_evals <= 3 * res.steps);
}

TEST_CASE("euler solver with a one-hot posterior decodes the solution and never flips") {
    // d=2, vocab 3: exact conditional-path fixture
    PuzzleInstance inst = toy_instance(2, 0, 3);
    auto model = [&](const SequenceState& y, const ClueMask&, std::optional<double>) {
        return peaked_output(inst.x1, 3, 1.0, 0.0);
    };

    for (uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        SequenceState x = inst.x0;
        const int n_steps = 64;
        const double h = (1.0 - 1e-3) / n_steps;
        std::set<int> committed;
        for (int k = 0; k < n_steps; ++k) {
            ModelOutput out = model(x, inst.clues, double(k) * h);
            auto probs = out.probs();
            std::vector<double> ext(2 * 4, 0.0);
            for (int i = 0; i < 2; ++i)
                for (int a = 0; a < 3; ++a) ext[i * 4 + a] = probs[i * 3 + a];
            auto rates = conditional_velocity(ext, x, double(k) * h, Schedule::linear());
            auto next = euler_step(x, rates, h, rng, &inst.clues);
            for (int i = 0; i < 2; ++i)
                if (committed.count(i)) REQUIRE(next[i] == x[i]);
            for (int i = 0; i < 2; ++i)
                if (next[i] != Token(3)) committed.insert(i);
            x = next;
        }
        Rng rng2(seed);
        auto res = solve_dfm_euler(model, inst.x0, inst.clues, 64, Schedule::linear(), rng2);
        REQUIRE(res.final == inst.x1);
        REQUIRE(res.steps == 64);
    }
}

TEST_CASE("topk unmask budget formula and rounding rule") {
    REQUIRE(topk_unmask_count(10, 0.2, 0.6) == 5);
    // enumerated grid: exact formula with round-half-away, floored at 1
    for (int m : {1, 3, 10, 40}) {
        for (double at : {0.0, 0.1, 0.45, 0.8}) {
            for (double as : {0.1, 0.5, 0.9, 1.0}) {
                if (as <= at) continue;
                const int k = topk_unmask_count(m, at, as);
                const int raw = int(std::lround(m * (as - at) / (1.0 - at)));
                REQUIRE(k == std::max(1, std::min(raw, m)));
                REQUIRE(k >= 1);
                REQUIRE(k <= m);
            }
        }
    }
    REQUIRE(topk_unmask_count(0, 0.2, 0.6) == 0);
}

TEST_CASE("topk certainty scores") {
    std::vector<double> flat = {0.5, 0.5, 0.0};
    REQUIRE(topk_certainty(flat.data(), 3, true) == Catch::Approx(0.0));
    std::vector<double> peaked = {0.9, 0.05, 0.05};
    REQUIRE(topk_certainty(peaked.data(), 3, true) == Catch::Approx(0.85));
    REQUIRE(topk_certainty(peaked.data(), 3, false) == Catch::Approx(0.9));
}

TEST_CASE("topk solver never remasks and finishes with no masks") {
    auto inst = toy_instance(12, 2, 4);
    auto model = random_model(4, 31);
    for (bool margin : {false, true}) {
        Rng rng(margin ? 3 : 4);
        // instrumented run: wrap the model to observe states
        std::vector<SequenceState> seen;
        ModelFn spy = [&](const SequenceState& y, const ClueMask& c, std::optional<double> t) {
            seen.push_back(y);
            return model(y, c, t);
        };
        auto res = solve_topk(spy, inst.x0, inst.clues, 8, Schedule::polynomial(2.0), margin, rng);
        for (Token t : res.final) REQUIRE(t != Token(4));
        for (size_t s = 1; s < seen.size(); ++s)
            for (int i = 0; i < 12; ++i)
                if (seen[s - 1][i] != Token(4)) REQUIRE(seen[s][i] == seen[s - 1][i]);
        REQUIRE(res.steps <= 8);
    }
}

TEST_CASE("remdm step probabilities: rescale schedule and eta=0 reduction") {
    auto p = remdm_step_probs(0.5, 0.6, 0.9);
    REQUIRE(p.sigma == Catch::Approx(0.72));

    auto off = remdm_step_probs(0.5, 0.6, 0.0);
    REQUIRE(off.sigma == 0.0);
    REQUIRE(off.p_unmask == Catch::Approx((0.6 - 0.5) / (1.0 - 0.5)));
}

TEST_CASE("remdm preserves the masked-diffusion marginal exactly") {
    // exact recursion of the per-position mask probability under the sampler's
    // own step probabilities, oracle posterior
    for (auto schedule : {Schedule::linear(), Schedule::polynomial(2.0)}) {
        for (double eta : {0.0, 0.5, 0.9, 1.0}) {
            const int n = 100;
            double m = 1.0;
            for (int k = 0; k < n; ++k) {
                const double at = schedule.value(double(k) / n);
                const double as = schedule.value(double(k + 1) / n);
                auto pr = remdm_step_probs(at, as, eta);
                REQUIRE(pr.p_unmask >= -1e-12);
                REQUIRE(pr.p_unmask <= 1.0 + 1e-12);
                m = m * (1.0 - pr.p_unmask) + (1.0 - m) * pr.sigma;
                REQUIRE(std::fabs(m - (1.0 - as)) <= 1e-9);
            }
        }
    }
}

TEST_CASE("remdm and adaptive can revisit committed positions; finishes unmasked") {
    auto inst = toy_instance(12, 2, 4);
    auto model = random_model(4, 77);
    Rng rng(5);
    RemdmConfig cfg;
    cfg.n_steps = 40;
    cfg.alpha = Schedule::linear();

    int remask_events = 0;
    SequenceState prev = inst.x0;
    ModelFn spy = [&](const SequenceState& y, const ClueMask& c, std::optional<double> t) {
        for (int i = 0; i < 12; ++i)
            if (prev[i] != Token(4) && y[i] == Token(4) && !inst.clues[i]) ++remask_events;
        prev = y;
        return model(y, c, t);
    };
    auto res = solve_remdm(spy, inst.x0, inst.clues, cfg, rng);
    REQUIRE(remask_events > 0);
    for (Token t : res.final) REQUIRE(t != Token(4));
    for (int i = 0; i < 2; ++i) REQUIRE(res.final[i] == inst.x0[i]);
}

TEST_CASE("all solvers preserve clue positions under fuzzing") {
    auto inst = toy_instance(10, 4, 4);
    auto model = random_model(4, 13);
    KernelConfig kc;
    kc.max_steps = 50;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Rng r1(seed), r2(seed), r3(seed), r4(seed);
        for (auto res : {solve_adaptive(model, inst.x0, inst.clues, kc, r1),
                         solve_dfm_euler(model, inst.x0, inst.clues, 16, Schedule::linear(), r2),
                         solve_topk(model, inst.x0, inst.clues, 16, Schedule::linear(), false, r3),
                         solve_remdm(model, inst.x0, inst.clues,
                                     RemdmConfig{0.9, 16, Schedule::linear()}, r4)}) {
            for (int i = 0; i < 4; ++i) REQUIRE(res.final[i] == inst.x0[i]);
        }
    }
}

TEST_CASE("evaluate: solved inputs with a perfect model give accuracy 1 in one step") {
    Dataset ds;
    ds.task = TaskSpec::mini_sudoku();
    ds.seed = 1;
    for (uint64_t s = 0; s < 10; ++s) {
        auto inst = sudoku_generate(4, s, 6, 10);
        PuzzleInstance solved;
        solved.x0 = inst.x1;
        solved.x1 = inst.x1;
        solved.clues = inst.clues;  // original clue set; the rest is pre-filled
        ds.instances.push_back(solved);
    }
    // a model that trusts filled inputs: progress is honest
    std::vector<PuzzleInstance>* data = &ds.instances;
    ModelFn model = [data](const SequenceState& y, const ClueMask& clues,
                           std::optional<double>) {
        ModelOutput out;
        out.d = int(y.size());
        out.n_tokens = 4;
        out.logits.assign(size_t(out.d) * 4, -50.0);
        for (int i = 0; i < out.d; ++i)
            if (y[i] < 4) out.logits[size_t(i) * 4 + y[i]] = 50.0;
        out.confidence.assign(out.d, 1.0);
        double total = 0, filled = 0;
        for (size_t i = 0; i < y.size(); ++i)
            if (!clues[i]) {
                ++total;
                filled += y[i] != Token(4);
            }
        out.tau = total > 0 ? filled / total : 1.0;
        return out;
    };
    InferConfig cfg;
    cfg.method = SolveMethod::adaptive;
    auto res = evaluate({model}, ds, cfg, 3);
    REQUIRE(res.record.accuracy == 1.0);
    REQUIRE(res.record.mean_steps == 1.0);
    REQUIRE(res.record.timeout_rate == 0.0);
}

TEST_CASE("evaluate sweeps ensemble sizes into one row each") {
    Dataset ds;
    ds.task = TaskSpec::mini_sudoku();
    ds.seed = 1;
    for (uint64_t s = 0; s < 5; ++s) ds.instances.push_back(sudoku_generate(4, s, 6, 10));
    auto model = perfect_model(ds.instances[0], 4);  // solves only instance 0

    InferConfig cfg;
    cfg.method = SolveMethod::ensemble;
    std::vector<MetricsRecord> rows;
    for (int K : {1, 3, 5, 10}) {
        cfg.K = K;
        rows.push_back(evaluate({model}, ds, cfg, 11).record);
        REQUIRE(rows.back().K == K);
    }
    REQUIRE(rows.size() == 4);
}
