#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "refinelab/ctmc.hpp"
#include "refinelab/losses.hpp"
#include "refinelab/nn/ops.hpp"

using namespace refinelab;

namespace {

struct Case {
    int B = 1, d = 6, N = 4;
    std::vector<double> logits, conf, tau;
    std::vector<Token> x1;
    std::vector<uint8_t> clues;
    std::vector<double> tau_target;

    Case(int d_, int n_clues, int N_) : d(d_), N(N_) {
        logits.assign(size_t(d) * N, 0.0);
        conf.assign(d, 0.5);
        tau.assign(1, 0.5);
        x1.resize(d);
        clues.assign(d, 0);
        tau_target.assign(1, 0.5);
        for (int i = 0; i < d; ++i) {
            x1[i] = Token((i * 2 + 1) % N);
            if (i < n_clues) clues[i] = 1;
        }
    }

    void peak_logits_at_solution() {
        for (int i = 0; i < d; ++i)
            for (int v = 0; v < N; ++v)
                logits[size_t(i) * N + v] = (Token(v) == x1[i]) ? 50.0 : -50.0;
    }

    int non_clue() const {
        int n = 0;
        for (auto c : clues) n += !c;
        return n;
    }

    LossGrads<double> run(const LossConfig& cfg) const {
        return adaptive_loss_batch(cfg, B, d, N, logits.data(), conf.data(), tau.data(), x1,
                                   clues, tau_target);
    }
};

}  // namespace

TEST_CASE("perfect outputs: term1 ~ d_nc*delta_c, term2 vanishes, term3 honest") {
    Case c(8, 2, 4);
    c.peak_logits_at_solution();
    const double dc = 1e-4;
    c.conf.assign(c.d, 1.0 - dc);
    c.tau[0] = 0.8;
    c.tau_target[0] = 1.0;

    LossConfig cfg;
    cfg.confidence_clamp = dc;
    auto lg = c.run(cfg);

    const int d_nc = c.non_clue();
    REQUIRE(lg.term1 == Catch::Approx(-double(d_nc) * std::log(1.0 - dc)).epsilon(1e-6));
    REQUIRE(lg.term1 == Catch::Approx(d_nc * dc).epsilon(1e-3));
    REQUIRE(lg.term2 <= 1e-12);
    REQUIRE(lg.term3 == Catch::Approx(0.2));
}

TEST_CASE("no-commit limit: tiny confidence sends term2 to zero") {
    Case c(8, 2, 4);  // uniform logits: q = 3/4 everywhere
    const double dc = 1e-3;
    c.conf.assign(c.d, dc);
    LossConfig cfg;
    cfg.confidence_clamp = dc;
    auto lg = c.run(cfg);
    REQUIRE(lg.term2 >= 0.0);
    REQUIRE(lg.term2 <= 2.0 * dc * c.non_clue());
}

TEST_CASE("exact progress prediction zeroes term3") {
    Case c(6, 1, 4);
    c.tau[0] = 0.5;
    c.tau_target[0] = 0.5;
    auto lg = c.run(LossConfig{});
    REQUIRE(lg.term3 == 0.0);
    REQUIRE(lg.dtau[0] == 0.0);
}

TEST_CASE("term2 grows monotonically as confidence rises on wrong mass") {
    Case c(4, 0, 4);  // uniform logits, q = 3/4
    LossConfig cfg;
    double prev = -1.0;
    for (double cval : {0.1, 0.3, 0.5, 0.7, 0.85, 0.95}) {
        c.conf.assign(c.d, cval);
        auto lg = c.run(cfg);
        REQUIRE(lg.term2 > prev);
        prev = lg.term2;
    }
}

TEST_CASE("adaptive loss with unit confidence reduces to the baseline cross entropy") {
    Case c(8, 3, 5);
    Rng rng(3);
    for (auto& l : c.logits) l = rng.uniform(-2.0, 2.0);
    c.conf.assign(c.d, 1.0);  // synthetic: exactly one

    LossConfig cfg;
    cfg.confidence_clamp = 1e-12;
    cfg.w2 = 0.0;
    cfg.w3 = 0.0;
    auto adaptive = c.run(cfg);
    auto baseline = baseline_ce_loss_batch(c.B, c.d, c.N, c.logits.data(), c.x1, c.clues);
    REQUIRE(std::fabs(adaptive.total - baseline.total) <= 1e-9);
}

TEST_CASE("baseline cross entropy closed forms") {
    Case c(8, 2, 4);
    c.peak_logits_at_solution();
    auto perfect = baseline_ce_loss_batch(c.B, c.d, c.N, c.logits.data(), c.x1, c.clues);
    REQUIRE(perfect.total <= 1e-12);

    Case u(8, 2, 4);  // uniform logits
    auto uniform = baseline_ce_loss_batch(u.B, u.d, u.N, u.logits.data(), u.x1, u.clues);
    REQUIRE(uniform.total == Catch::Approx(u.non_clue() * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("baseline cross entropy agrees with the generic cross_entropy oracle") {
    Rng rng(9);
    for (int rep = 0; rep < 20; ++rep) {
        Case c(6, 2, 4);
        for (auto& l : c.logits) l = rng.uniform(-4.0, 4.0);
        auto lg = baseline_ce_loss_batch(c.B, c.d, c.N, c.logits.data(), c.x1, c.clues);

        double expected = 0.0;
        for (int i = 0; i < c.d; ++i) {
            if (c.clues[i]) continue;
            std::vector<double> p(c.N), onehot(c.N, 0.0);
            nn::softmax_rows(c.logits.data() + size_t(i) * c.N, p.data(), 1, c.N);
            onehot[c.x1[i]] = 1.0;
            expected += cross_entropy(onehot, p);
        }
        REQUIRE(std::fabs(lg.total - expected) <= 1e-9);
    }
}

TEST_CASE("gidd objective is the same cross entropy on generalized-path states") {
    Case c(6, 2, 4);
    Rng rng(5);
    for (auto& l : c.logits) l = rng.uniform(-2.0, 2.0);
    auto a = baseline_ce_loss_batch(c.B, c.d, c.N, c.logits.data(), c.x1, c.clues);
    auto b = gidd_ce_loss_batch(c.B, c.d, c.N, c.logits.data(), c.x1, c.clues);
    REQUIRE(a.total == b.total);
}

TEST_CASE("frozen term-2 weights match the live computation at the base point") {
    Case c(6, 1, 4);
    Rng rng(7);
    for (auto& l : c.logits) l = rng.uniform(-2.0, 2.0);
    for (int i = 0; i < c.d; ++i) c.conf[i] = rng.uniform(0.2, 0.8);

    LossConfig cfg;
    auto w = term2_weights(cfg, c.conf.data(), c.d);
    auto live = c.run(cfg);
    auto frozen = adaptive_loss_batch(cfg, c.B, c.d, c.N, c.logits.data(), c.conf.data(),
                                      c.tau.data(), c.x1, c.clues, c.tau_target, &w);
    REQUIRE(live.total == Catch::Approx(frozen.total).epsilon(1e-15));
    for (size_t i = 0; i < live.dconf.size(); ++i)
        REQUIRE(live.dconf[i] == Catch::Approx(frozen.dconf[i]).margin(1e-15));
}

TEST_CASE("non-finite inputs are rejected with the offending term named") {
    Case c(4, 0, 4);
    c.tau[0] = std::numeric_limits<double>::quiet_NaN();
    bool caught = false;
    try {
        c.run(LossConfig{});
    } catch (const numeric_error& e) {
        caught = true;
        REQUIRE(std::string(e.what()).find("term3") != std::string::npos);
    }
    REQUIRE(caught);
}
