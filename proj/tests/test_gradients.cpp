#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "refinelab/losses.hpp"
#include "refinelab/nn/backbone.hpp"
#include "refinelab/paths.hpp"

using namespace refinelab;
using namespace refinelab::nn;

namespace {

struct FdFixture {
    BackboneConfig cfg;
    Backbone<double> model;
    std::vector<double> params;
    Batch batch;
    std::vector<Token> x1;
    std::vector<double> tau_target;
    LossConfig loss_cfg;

    FdFixture(Variant variant, bool with_t, uint64_t seed)
        : cfg(BackboneConfig::tiny(variant, 5, 8)), model(cfg), params(model.init_params(seed)) {
        // move every tensor off its symmetric initialization so no gradient
        // path is trivially zero (adaLN gates start at zero otherwise)
        Rng rng(seed + 1);
        for (auto& p : params) p += 0.1 * rng.normal();

        const int B = 2, d = cfg.seq_len;
        batch.B = B;
        batch.d = d;
        batch.has_t = with_t;
        batch.tokens.resize(size_t(B) * d);
        batch.clues.resize(size_t(B) * d);
        x1.resize(size_t(B) * d);
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < d; ++i) {
                const size_t pos = size_t(b) * d + i;
                batch.tokens[pos] = Token(rng.below_int(cfg.vocab_size + 1));
                batch.clues[pos] = i > 1 && rng.bernoulli(0.25);
                x1[pos] = Token(rng.below_int(cfg.vocab_size));
                if (batch.clues[pos]) batch.tokens[pos] = x1[pos];
            }
        if (with_t) batch.t = {0.35, 0.8};
        tau_target = {0.37, 0.62};
        loss_cfg.confidence_clamp = 1e-3;
    }

    // evaluates the configured objective; term-2 weights can be frozen so the
    // finite difference probes the stop-graded function
    double loss_value(const std::vector<double>& p, int objective,
                      const std::vector<double>* frozen_w) {
        Activations<double> acts;
        model.forward(p, batch, false, nullptr, acts);
        if (objective == 0) {
            return baseline_ce_loss_batch(batch.B, batch.d, cfg.vocab_size, acts.logits.data(),
                                          x1, batch.clues)
                .total;
        }
        LossConfig lc = loss_cfg;
        lc.w1 = objective == 1 ? 1.0 : 0.0;
        lc.w2 = objective == 2 ? 1.0 : 0.0;
        lc.w3 = objective == 3 ? 1.0 : 0.0;
        if (objective == 4) lc.w1 = lc.w2 = lc.w3 = 1.0;
        return adaptive_loss_batch(lc, batch.B, batch.d, cfg.vocab_size, acts.logits.data(),
                                   acts.conf.data(), acts.tau.data(), x1, batch.clues, tau_target,
                                   frozen_w)
            .total;
    }

    std::vector<double> analytic_grads(int objective, std::vector<double>* frozen_w_out) {
        Activations<double> acts;
        model.forward(params, batch, false, nullptr, acts);
        std::vector<double> grads(model.n_params(), 0.0);
        if (objective == 0) {
            auto lg = baseline_ce_loss_batch(batch.B, batch.d, cfg.vocab_size,
                                             acts.logits.data(), x1, batch.clues);
            model.backward(params, batch, acts, lg.dlogits.data(), nullptr, nullptr, grads);
            return grads;
        }
        LossConfig lc = loss_cfg;
        lc.w1 = objective == 1 ? 1.0 : 0.0;
        lc.w2 = objective == 2 ? 1.0 : 0.0;
        lc.w3 = objective == 3 ? 1.0 : 0.0;
        if (objective == 4) lc.w1 = lc.w2 = lc.w3 = 1.0;
        if (frozen_w_out)
            *frozen_w_out = term2_weights(lc, acts.conf.data(), batch.B * batch.d);
        auto lg = adaptive_loss_batch(lc, batch.B, batch.d, cfg.vocab_size, acts.logits.data(),
                                      acts.conf.data(), acts.tau.data(), x1, batch.clues,
                                      tau_target, nullptr);
        model.backward(params, batch, acts, lg.dlogits.data(), lg.dconf.data(), lg.dtau.data(),
                       grads);
        return grads;
    }

    void check(int objective, int n_coords) {
        std::vector<double> frozen_w;
        auto grads = analytic_grads(objective, &frozen_w);
        const std::vector<double>* fw = objective == 0 ? nullptr : &frozen_w;

        Rng pick(123 + objective);
        int nonzero = 0;
        for (int c = 0; c < n_coords; ++c) {
            const size_t idx = pick.below(params.size());
            const double h = 1e-4 * std::max(1.0, std::fabs(params[idx]));
            auto p = params;
            p[idx] += h;
            const double up = loss_value(p, objective, fw);
            p[idx] = params[idx] - h;
            const double dn = loss_value(p, objective, fw);
            const double fd = (up - dn) / (2.0 * h);
            const double an = grads[idx];
            const double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-6});
            INFO("objective " << objective << " coord " << idx << " fd " << fd << " an " << an);
            REQUIRE(rel <= 1e-3);
            if (std::fabs(an) > 1e-12) ++nonzero;
        }
        REQUIRE(nonzero > n_coords / 2);  // the probe must not be vacuous
    }
};

}  // namespace

TEST_CASE("finite differences confirm baseline cross-entropy gradients") {
    FdFixture f(Variant::baseline, true, 11);
    f.check(0, 200);
}

TEST_CASE("finite differences confirm the commit term gradients") {
    FdFixture f(Variant::adaptive, false, 12);
    f.check(1, 200);
}

TEST_CASE("finite differences confirm the mixing penalty gradients") {
    FdFixture f(Variant::adaptive, false, 13);
    f.check(2, 200);
}

TEST_CASE("finite differences confirm the progress-prediction gradients") {
    FdFixture f(Variant::adaptive, false, 14);
    f.check(3, 200);

    FdFixture sq(Variant::adaptive, false, 15);
    sq.loss_cfg.tau_loss = TauLossKind::squared;
    sq.check(3, 100);
}

TEST_CASE("finite differences confirm the full adaptive objective with time input") {
    FdFixture f(Variant::adaptive, true, 16);
    f.check(4, 200);
}

TEST_CASE("clue positions receive no loss gradient") {
    FdFixture f(Variant::adaptive, false, 17);
    Activations<double> acts;
    f.model.forward(f.params, f.batch, false, nullptr, acts);
    LossConfig lc = f.loss_cfg;
    auto lg = adaptive_loss_batch(lc, f.batch.B, f.batch.d, f.cfg.vocab_size, acts.logits.data(),
                                  acts.conf.data(), acts.tau.data(), f.x1, f.batch.clues,
                                  f.tau_target, nullptr);
    const int N = f.cfg.vocab_size;
    for (int r = 0; r < f.batch.B * f.batch.d; ++r) {
        if (!f.batch.clues[r]) continue;
        REQUIRE(lg.dconf[r] == 0.0);
        for (int v = 0; v < N; ++v) REQUIRE(lg.dlogits[size_t(r) * N + v] == 0.0);
    }
}

TEST_CASE("loss decomposition: total equals the weighted term sum") {
    FdFixture f(Variant::adaptive, false, 18);
    Activations<double> acts;
    f.model.forward(f.params, f.batch, false, nullptr, acts);
    LossConfig lc = f.loss_cfg;
    lc.w1 = 0.7;
    lc.w2 = 1.3;
    lc.w3 = 2.0;
    auto lg = adaptive_loss_batch(lc, f.batch.B, f.batch.d, f.cfg.vocab_size, acts.logits.data(),
                                  acts.conf.data(), acts.tau.data(), f.x1, f.batch.clues,
                                  f.tau_target, nullptr);
    REQUIRE(std::fabs(lg.total - (0.7 * lg.term1 + 1.3 * lg.term2 + 2.0 * lg.term3)) <= 1e-9);
}
