#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "refinelab/types.hpp"

namespace refinelab {

enum class TauLossKind { absolute, squared };
enum class OnPolicyMode { one_step, rollout };

inline TauLossKind tau_loss_from_string(const std::string& s) {
    if (s == "absolute") return TauLossKind::absolute;
    if (s == "squared") return TauLossKind::squared;
    throw config_error("unknown tau loss kind: " + s);
}

struct LossConfig {
    double epsilon = 0.05;            // stopping threshold used by on-policy rollouts
    double exponent_k = 1.0;          // exponent on the stop-graded term-2 weight
    TauLossKind tau_loss = TauLossKind::absolute;
    double confidence_clamp = 1e-3;   // delta_c; confidence clamped to [d, 1-d]
    double w1 = 1.0, w2 = 1.0, w3 = 1.0;
    OnPolicyMode on_policy = OnPolicyMode::one_step;
    int rollout_len = 5;
    double rollout_prob = 0.1;

    void validate() const {
        if (confidence_clamp <= 0.0 || confidence_clamp > 0.1)
            throw config_error("confidence_clamp must lie in (0, 0.1]");
        if (w1 < 0 || w2 < 0 || w3 < 0) throw config_error("loss weights must be nonnegative");
        if (epsilon <= 0.0 || epsilon >= 1.0) throw config_error("epsilon must lie in (0,1)");
        if (rollout_len < 1 || rollout_prob < 0.0 || rollout_prob > 1.0)
            throw config_error("bad rollout settings");
    }
};

// Loss value with per-term breakdown (batch means) and gradients with
// respect to the model outputs it was evaluated on.
template <typename Real>
struct LossGrads {
    double total = 0, term1 = 0, term2 = 0, term3 = 0;
    std::vector<Real> dlogits;  // B*d*N
    std::vector<Real> dconf;    // B*d
    std::vector<Real> dtau;     // B
};

namespace loss_detail {

inline void log_softmax_row(const double* logits, int n, std::vector<double>& lp) {
    lp.resize(n);
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
    const double lse = mx + std::log(sum);
    for (int i = 0; i < n; ++i) lp[i] = logits[i] - lse;
}

inline void check_finite(double v, const char* term, int b, int i) {
    if (!std::isfinite(v))
        throw numeric_error(std::string("non-finite ") + term + " at sample " +
                            std::to_string(b) + ", position " + std::to_string(i));
}

}  // namespace loss_detail

// Stop-graded term-2 weights (1/(1-clamped c))^k; exposed so finite-difference
// probes can freeze them at the base point.
template <typename Real>
std::vector<double> term2_weights(const LossConfig& cfg, const Real* conf, int count) {
    std::vector<double> w(count, 0.0);
    const double dc = cfg.confidence_clamp;
    for (int i = 0; i < count; ++i) {
        const double c = std::min(1.0 - dc, std::max(dc, double(conf[i])));
        w[i] = std::pow(1.0 / (1.0 - c), cfg.exponent_k);
    }
    return w;
}

// Adaptive objective on states z: per non-clue position,
//   term1 = -log(c * p(x1 | z))
//   term2 = -w * log(1 - c * q),  q = total non-target probability mass,
//           w = (1/(1-c))^k treated as a constant (stop-grad)
// plus the progress-prediction error |tau_true - tau| (or squared).
// Confidence is clamped to [delta_c, 1-delta_c] with pass-through gradients.
template <typename Real>
LossGrads<Real> adaptive_loss_batch(const LossConfig& cfg, int B, int d, int N,
                                    const Real* logits, const Real* conf, const Real* tau,
                                    const std::vector<Token>& x1,
                                    const std::vector<uint8_t>& clues,
                                    const std::vector<double>& tau_target,
                                    const std::vector<double>* frozen_w = nullptr) {
    cfg.validate();
    if (int(x1.size()) != B * d || int(clues.size()) != B * d || int(tau_target.size()) != B)
        throw input_error("adaptive loss target size mismatch");

    LossGrads<Real> out;
    out.dlogits.assign(size_t(B) * d * N, Real(0));
    out.dconf.assign(size_t(B) * d, Real(0));
    out.dtau.assign(B, Real(0));

    const double dc = cfg.confidence_clamp;
    const double inv_b = 1.0 / double(B);
    std::vector<double> lp;

    for (int b = 0; b < B; ++b) {
        double t1 = 0, t2 = 0;
        for (int i = 0; i < d; ++i) {
            const size_t pos = size_t(b) * d + i;
            if (clues[pos]) continue;
            const Token target = x1[pos];
            if (target < 0 || target >= Token(N))
                throw input_error("loss target outside denoiser support");

            std::vector<double> row(N);
            for (int v = 0; v < N; ++v) row[v] = double(logits[pos * N + v]);
            loss_detail::log_softmax_row(row.data(), N, lp);
            const double p_target = std::exp(lp[target]);

            const double c_raw = double(conf[pos]);
            const double c = std::min(1.0 - dc, std::max(dc, c_raw));
            const bool clamped = c_raw < dc || c_raw > 1.0 - dc;

            // term 1
            const double term1 = -(std::log(c) + lp[target]);
            loss_detail::check_finite(term1, "term1", b, i);
            t1 += term1;
            for (int v = 0; v < N; ++v)
                out.dlogits[pos * N + v] +=
                    Real(cfg.w1 * inv_b * (std::exp(lp[v]) - (v == target ? 1.0 : 0.0)));
            double dc_total = cfg.w1 * (-1.0 / c);

            // term 2
            const double q = 1.0 - p_target;
            const double w = frozen_w ? (*frozen_w)[pos]
                                      : std::pow(1.0 / (1.0 - c), cfg.exponent_k);
            const double guard = 1.0 - c * q;
            const double term2 = -w * std::log(guard);
            loss_detail::check_finite(term2, "term2", b, i);
            t2 += term2;
            // d term2 / d p_target = -w c / guard, mapped through the softmax jacobian
            const double a = cfg.w2 * w * c / guard;
            for (int v = 0; v < N; ++v)
                out.dlogits[pos * N + v] +=
                    Real(inv_b * a * std::exp(lp[v]) * (p_target - (v == target ? 1.0 : 0.0)));
            dc_total += cfg.w2 * w * q / guard;

            if (!clamped) out.dconf[pos] = Real(inv_b * dc_total);
        }

        const double err = double(tau[b]) - tau_target[b];
        double term3;
        if (cfg.tau_loss == TauLossKind::absolute) {
            term3 = std::fabs(err);
            out.dtau[b] = Real(inv_b * cfg.w3 * (err > 0 ? 1.0 : (err < 0 ? -1.0 : 0.0)));
        } else {
            term3 = err * err;
            out.dtau[b] = Real(inv_b * cfg.w3 * 2.0 * err);
        }
        loss_detail::check_finite(term3, "term3", b, 0);

        out.term1 += inv_b * t1;
        out.term2 += inv_b * t2;
        out.term3 += inv_b * term3;
    }
    out.total = cfg.w1 * out.term1 + cfg.w2 * out.term2 + cfg.w3 * out.term3;
    return out;
}

// Cross entropy of the denoiser against the solution tokens over non-clue
// positions; the objective of the plain flow-matching baseline (and, fed
// with generalized-path states, of the GIDD variant).
template <typename Real>
LossGrads<Real> baseline_ce_loss_batch(int B, int d, int N, const Real* logits,
                                       const std::vector<Token>& x1,
                                       const std::vector<uint8_t>& clues) {
    if (int(x1.size()) != B * d || int(clues.size()) != B * d)
        throw input_error("baseline loss target size mismatch");
    LossGrads<Real> out;
    out.dlogits.assign(size_t(B) * d * N, Real(0));

    const double inv_b = 1.0 / double(B);
    std::vector<double> lp;
    for (int b = 0; b < B; ++b) {
        double ce = 0;
        for (int i = 0; i < d; ++i) {
            const size_t pos = size_t(b) * d + i;
            if (clues[pos]) continue;
            const Token target = x1[pos];
            if (target < 0 || target >= Token(N))
                throw input_error("loss target outside denoiser support");
            std::vector<double> row(N);
            for (int v = 0; v < N; ++v) row[v] = double(logits[pos * N + v]);
            loss_detail::log_softmax_row(row.data(), N, lp);
            const double nll = -lp[target];
            loss_detail::check_finite(nll, "cross-entropy", b, i);
            ce += nll;
            for (int v = 0; v < N; ++v)
                out.dlogits[pos * N + v] +=
                    Real(inv_b * (std::exp(lp[v]) - (v == target ? 1.0 : 0.0)));
        }
        out.term1 += inv_b * ce;
    }
    out.total = out.term1;
    return out;
}

template <typename Real>
LossGrads<Real> gidd_ce_loss_batch(int B, int d, int N, const Real* logits,
                                   const std::vector<Token>& x1,
                                   const std::vector<uint8_t>& clues) {
    return baseline_ce_loss_batch(B, d, N, logits, x1, clues);
}

}  // namespace refinelab
