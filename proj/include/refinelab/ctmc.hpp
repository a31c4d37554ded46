#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "refinelab/rng.hpp"
#include "refinelab/schedule.hpp"
#include "refinelab/types.hpp"

namespace refinelab {

// Factorized velocity field at a state y: per position i, a rate vector
// u^i(a, y) over all token ids a (mask included). Units 1/time. The rate
// condition requires each per-position column to sum to zero with
// nonnegative off-diagonal entries (off-diagonal = entries a != y^i).
struct PositionRates {
    SequenceState y;
    int n_tokens = 0;            // including mask
    std::vector<double> rates;   // d * n_tokens, position-major

    int d() const { return int(y.size()); }
    double* row(int i) { return rates.data() + size_t(i) * n_tokens; }
    const double* row(int i) const { return rates.data() + size_t(i) * n_tokens; }
    double at(int i, Token a) const { return rates[size_t(i) * n_tokens + a]; }
};

// u^i(a, y) = kappa_dot/(1-kappa) * (p^i(a|y) - [a == y^i]).
// `posteriors` is a d x n_tokens row-major table of per-position categorical
// distributions (the mask column is typically zero).
inline PositionRates conditional_velocity(const std::vector<double>& posteriors,
                                          const SequenceState& y, double t,
                                          const Schedule& schedule) {
    const int d = int(y.size());
    if (d == 0 || posteriors.size() % size_t(d) != 0)
        throw input_error("posterior table does not factor over positions");
    const int n_tokens = int(posteriors.size() / size_t(d));

    const KappaValue k = kappa(schedule, t);
    if (k.value >= 1.0 - 1e-9)
        throw numeric_error("conditional velocity singular at kappa_t >= 1-1e-9 (t = " +
                            std::to_string(t) + ")");
    const double coef = k.derivative / (1.0 - k.value);

    PositionRates out;
    out.y = y;
    out.n_tokens = n_tokens;
    out.rates.resize(size_t(d) * n_tokens);
    for (int i = 0; i < d; ++i) {
        const double* p = posteriors.data() + size_t(i) * n_tokens;
        double* r = out.row(i);
        for (int a = 0; a < n_tokens; ++a)
            r[a] = coef * (p[a] - (Token(a) == y[i] ? 1.0 : 0.0));
    }
    return out;
}

inline bool rate_condition_check(const PositionRates& rates, double col_tol = 1e-9,
                                 double offdiag_tol = 1e-12) {
    for (int i = 0; i < rates.d(); ++i) {
        const double* r = rates.row(i);
        double sum = 0.0;
        for (int a = 0; a < rates.n_tokens; ++a) {
            sum += r[a];
            if (Token(a) != rates.y[i] && r[a] < -offdiag_tol) return false;
        }
        if (std::fabs(sum) > col_tol) return false;
    }
    return true;
}

struct EulerStepStats {
    int clamped_positions = 0;  // positions whose outflow h*u exceeded 1
};

// One Euler transition: each position is independently resampled from
// delta_{y^i} + h * u^i(., y). If the outflow at a position exceeds one, the
// step size is clamped for that position (moves scaled to total mass one).
// Clue positions, when a mask is supplied, keep their token.
inline SequenceState euler_step(const SequenceState& y, const PositionRates& rates, double h,
                                Rng& rng, const ClueMask* clues = nullptr,
                                EulerStepStats* stats = nullptr) {
    if (h < 0.0) throw input_error("euler step size must be nonnegative");
    const int d = rates.d();
    if (int(y.size()) != d) throw input_error("euler state/rates length mismatch");
    const int n_tokens = rates.n_tokens;

    SequenceState next = y;
    std::vector<double> move(n_tokens);
    for (int i = 0; i < d; ++i) {
        if (clues && (*clues)[i]) continue;
        const double* r = rates.row(i);
        double outflow = 0.0;
        for (int a = 0; a < n_tokens; ++a) {
            double m = (Token(a) == y[i]) ? 0.0 : h * r[a];
            if (m < 0.0) {
                if (m < -1e-9) throw numeric_error("negative off-diagonal euler rate");
                m = 0.0;
            }
            move[a] = m;
            outflow += m;
        }
        double stay = 1.0 - outflow;
        if (stay < 0.0) {
            // clamp h for this position: scale moves so they sum to one
            for (int a = 0; a < n_tokens; ++a) move[a] /= outflow;
            stay = 0.0;
            if (stats) ++stats->clamped_positions;
        }
        if (!(stay >= 0.0 && stay <= 1.0 + 1e-12))
            throw numeric_error("invalid euler one-step distribution");
        double u = rng.uniform01();
        if (u < stay) continue;
        u -= stay;
        Token chosen = y[i];
        for (int a = 0; a < n_tokens; ++a) {
            u -= move[a];
            if (u < 0.0) {
                chosen = Token(a);
                break;
            }
        }
        next[i] = chosen;
    }
    return next;
}

// Dense probability vector over the full product space (tiny instances only).
struct DensePMF {
    StateSpace space;
    std::vector<double> p;

    double mass() const {
        double s = 0.0;
        for (double v : p) s += v;
        return s;
    }

    static DensePMF delta(const StateSpace& space, const SequenceState& x) {
        DensePMF out;
        out.space = space;
        out.p.assign(space.size(), 0.0);
        out.p[space.encode(x)] = 1.0;
        return out;
    }
};

using RateSource = std::function<PositionRates(const SequenceState& y, double t)>;

struct EvolveResult {
    std::vector<double> t_grid;
    std::vector<DensePMF> trajectory;
    double max_mass_drift = 0.0;  // before per-step renormalization
};

namespace detail {

// dp(x)/dt = sum_y u_t(x,y) p(y) with the factorized field: a state y feeds
// mass into every state differing in exactly one coordinate, and its own
// diagonal u^i(y^i, y).
inline void kolmogorov_derivative(const StateSpace& space, const RateSource& source, double t,
                                  const std::vector<double>& p, std::vector<double>& dp) {
    dp.assign(p.size(), 0.0);
    const size_t n = space.size();
    for (size_t yi = 0; yi < n; ++yi) {
        const double py = p[yi];
        if (py == 0.0) continue;
        SequenceState y = space.decode(yi);
        PositionRates rates = source(y, t);
        if (rates.n_tokens != space.n_tokens || rates.d() != space.d)
            throw input_error("rate source shape mismatch with state space");
        size_t stride = 1;
        for (int i = 0; i < space.d; ++i) {
            const double* r = rates.row(i);
            const size_t base = yi - size_t(y[i]) * stride;
            for (int a = 0; a < space.n_tokens; ++a) {
                if (Token(a) == y[i]) {
                    dp[yi] += r[a] * py;  // diagonal contribution
                } else {
                    dp[base + size_t(a) * stride] += r[a] * py;
                }
            }
            stride *= size_t(space.n_tokens);
        }
    }
}

}  // namespace detail

// RK4 integration of the Kolmogorov forward equation on a dense state space.
// One RK4 step per grid interval; mass drift is measured before each
// renormalization and the maximum is reported.
inline EvolveResult exact_evolve(const DensePMF& p0, const RateSource& source,
                                 const std::vector<double>& t_grid) {
    if (t_grid.size() < 2) throw input_error("exact_evolve needs at least two grid points");
    if (p0.space.size() > kDenseStateCap)
        throw capacity_error("state space too large for exact evolution");

    EvolveResult res;
    res.t_grid = t_grid;
    res.trajectory.reserve(t_grid.size());
    res.trajectory.push_back(p0);

    std::vector<double> k1, k2, k3, k4, tmp;
    DensePMF cur = p0;
    for (size_t s = 0; s + 1 < t_grid.size(); ++s) {
        const double t = t_grid[s];
        const double h = t_grid[s + 1] - t;
        if (h <= 0.0) throw input_error("exact_evolve grid must be increasing");
        const auto& p = cur.p;

        detail::kolmogorov_derivative(cur.space, source, t, p, k1);
        tmp.resize(p.size());
        for (size_t i = 0; i < p.size(); ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
        detail::kolmogorov_derivative(cur.space, source, t + 0.5 * h, tmp, k2);
        for (size_t i = 0; i < p.size(); ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
        detail::kolmogorov_derivative(cur.space, source, t + 0.5 * h, tmp, k3);
        for (size_t i = 0; i < p.size(); ++i) tmp[i] = p[i] + h * k3[i];
        detail::kolmogorov_derivative(cur.space, source, t + h, tmp, k4);

        for (size_t i = 0; i < p.size(); ++i)
            cur.p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        double mass = cur.mass();
        res.max_mass_drift = std::max(res.max_mass_drift, std::fabs(mass - 1.0));
        if (mass <= 0.0) throw numeric_error("probability mass vanished during evolution");
        for (double& v : cur.p) v /= mass;
        res.trajectory.push_back(cur);
    }
    return res;
}

// CE(p, q) = -sum_x p(x) log q(x); requires q(x) > 0 wherever p(x) > 0.
inline double cross_entropy(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw input_error("cross_entropy size mismatch");
    double ce = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] <= 0.0)
            throw numeric_error("cross_entropy support violation at index " + std::to_string(i));
        ce -= p[i] * std::log(q[i]);
    }
    return ce;
}

}  // namespace refinelab
