#pragma once

#include <cmath>
#include <string>

#include "refinelab/types.hpp"

namespace refinelab {

// Interpolation schedule kappa_t on [0,1]: kappa_0 = 0, kappa_1 = 1, monotone
// increasing and continuously differentiable on (0,1).
struct Schedule {
    enum class Kind { linear, polynomial };

    Kind kind = Kind::linear;
    double exponent = 2.0;  // polynomial only

    static Schedule linear() { return {Kind::linear, 1.0}; }
    static Schedule polynomial(double p) {
        if (p <= 0.0) throw input_error("polynomial schedule exponent must be positive");
        return {Kind::polynomial, p};
    }

    double value(double t) const {
        check(t);
        return kind == Kind::linear ? t : std::pow(t, exponent);
    }

    double derivative(double t) const {
        check(t);
        if (kind == Kind::linear) return 1.0;
        if (exponent == 1.0) return 1.0;
        return exponent * std::pow(t, exponent - 1.0);
    }

    std::string describe() const {
        if (kind == Kind::linear) return "linear";
        return "polynomial(" + std::to_string(exponent) + ")";
    }

private:
    static void check(double t) {
        if (!(t >= 0.0 && t <= 1.0))
            throw input_error("schedule time outside [0,1]: " + std::to_string(t));
    }
};

struct KappaValue {
    double value;
    double derivative;
};

inline KappaValue kappa(const Schedule& s, double t) { return {s.value(t), s.derivative(t)}; }

// Three-component interpolation weights (source, uniform, target); weights
// are nonnegative and sum to one, with delta_{x0} at t=0 and delta_{x1} at
// t=1. The uniform bump is p_u_max * 4t(1-t) * (1-kappa_t).
struct GiddSchedule {
    Schedule base = Schedule::polynomial(2.0);
    double p_u_max = 0.2;

    struct Weights {
        double source;   // kappa^1
        double uniform;  // kappa^2
        double target;   // kappa^3
    };

    Weights weights(double t) const {
        if (p_u_max < 0.0 || p_u_max > 1.0)
            throw input_error("gidd p_u_max must lie in [0,1]");
        const double target = base.value(t);
        const double uniform = p_u_max * 4.0 * t * (1.0 - t) * (1.0 - target);
        return {1.0 - target - uniform, uniform, target};
    }
};

}  // namespace refinelab
