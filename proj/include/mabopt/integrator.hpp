#pragma once

/**
 * @file
 * Explicit Dormand-Prince 5(4) integration of the reactor model over one
 * zero-order-hold interval, optionally together with the forward variational
 * equations for dx(t_end)/dx(t0) and dx(t_end)/du.
 *
 * Sensitivities are propagated through the same Runge-Kutta stages as the
 * state and error control only looks at the six state components, so the
 * step sequence (and hence x_end) is identical with and without sensitivities.
 */

#include "mabopt/errors.hpp"
#include "mabopt/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>

namespace mabopt {

struct IntegratorOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    long max_steps = 1'000'000;
    std::optional<double> initial_step;  ///< [min]
    std::optional<double> fixed_step;    ///< disables error control when set [min]

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw ConfigError("integrator tolerances must be > 0");
        if (max_steps <= 0) throw ConfigError("integrator max_steps must be > 0");
        if (initial_step && !(*initial_step > 0.0)) throw ConfigError("initial_step must be > 0");
        if (fixed_step && !(*fixed_step > 0.0)) throw ConfigError("fixed_step must be > 0");
    }
};

struct IntegrationStats {
    long accepted_steps = 0;
    long rejected_steps = 0;
    long rhs_evaluations = 0;
};

using SensitivityA = Eigen::Matrix<double, kStateSize, kStateSize>;
using SensitivityB = Eigen::Matrix<double, kStateSize, kInputSize>;

struct SensitivityResult {
    State x_end;
    SensitivityA A = SensitivityA::Identity();  ///< dx(t_end)/dx(t0)
    SensitivityB B = SensitivityB::Zero();      ///< dx(t_end)/du, u held over the interval
};

namespace detail {

// Dormand-Prince 5(4) coefficients.
struct DormandPrince {
    static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                            a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                            a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                            b6 = 11.0 / 84.0;
    // b - b_hat (error weights)
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                            e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
};

/**
 * Integrates the autonomous system y' = f(y) from t0 to t1. Only the first
 * @p controlled components enter the error norm.
 */
template <int Dim, class Rhs>
Eigen::Matrix<double, Dim, 1> dopri5(Rhs&& f, Eigen::Matrix<double, Dim, 1> y, double t0, double t1,
                                     int controlled, const IntegratorOptions& opts, IntegrationStats* stats) {
    using Vec = Eigen::Matrix<double, Dim, 1>;
    using T = DormandPrince;
    opts.validate();
    if (!(t1 >= t0)) {
        throw IntegrationError("integration end time precedes start time", t0);
    }
    IntegrationStats local;
    IntegrationStats& st = stats ? *stats : local;
    if (t1 == t0) {
        return y;
    }

    double t = t0;
    auto eval = [&](const Vec& arg) -> Vec {
        ++st.rhs_evaluations;
        try {
            return f(arg);
        } catch (const ModelError& e) {
            throw IntegrationError(std::string("model evaluation failed: ") + e.what(), t);
        }
    };

    auto scaled_norm = [&](const Vec& err, const Vec& ya, const Vec& yb) {
        double acc = 0.0;
        for (int i = 0; i < controlled; ++i) {
            const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(ya[i]), std::abs(yb[i]));
            const double q = err[i] / sc;
            acc += q * q;
        }
        return std::sqrt(acc / controlled);
    };

    const double span = t1 - t0;
    Vec k1 = eval(y);
    double h;
    if (opts.fixed_step) {
        const double n = std::max(1.0, std::ceil(span / *opts.fixed_step - 1e-12));
        h = span / n;
    } else if (opts.initial_step) {
        h = std::min(*opts.initial_step, span);
    } else {
        // Starting step heuristic (Hairer, Norsett & Wanner, II.4).
        const double d0 = scaled_norm(y, y, y);
        const double d1 = scaled_norm(k1, y, y);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, span);
        const Vec k2 = eval(y + h0 * k1);
        const double d2 = scaled_norm(k2 - k1, y, y) / h0;
        const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                    : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
        h = std::min({100.0 * h0, h1, span});
    }

    bool last_rejected = false;
    while (t < t1) {
        if (st.accepted_steps + st.rejected_steps >= opts.max_steps) {
            throw IntegrationError("integrator step budget exhausted", t);
        }
        bool final_step = false;
        if (t + h >= t1 || (!opts.fixed_step && t + 1.0001 * h >= t1)) {
            h = t1 - t;
            final_step = true;
        }
        if (h <= 1e-14 * std::max(1.0, std::abs(t))) {
            throw IntegrationError("step size underflow", t);
        }

        const Vec k2 = eval(y + h * (T::a21 * k1));
        const Vec k3 = eval(y + h * (T::a31 * k1 + T::a32 * k2));
        const Vec k4 = eval(y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3));
        const Vec k5 = eval(y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4));
        const Vec k6 = eval(y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5));
        const Vec y_new = y + h * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
        const Vec k7 = eval(y_new);

        if (opts.fixed_step) {
            ++st.accepted_steps;
            t = final_step ? t1 : t + h;
            y = y_new;
            k1 = k7;
            continue;
        }

        const Vec err = h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * k7);
        const double en = scaled_norm(err, y, y_new);
        if (std::isfinite(en) && en <= 1.0) {
            ++st.accepted_steps;
            t = final_step ? t1 : t + h;
            y = y_new;
            k1 = k7;
            double factor = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            if (last_rejected) factor = std::min(factor, 1.0);
            h *= factor;
            last_rejected = false;
        } else {
            ++st.rejected_steps;
            const double factor = std::isfinite(en) ? std::clamp(0.9 * std::pow(en, -0.2), 0.2, 1.0) : 0.2;
            h *= factor;
            last_rejected = true;
        }
    }
    return y;
}

inline constexpr int kAugmentedSize = kStateSize + kStateSize * kStateSize + kStateSize * kInputSize;

}  // namespace detail

/// End state after holding @p u constant over [t0, t_end].
inline State integrate(const State& x0, const Input& u, double t0, double t_end, const ModelParameters& p,
                       const IntegratorOptions& opts = {}, IntegrationStats* stats = nullptr) {
    const InputVector uv = u.to_vector();
    auto f = [&](const StateVector& x) { return rhs<double>(x, uv, p); };
    const StateVector end = detail::dopri5<kStateSize>(f, x0.to_vector(), t0, t_end, kStateSize, opts, stats);
    return State::from_vector(end);
}

/// End state plus its derivatives with respect to the start state and the held input.
inline SensitivityResult integrate_with_sensitivities(const State& x0, const Input& u, double t0, double t_end,
                                                      const ModelParameters& p, const IntegratorOptions& opts = {},
                                                      IntegrationStats* stats = nullptr) {
    using Aug = Eigen::Matrix<double, detail::kAugmentedSize, 1>;
    constexpr int kA = kStateSize;
    constexpr int kB = kStateSize + kStateSize * kStateSize;
    const InputVector uv = u.to_vector();

    auto f = [&](const Aug& y) {
        const RhsJacobian j = rhs_jacobian(y.head<kStateSize>(), uv, p);
        const Eigen::Map<const SensitivityA> a(y.data() + kA);
        const Eigen::Map<const SensitivityB> b(y.data() + kB);
        Aug dy;
        dy.head<kStateSize>() = j.value;
        Eigen::Map<SensitivityA>(dy.data() + kA) = j.dx * a;
        Eigen::Map<SensitivityB>(dy.data() + kB) = j.dx * b + j.du;
        return dy;
    };

    Aug y0;
    y0.head<kStateSize>() = x0.to_vector();
    Eigen::Map<SensitivityA>(y0.data() + kA).setIdentity();
    Eigen::Map<SensitivityB>(y0.data() + kB).setZero();

    const Aug y = detail::dopri5<detail::kAugmentedSize>(f, y0, t0, t_end, kStateSize, opts, stats);

    SensitivityResult res;
    res.x_end = State::from_vector(y.head<kStateSize>());
    res.A = Eigen::Map<const SensitivityA>(y.data() + kA);
    res.B = Eigen::Map<const SensitivityB>(y.data() + kB);
    return res;
}

}  // namespace mabopt
