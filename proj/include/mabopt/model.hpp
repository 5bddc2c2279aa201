#pragma once

/**
 * @file
 * Mechanistic model of mAb production in a continuous perfusion reactor.
 *
 * Six states (reactor volume and five component masses) driven by five
 * manipulated inputs. Component order is fixed everywhere:
 * (X_v, X_d, G, L, P) = viable cells, dead cells, glucose, lactate, product.
 *
 * Units: litres, minutes, grams, 10^9 cells, Kelvin.
 */

#include "mabopt/errors.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include <array>
#include <cmath>
#include <iterator>
#include <ranges>
#include <string_view>
#include <utility>

namespace mabopt {

enum Component : int { kViableCells = 0, kDeadCells = 1, kGlucose = 2, kLactate = 3, kProduct = 4 };

inline constexpr int kNumComponents = 5;
inline constexpr int kNumReactions = 6;
inline constexpr int kStateSize = 6;
inline constexpr int kInputSize = 5;

/// Positions inside the stacked state vector x = [V; m].
namespace state_index {
inline constexpr int kVolume = 0;
inline constexpr int kViableCells = 1;
inline constexpr int kDeadCells = 2;
inline constexpr int kGlucose = 3;
inline constexpr int kLactate = 4;
inline constexpr int kProduct = 5;
}  // namespace state_index

/// Positions inside the input vector u = [F_W; F_G; F_per; F_out; T].
namespace input_index {
inline constexpr int kWaterFlow = 0;
inline constexpr int kGlucoseFlow = 1;
inline constexpr int kPerfusionFlow = 2;
inline constexpr int kSamplingFlow = 3;
inline constexpr int kTemperature = 4;
}  // namespace input_index

template <typename Scalar = double>
using ComponentVector = Eigen::Matrix<Scalar, kNumComponents, 1>;
using StateVector = Eigen::Matrix<double, kStateSize, 1>;
using InputVector = Eigen::Matrix<double, kInputSize, 1>;
using StoichiometricMatrix = Eigen::Matrix<double, kNumReactions, kNumComponents>;

struct State {
    double volume = 0.0;  ///< [L]
    ComponentVector<double> masses = ComponentVector<double>::Zero();

    StateVector to_vector() const {
        StateVector x;
        x[state_index::kVolume] = volume;
        x.tail<kNumComponents>() = masses;
        return x;
    }

    static State from_vector(const StateVector& x) {
        return State{x[state_index::kVolume], x.tail<kNumComponents>()};
    }

    double mass(Component c) const { return masses[c]; }
    ComponentVector<double> concentrations() const { return masses / volume; }

    friend bool operator==(const State& a, const State& b) {
        return a.volume == b.volume && a.masses == b.masses;
    }
};

struct Input {
    double water_flow = 0.0;      ///< F_W [L/min]
    double glucose_flow = 0.0;    ///< F_G [L/min]
    double perfusion_flow = 0.0;  ///< F_per [L/min]
    double sampling_flow = 0.0;   ///< F_out [L/min]
    double temperature = 310.15;  ///< T [K]

    InputVector to_vector() const {
        InputVector u;
        u << water_flow, glucose_flow, perfusion_flow, sampling_flow, temperature;
        return u;
    }

    static Input from_vector(const InputVector& u) {
        return Input{u[0], u[1], u[2], u[3], u[4]};
    }

    double total_inflow() const { return water_flow + glucose_flow; }
    double net_volume_rate() const { return water_flow + glucose_flow - sampling_flow - perfusion_flow; }

    friend bool operator==(const Input&, const Input&) = default;
};

/// Kinetic constants, smoothing constants and feed concentration.
struct ModelParameters {
    double mu_X_max = 0.153;      // [1/min]
    double mu_D_max = 3.955e-5;   // [1/min]
    double mu_m1_bar = 1.0;       // [1/min]
    double mu_m2_bar = 1.0;       // [1/min]
    double mu_Lp2_bar = 1.0;      // [1/min]
    double K1 = 1689.0;           // [K]
    double K2 = 524.0;            // [K]
    double K_G = 0.85;            // [g/10^9 cells]
    double KI_L = 344.0;          // [g/L]
    double KI_P = 6.88e-1;        // [L/g]
    double L_max1 = 628.0;        // [g/L]
    double L_max2 = 0.5;          // [g/L]
    double cG_bar = 7.5;          // [g/L]
    double alpha_1G = 0.4876;     // [g/10^9 cells]
    double alpha_1P = 6.62e-8;
    double alpha_3G = 1.102e-4;
    double alpha_3P = 1.2e-5;
    double alpha_4L = 1.89e-5;
    double alpha_5L = 0.5504;
    double alpha_6L = 1.0249e-5;
    double gamma = 10.0;          // sigmoid steepness [L/g]
    double alpha_smooth = 100.0;  // smooth-max sharpness [-]
    double cG_in = 32.5;          // glucose feed concentration [g/L]

    void validate() const;
};

using ModelParameterField = double ModelParameters::*;

/// Name/member table used for config overrides and manifests.
inline constexpr std::array<std::pair<std::string_view, ModelParameterField>, 23> kModelParameterTable{{
    {"mu_X_max", &ModelParameters::mu_X_max},
    {"mu_D_max", &ModelParameters::mu_D_max},
    {"mu_m1_bar", &ModelParameters::mu_m1_bar},
    {"mu_m2_bar", &ModelParameters::mu_m2_bar},
    {"mu_Lp2_bar", &ModelParameters::mu_Lp2_bar},
    {"K1", &ModelParameters::K1},
    {"K2", &ModelParameters::K2},
    {"K_G", &ModelParameters::K_G},
    {"KI_L", &ModelParameters::KI_L},
    {"KI_P", &ModelParameters::KI_P},
    {"L_max1", &ModelParameters::L_max1},
    {"L_max2", &ModelParameters::L_max2},
    {"cG_bar", &ModelParameters::cG_bar},
    {"alpha_1G", &ModelParameters::alpha_1G},
    {"alpha_1P", &ModelParameters::alpha_1P},
    {"alpha_3G", &ModelParameters::alpha_3G},
    {"alpha_3P", &ModelParameters::alpha_3P},
    {"alpha_4L", &ModelParameters::alpha_4L},
    {"alpha_5L", &ModelParameters::alpha_5L},
    {"alpha_6L", &ModelParameters::alpha_6L},
    {"gamma", &ModelParameters::gamma},
    {"alpha_smooth", &ModelParameters::alpha_smooth},
    {"cG_in", &ModelParameters::cG_in},
}};

inline void ModelParameters::validate() const {
    for (const auto& [name, field] : kModelParameterTable) {
        const double v = this->*field;
        if (!std::isfinite(v) || v <= 0.0) {
            throw ConfigError("model parameter '" + std::string(name) + "' must be finite and > 0");
        }
    }
}

/// Initial reactor content used by every scenario unless overridden.
inline State default_initial_state() {
    State x0;
    x0.volume = 5.650;
    x0.masses << 3.955, 0.0, 34.18, 0.678, 0.0;
    return x0;
}

/// Rows are reactions (division, death, maintenance 1/2, lactate production 1/2),
/// columns follow the component order.
inline StoichiometricMatrix stoichiometric_matrix(const ModelParameters& p) {
    StoichiometricMatrix s;
    // clang-format off
    s <<  1.0, 0.0, -p.alpha_1G, 0.0,        p.alpha_1P,
         -1.0, 1.0,  0.0,        0.0,        0.0,
          0.0, 0.0, -p.alpha_3G, 0.0,        p.alpha_3P,
          0.0, 0.0,  0.0,        p.alpha_4L, 0.0,
          0.0, 0.0,  0.0,        p.alpha_5L, 0.0,
          0.0, 0.0,  0.0,        p.alpha_6L, 0.0;
    // clang-format on
    return s;
}

/// C_in: only the glucose stream carries solute. Columns are (water, glucose feed).
inline Eigen::Matrix<double, kNumComponents, 2> inlet_concentrations(const ModelParameters& p) {
    Eigen::Matrix<double, kNumComponents, 2> c = Eigen::Matrix<double, kNumComponents, 2>::Zero();
    c(kGlucose, 1) = p.cG_in;
    return c;
}

/// Diagonal of C_per: the perfusion filter passes glucose and lactate, retains cells and product.
inline const ComponentVector<double>& perfusion_pass_through() {
    static const ComponentVector<double> d = (ComponentVector<double>() << 0.0, 0.0, 1.0, 1.0, 0.0).finished();
    return d;
}

namespace detail {

inline double value_of(double x) { return x; }

template <typename Der>
double value_of(const Eigen::AutoDiffScalar<Der>& x) {
    return x.value();
}

template <typename Scalar>
void require_finite(const Scalar& x, const char* what) {
    if (!std::isfinite(value_of(x))) {
        throw ModelError(std::string("non-finite ") + what);
    }
}

}  // namespace detail

/// Logistic switch 1/(1 + exp(-gamma (x - x_bar))), evaluated without overflow.
template <typename Scalar>
Scalar sigmoid(const Scalar& x, double x_bar, double gamma) {
    using std::exp;
    detail::require_finite(x, "sigmoid argument");
    const Scalar t = gamma * (x - x_bar);
    if (detail::value_of(t) >= 0.0) {
        return 1.0 / (1.0 + exp(-t));
    }
    const Scalar e = exp(t);
    return e / (1.0 + e);
}

/**
 * Smooth maximum sum_i x_i exp(alpha x_i) / sum_i exp(alpha x_i).
 *
 * The largest entry is subtracted before exponentiating, so every weight is in
 * (0, 1] and the result is finite for any finite input.
 */
template <std::ranges::forward_range Range>
auto smooth_max(const Range& values, double alpha) {
    using std::exp;
    using Scalar = std::ranges::range_value_t<Range>;
    auto it = std::ranges::begin(values);
    const auto last = std::ranges::end(values);
    if (it == last) {
        throw ModelError("smooth_max of an empty list");
    }
    double top = detail::value_of(*it);
    for (const auto& v : values) {
        detail::require_finite(v, "smooth_max argument");
        top = std::max(top, detail::value_of(v));
    }
    Scalar num = Scalar(0.0);
    Scalar den = Scalar(0.0);
    for (const auto& v : values) {
        const Scalar w = exp(alpha * (v - top));
        num += v * w;
        den += w;
    }
    return Scalar(num / den);
}

template <typename Scalar = double>
struct RateBundle {
    Scalar f_lim, f_inh, f_temp, f_D_temp, f_G_inh;
    Scalar mu_X, mu_D, mu_m1, mu_m2, mu_Lp1, mu_Lp2;
    Eigen::Matrix<Scalar, kNumReactions, 1> r;  ///< reaction rates per litre
    ComponentVector<Scalar> R;                  ///< production rates S^T r
};

/**
 * Growth, death, maintenance and lactate kinetics at concentrations @p c.
 *
 * Formulas are evaluated as written, including at slightly negative
 * concentrations. The Monod factor is defined as 0 when its denominator
 * vanishes.
 */
template <typename Scalar>
RateBundle<Scalar> kinetics(const ComponentVector<Scalar>& c, const Scalar& temperature, const ModelParameters& p) {
    using std::exp;
    for (int i = 0; i < kNumComponents; ++i) {
        detail::require_finite(c[i], "concentration");
    }
    detail::require_finite(temperature, "temperature");
    if (detail::value_of(temperature) <= 0.0) {
        throw ModelError("temperature must be positive");
    }

    const Scalar& viable = c[kViableCells];
    const Scalar& glucose = c[kGlucose];
    const Scalar& lactate = c[kLactate];
    const Scalar& product = c[kProduct];

    RateBundle<Scalar> b;
    const Scalar monod_den = p.K_G * viable + glucose;
    b.f_lim = detail::value_of(monod_den) == 0.0 ? Scalar(0.0) : Scalar(glucose / monod_den);
    b.f_G_inh = 1.0 - sigmoid(glucose, p.cG_bar, p.gamma);
    const std::array<Scalar, 2> product_terms{Scalar(0.0), Scalar(1.0 - p.KI_P * product)};
    b.f_inh = p.KI_L / (p.KI_L + lactate) * smooth_max(product_terms, p.alpha_smooth) * b.f_G_inh;
    b.f_temp = exp(-p.K1 / temperature);
    b.f_D_temp = exp(-p.K2 / temperature);

    b.mu_X = p.mu_X_max * b.f_lim * b.f_inh * b.f_temp;
    b.mu_D = p.mu_D_max * b.f_D_temp;
    b.mu_m1 = Scalar(p.mu_m1_bar);
    b.mu_m2 = p.mu_m2_bar * (p.L_max2 - lactate) / p.L_max2;
    b.mu_Lp1 = b.mu_X * (p.L_max1 - lactate) / p.L_max1;
    b.mu_Lp2 = p.mu_Lp2_bar * (p.L_max1 - lactate) / p.L_max1;

    const std::array<Scalar, kNumReactions> mu{b.mu_X, b.mu_D, b.mu_m1, b.mu_m2, b.mu_Lp1, b.mu_Lp2};
    for (int i = 0; i < kNumReactions; ++i) {
        b.r[i] = mu[i] * viable;
    }

    const StoichiometricMatrix s = stoichiometric_matrix(p);
    for (int j = 0; j < kNumComponents; ++j) {
        Scalar acc = Scalar(0.0);
        for (int i = 0; i < kNumReactions; ++i) {
            if (s(i, j) != 0.0) {
                acc += s(i, j) * b.r[i];
            }
        }
        b.R[j] = acc;
    }
    return b;
}

/**
 * Right-hand side of the perfusion balance
 *   dV/dt = e^T F_in - F_out - F_per
 *   dm/dt = C_in F_in - c F_out - C_per c F_per + R(c, T) V
 * The model is autonomous; time enters only through the inputs.
 */
template <typename Scalar>
Eigen::Matrix<Scalar, kStateSize, 1> rhs(const Eigen::Matrix<Scalar, kStateSize, 1>& x,
                                         const Eigen::Matrix<Scalar, kInputSize, 1>& u, const ModelParameters& p) {
    const Scalar& volume = x[state_index::kVolume];
    detail::require_finite(volume, "volume");
    if (detail::value_of(volume) <= 0.0) {
        throw ModelError("volume must be positive");
    }
    const Scalar& water = u[input_index::kWaterFlow];
    const Scalar& feed = u[input_index::kGlucoseFlow];
    const Scalar& perfusion = u[input_index::kPerfusionFlow];
    const Scalar& sampling = u[input_index::kSamplingFlow];

    ComponentVector<Scalar> c;
    for (int i = 0; i < kNumComponents; ++i) {
        c[i] = x[1 + i] / volume;
    }
    const RateBundle<Scalar> rates = kinetics(c, u[input_index::kTemperature], p);
    const auto c_in = inlet_concentrations(p);
    const ComponentVector<double>& pass = perfusion_pass_through();

    Eigen::Matrix<Scalar, kStateSize, 1> dx;
    dx[state_index::kVolume] = water + feed - sampling - perfusion;
    for (int i = 0; i < kNumComponents; ++i) {
        Scalar dm = rates.R[i] * volume - c[i] * sampling;
        if (c_in(i, 0) != 0.0) dm += c_in(i, 0) * water;
        if (c_in(i, 1) != 0.0) dm += c_in(i, 1) * feed;
        if (pass[i] != 0.0) dm -= pass[i] * c[i] * perfusion;
        dx[1 + i] = dm;
    }
    return dx;
}

inline StateVector rhs(double /*t*/, const State& x, const Input& u, const ModelParameters& p) {
    return rhs<double>(x.to_vector(), u.to_vector(), p);
}

inline RateBundle<double> kinetics(const State& x, double temperature, const ModelParameters& p) {
    if (!(x.volume > 0.0)) {
        throw ModelError("volume must be positive");
    }
    const ComponentVector<double> c = x.concentrations();
    return kinetics<double>(c, temperature, p);
}

struct RhsJacobian {
    StateVector value;
    Eigen::Matrix<double, kStateSize, kStateSize> dx;
    Eigen::Matrix<double, kStateSize, kInputSize> du;
};

/// f together with df/dx and df/du by forward-mode automatic differentiation.
inline RhsJacobian rhs_jacobian(const StateVector& x, const InputVector& u, const ModelParameters& p) {
    constexpr int kDirections = kStateSize + kInputSize;
    using Derivative = Eigen::Matrix<double, kDirections, 1>;
    using Dual = Eigen::AutoDiffScalar<Derivative>;

    Eigen::Matrix<Dual, kStateSize, 1> xd;
    Eigen::Matrix<Dual, kInputSize, 1> ud;
    for (int i = 0; i < kStateSize; ++i) {
        xd[i] = Dual(x[i], kDirections, i);
    }
    for (int i = 0; i < kInputSize; ++i) {
        ud[i] = Dual(u[i], kDirections, kStateSize + i);
    }
    const Eigen::Matrix<Dual, kStateSize, 1> f = rhs<Dual>(xd, ud, p);

    RhsJacobian j;
    for (int i = 0; i < kStateSize; ++i) {
        j.value[i] = f[i].value();
        const Derivative& d = f[i].derivatives();
        j.dx.row(i) = d.head<kStateSize>().transpose();
        j.du.row(i) = d.tail<kInputSize>().transpose();
    }
    return j;
}

}  // namespace mabopt
