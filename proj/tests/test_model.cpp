#include "mabopt/model.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace mabopt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Reference values from tests/oracles/reference_model.py (numpy re-implementation).
const State kProbeState{6.2, (ComponentVector<double>() << 8.1, 0.9, 40.0, 3.5, 1.2).finished()};
const Input kProbeInput{0.001, 0.002, 0.0015, 0.0005, 309.0};
const StateVector kProbeRhs = (StateVector() << 1.000000000000000e-03, 3.156609736476998e-03,
                               -1.381033044659243e-05, 4.931782197736151e-02, 1.061523098905578e-03,
                               4.260625533206901e-07)
                                  .finished();
const StateVector kBatchRhs = (StateVector() << 0.0, 2.3473270335744333e-03, 2.8876878333737338e-05,
                               -1.5944780274464239e-03, 1.4049493925547447e-03, 4.7460157304698967e-05)
                                  .finished();

double smooth_max2(double y, double alpha) { return smooth_max(std::array<double, 2>{0.0, y}, alpha); }

}  // namespace

TEST_CASE("default parameters match the published tables") {
    const ModelParameters p;
    CHECK(p.mu_X_max == 0.153);
    CHECK(p.mu_D_max == 3.955e-5);
    CHECK(p.K1 == 1689.0);
    CHECK(p.K2 == 524.0);
    CHECK(p.KI_P == 0.688);
    CHECK(p.cG_bar == 7.5);
    CHECK(p.alpha_6L == 1.0249e-5);
    CHECK(p.gamma == 10.0);
    CHECK(p.alpha_smooth == 100.0);
    CHECK(p.cG_in == 32.5);
    CHECK(kModelParameterTable.size() == 23);

    const State x0 = default_initial_state();
    CHECK(x0.volume == 5.650);
    CHECK(x0.masses[kViableCells] == 3.955);
    CHECK(x0.masses[kGlucose] == 34.18);
    CHECK(x0.masses[kLactate] == 0.678);
    CHECK(x0.masses[kDeadCells] == 0.0);
    CHECK(x0.masses[kProduct] == 0.0);
}

TEST_CASE("parameter validation rejects non-finite and non-positive values") {
    ModelParameters p;
    p.K_G = std::nan("");
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.alpha_smooth = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("stoichiometry conserves cells except in division") {
    const StoichiometricMatrix s = stoichiometric_matrix(ModelParameters{});
    // Death moves a viable cell to the dead pool.
    CHECK(s(1, kViableCells) + s(1, kDeadCells) == 0.0);
    for (int reaction : {2, 3, 4, 5}) {
        CHECK(s(reaction, kViableCells) == 0.0);
        CHECK(s(reaction, kDeadCells) == 0.0);
    }
    CHECK(s(0, kViableCells) == 1.0);
    CHECK(s(0, kGlucose) == -0.4876);
    CHECK(s(2, kProduct) == 1.2e-5);
}

TEST_CASE("sigmoid midpoint and symmetry") {
    CHECK(sigmoid(7.5, 7.5, 10.0) == 0.5);
    for (double d : {0.01, 0.1, 0.5, 1.0, 3.0, 10.0}) {
        CHECK_THAT(sigmoid(7.5 + d, 7.5, 10.0) + sigmoid(7.5 - d, 7.5, 10.0), WithinAbs(1.0, 1e-15));
    }
    // Overflow-safe at extreme arguments.
    CHECK(sigmoid(1e6, 0.0, 10.0) == 1.0);
    CHECK(sigmoid(-1e6, 0.0, 10.0) == 0.0);
}

TEST_CASE("glucose inhibition curve") {
    const ModelParameters p;
    CHECK(1.0 - sigmoid(7.5, p.cG_bar, p.gamma) == 0.5);
    CHECK_THAT(1.0 - sigmoid(0.0, p.cG_bar, p.gamma), WithinAbs(1.0 - 1.0 / (1.0 + std::exp(75.0)), 1e-15));
    CHECK(1.0 - sigmoid(7.0, p.cG_bar, p.gamma) > 0.99);
    CHECK(1.0 - sigmoid(8.0, p.cG_bar, p.gamma) < 0.01);
}

TEST_CASE("smooth maximum floor and accuracy") {
    const double alpha = 100.0;
    double lowest = 0.0;
    double worst = 0.0;
    double worst_outer = 0.0;  // |y| >= 0.25
    for (int i = 0; i <= 400000; ++i) {
        const double y = -2.0 + 4.0 * i / 400000.0;
        const double s = smooth_max2(y, alpha);
        const double err = std::abs(s - std::max(0.0, y));
        lowest = std::min(lowest, s);
        worst = std::max(worst, err);
        if (std::abs(y) >= 0.25) worst_outer = std::max(worst_outer, err);
    }
    CHECK(worst_outer <= 1e-8);
    // Exact floor min_t t*sigma(t) = -0.2784645427610738 (scipy bounded minimizer).
    CHECK(lowest >= -0.2784645427610738 / alpha - 1e-15);
    CHECK_THAT(lowest, WithinRel(-0.2784645427610738 / alpha, 1e-6));
    CHECK(worst <= 3e-3);
    CHECK(smooth_max2(0.0, alpha) == 0.0);
    CHECK(smooth_max2(1e6, alpha) == 1e6);
}

TEST_CASE("smooth maximum of three values and of an empty list") {
    const std::array<double, 3> v{1.0, 2.0, 5.0};
    CHECK_THAT(smooth_max(v, 100.0), WithinAbs(5.0, 1e-12));
    CHECK_THROWS_AS(smooth_max(std::vector<double>{}, 100.0), ModelError);
}

TEST_CASE("temperature factor") {
    const RateBundle<double> b = kinetics(default_initial_state(), 310.15, ModelParameters{});
    // exp(-1689/310.15) from the numpy oracle.
    CHECK_THAT(b.f_temp, WithinRel(0.004314593973244657, 1e-14));
}

TEST_CASE("right-hand side matches the independent oracle") {
    const StateVector f = rhs(0.0, kProbeState, kProbeInput, ModelParameters{});
    for (int i = 0; i < kStateSize; ++i) {
        CHECK_THAT(f[i], WithinRel(kProbeRhs[i], 1e-12));
    }
    const StateVector g = rhs(0.0, default_initial_state(), Input{}, ModelParameters{});
    CHECK(g[state_index::kVolume] == 0.0);
    for (int i = 1; i < kStateSize; ++i) {
        CHECK_THAT(g[i], WithinRel(kBatchRhs[i], 1e-12));
    }
}

TEST_CASE("volume balance is the net flow") {
    const Input u{0.004, 0.003, 0.002, 0.001, 310.0};
    const StateVector f = rhs(0.0, default_initial_state(), u, ModelParameters{});
    CHECK(f[state_index::kVolume] == 0.004 + 0.003 - 0.001 - 0.002);
}

TEST_CASE("Monod factor is zero in an empty reactor") {
    State x;
    x.volume = 5.0;
    const RateBundle<double> b = kinetics(x, 310.0, ModelParameters{});
    CHECK(b.f_lim == 0.0);
    CHECK(b.mu_X == 0.0);
}

TEST_CASE("kinetics stay finite at slightly negative concentrations") {
    State x = default_initial_state();
    x.masses[kGlucose] = -1e-3;
    x.masses[kLactate] = -1e-3;
    const StateVector f = rhs(0.0, x, Input{}, ModelParameters{});
    CHECK(f.allFinite());
}

TEST_CASE("model errors on invalid volume or temperature") {
    State x = default_initial_state();
    x.volume = 0.0;
    CHECK_THROWS_AS(rhs(0.0, x, Input{}, ModelParameters{}), ModelError);
    Input u;
    u.temperature = -1.0;
    CHECK_THROWS_AS(rhs(0.0, default_initial_state(), u, ModelParameters{}), ModelError);
    x = default_initial_state();
    x.masses[kGlucose] = std::nan("");
    CHECK_THROWS_AS(rhs(0.0, x, Input{}, ModelParameters{}), ModelError);
}

TEST_CASE("automatic-differentiation Jacobian matches central differences") {
    const ModelParameters p;
    const StateVector x = kProbeState.to_vector();
    const InputVector u = kProbeInput.to_vector();
    const RhsJacobian j = rhs_jacobian(x, u, p);
    CHECK((j.value - rhs<double>(x, u, p)).norm() == 0.0);

    for (int c = 0; c < kStateSize + kInputSize; ++c) {
        StateVector xp = x, xm = x;
        InputVector up = u, um = u;
        const double base = c < kStateSize ? x[c] : u[c - kStateSize];
        const double h = 1e-6 * std::max(1.0, std::abs(base));
        if (c < kStateSize) {
            xp[c] += h;
            xm[c] -= h;
        } else {
            up[c - kStateSize] += h;
            um[c - kStateSize] -= h;
        }
        const StateVector fd = (rhs<double>(xp, up, p) - rhs<double>(xm, um, p)) / (2.0 * h);
        const auto col = c < kStateSize ? StateVector(j.dx.col(c)) : StateVector(j.du.col(c - kStateSize));
        for (int i = 0; i < kStateSize; ++i) {
            CHECK_THAT(col[i], WithinAbs(fd[i], 1e-7 * std::max(1.0, std::abs(fd[i]))));
        }
    }
}

TEST_CASE("perfusion retains cells and product") {
    const ComponentVector<double>& d = perfusion_pass_through();
    CHECK(d[kViableCells] == 0.0);
    CHECK(d[kDeadCells] == 0.0);
    CHECK(d[kGlucose] == 1.0);
    CHECK(d[kLactate] == 1.0);
    CHECK(d[kProduct] == 0.0);
}
