#include "mabopt/interior_point.hpp"

#include "small_problems.hpp"

#include <catch_amalgamated.hpp>

#include <sstream>

using namespace mabopt::nlp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Eigen::MatrixXd;
using namespace mabopt::testing;

namespace {

SolverOptions tight() {
    SolverOptions o;
    o.kkt_tol = 1e-9;
    o.feasibility_tol = 1e-10;
    return o;
}

}  // namespace

TEST_CASE("bound-constrained scalar problem has the expected multiplier") {
    const SmallProblem p = shifted_parabola();
    const SolveResult r = solve(p, vec({5.0}), tight());
    REQUIRE(r.report.converged());
    CHECK_THAT(r.z[0], WithinAbs(2.0, 1e-8));
    CHECK_THAT(r.multipliers.lower[0], WithinAbs(2.0, 1e-7));
    CHECK(r.multipliers.upper[0] == 0.0);
}

TEST_CASE("general inequality gets a nonnegative multiplier") {
    SmallProblem p;
    p.n = 1;
    p.mi = 1;
    p.f = [](const Vector& z) { return (z[0] - 1.0) * (z[0] - 1.0); };
    p.grad = [](const Vector& z) { return vec({2.0 * (z[0] - 1.0)}); };
    p.ci = [](const Vector& z) { return vec({z[0] - 2.0}); };
    p.ji = [](const Vector&) { return MatrixXd::Ones(1, 1); };
    p.hess = [](const Vector&, const Vector&, const Vector&) { return MatrixXd::Constant(1, 1, 2.0); };
    const SolveResult r = solve(p, vec({0.0}), tight());
    REQUIRE(r.report.converged());
    CHECK_THAT(r.z[0], WithinAbs(2.0, 1e-8));
    CHECK_THAT(r.multipliers.inequality[0], WithinAbs(2.0, 1e-7));
}

TEST_CASE("Rosenbrock in a box") {
    SmallProblem p = rosenbrock();
    SECTION("exact Hessian") {
        const SolveResult r = solve(p, vec({-1.2, 1.0}), tight());
        REQUIRE(r.report.converged());
        CHECK(r.report.exact_hessian);
        CHECK_THAT(r.z[0], WithinAbs(1.0, 1e-6));
        CHECK_THAT(r.z[1], WithinAbs(1.0, 1e-6));
    }
    SECTION("quasi-Newton") {
        SolverOptions o = tight();
        o.hessian = HessianMode::kQuasiNewton;
        o.max_iterations = 1000;
        const SolveResult r = solve(p, vec({-1.2, 1.0}), o);
        REQUIRE(r.report.converged());
        CHECK_FALSE(r.report.exact_hessian);
        CHECK_THAT(r.z[0], WithinAbs(1.0, 1e-5));
        CHECK_THAT(r.z[1], WithinAbs(1.0, 1e-5));
    }
    SECTION("convexified Hessian blocks") {
        for (Convexify c : {Convexify::kMirror, Convexify::kClip}) {
            SolverOptions o = tight();
            o.convexify = c;
            const SolveResult r = solve(p, vec({-1.2, 1.0}), o);
            REQUIRE(r.report.converged());
            CHECK_THAT(r.z[0], WithinAbs(1.0, 1e-6));
            CHECK_THAT(r.z[1], WithinAbs(1.0, 1e-6));
        }
    }
}

TEST_CASE("HS071 with both line searches") {
    const SmallProblem p = hs071();
    for (LineSearch ls : {LineSearch::kFilter, LineSearch::kL1Merit}) {
        SolverOptions o = tight();
        o.line_search = ls;
        const SolveResult r = solve(p, kHs071Start, o);
        REQUIRE(r.report.converged());
        CHECK_THAT(r.report.objective, WithinRel(17.0140173, 1e-8));
        for (int i = 0; i < 4; ++i) CHECK_THAT(r.z[i], WithinAbs(kHs071Solution[i], 1e-6));
        CHECK(r.multipliers.inequality[0] >= 0.0);
        const KktResidual k = kkt_residual(p, r.z, r.multipliers);
        CHECK(k.stationarity <= 1e-8);
        CHECK(k.feasibility <= 1e-9);
        CHECK(k.complementarity <= 1e-8);
    }
}

TEST_CASE("l1 merit is non-increasing over accepted iterations") {
    const SmallProblem p = hs071();
    SolverOptions o = tight();
    o.line_search = LineSearch::kL1Merit;
    const SolveResult r = solve(p, kHs071Start, o);
    REQUIRE(r.report.converged());
    REQUIRE_FALSE(r.report.history.empty());
    for (const IterationRecord& h : r.report.history) {
        INFO("iteration " << h.iteration);
        CHECK(h.merit_after <= h.merit_before + 1e-12 * std::max(1.0, std::abs(h.merit_before)));
    }
}

TEST_CASE("equality-constrained QP matches a direct KKT solve") {
    const EqualityQp qp(20, 5, 20240917);
    const Vector direct = qp.direct_solution();
    const SolveResult r = solve(qp.problem(), Vector::Zero(20), tight());
    REQUIRE(r.report.converged());
    CHECK((r.z - direct.head(20)).lpNorm<Eigen::Infinity>() <= 1e-8);
    // Sign convention: grad f - J^T lambda = 0, so lambda = -nu of the direct system.
    CHECK((r.multipliers.equality + direct.tail(5)).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("KKT residual on hand-computed points") {
    SmallProblem p;
    p.n = 2;
    p.me = 1;
    p.mi = 1;
    p.lo = vec({0.0, -kInfinity});
    p.up = vec({kInfinity, 3.0});
    p.f = [](const Vector& z) { return z[0] + 2.0 * z[1]; };
    p.grad = [](const Vector&) { return vec({1.0, 2.0}); };
    p.ce = [](const Vector& z) { return vec({z[0] + z[1] - 1.0}); };
    p.je = [](const Vector&) { return MatrixXd(MatrixXd::Ones(1, 2)); };
    p.ci = [](const Vector& z) { return vec({z[0] - 0.5}); };
    p.ji = [](const Vector&) {
        MatrixXd j(1, 2);
        j << 1.0, 0.0;
        return j;
    };

    Multipliers mult{vec({2.0}), vec({0.0}), vec({1.0, 0.0}), vec({0.0, 0.0})};
    // z = (0.5, 0.5): grad - J_E^T*2 - z_L = (1-2-1, 2-2) = (-2, 0), scaled by max(1, 2).
    KktResidual k = kkt_residual(p, vec({0.5, 0.5}), mult);
    CHECK(k.stationarity == 1.0);
    CHECK(k.feasibility == 0.0);
    CHECK(k.complementarity == 0.25);  // z_L (z - 0) = 0.5, divided by 2

    // Violations: equality 1.5, inequality 2, z0 >= 0 by 1.5, z1 <= 3 by 1.
    mult = {vec({2.0}), vec({0.0}), vec({0.0, 0.0}), vec({0.0, 0.0})};
    k = kkt_residual(p, vec({-1.5, 4.0}), mult);
    CHECK(k.feasibility == 2.0);
    k = kkt_residual(p, vec({0.5, 4.0}), mult);
    CHECK(k.feasibility == 3.5);

    // Negative multipliers count as complementarity violations.
    mult = {vec({1.0}), vec({-0.4}), vec({0.0, 0.0}), vec({0.0, 0.0})};
    k = kkt_residual(p, vec({0.5, 0.5}), mult);
    CHECK(k.complementarity == 0.2);

    CHECK_THROWS_AS(kkt_residual(p, vec({0.5}), mult), mabopt::Error);
}

TEST_CASE("solution is invariant to objective scaling") {
    const SolveResult a = solve(rosenbrock(1.0), vec({-1.2, 1.0}), tight());
    const SolveResult b = solve(rosenbrock(100.0), vec({-1.2, 1.0}), tight());
    REQUIRE(a.report.converged());
    REQUIRE(b.report.converged());
    CHECK((a.z - b.z).lpNorm<Eigen::Infinity>() <= 10.0 * tight().kkt_tol);
}

TEST_CASE("repeated solves are bit-identical") {
    const SmallProblem p = hs071();
    const SolveResult a = solve(p, kHs071Start, tight());
    const SolveResult b = solve(p, kHs071Start, tight());
    CHECK(a.z == b.z);
    CHECK(a.multipliers.equality == b.multipliers.equality);
    CHECK(a.report.iterations == b.report.iterations);
}

TEST_CASE("multi-start keeps the best converged local minimum") {
    SmallProblem p;
    p.n = 1;
    p.lo = vec({-3.0});
    p.up = vec({3.0});
    // Double well tilted towards z = -1.
    p.f = [](const Vector& z) { return std::pow(z[0] * z[0] - 1.0, 2) + 0.1 * z[0]; };
    p.grad = [](const Vector& z) { return vec({4.0 * z[0] * (z[0] * z[0] - 1.0) + 0.1}); };
    p.hess = [](const Vector& z, const Vector&, const Vector&) {
        return MatrixXd::Constant(1, 1, 12.0 * z[0] * z[0] - 4.0);
    };
    const std::vector<Vector> starts{vec({1.2}), vec({-1.2})};
    const SolveResult right = solve(p, starts[0], tight());
    REQUIRE(right.report.converged());
    CHECK(right.z[0] > 0.0);
    const SolveResult best = solve(p, std::span<const Vector>(starts), tight());
    REQUIRE(best.report.converged());
    CHECK(best.z[0] < 0.0);
    CHECK(best.report.objective < right.report.objective);
    CHECK_THROWS_AS(solve(p, std::span<const Vector>(), tight()), mabopt::Error);
}

TEST_CASE("infeasible problem is reported, not thrown") {
    SmallProblem p;
    p.n = 1;
    p.me = 1;
    p.lo = vec({0.0});
    p.f = [](const Vector& z) { return z[0]; };
    p.grad = [](const Vector&) { return vec({1.0}); };
    p.ce = [](const Vector& z) { return vec({z[0] + 1.0}); };
    p.je = [](const Vector&) { return MatrixXd(MatrixXd::Ones(1, 1)); };
    p.hess = [](const Vector&, const Vector&, const Vector&) { return MatrixXd::Zero(1, 1); };
    SolverOptions o;
    o.max_iterations = 100;
    SolveResult r;
    REQUIRE_NOTHROW(r = solve(p, vec({1.0}), o));
    CHECK_FALSE(r.report.converged());
    CHECK(r.report.feasibility >= 0.99);
}

TEST_CASE("iteration log and history") {
    std::ostringstream log;
    SolverOptions o = tight();
    o.log = &log;
    const SolveResult r = solve(hs071(), kHs071Start, o);
    CHECK(static_cast<int>(r.report.history.size()) == r.report.iterations);
    CHECK(log.str().find("iter=1 ") != std::string::npos);
    CHECK(std::string(to_string(r.report.status)) == "converged");
}

TEST_CASE("solver option validation") {
    SolverOptions o;
    o.kkt_tol = 0.0;
    CHECK_THROWS_AS(o.validate(), mabopt::ConfigError);
    o = {};
    o.backtrack = 1.0;
    CHECK_THROWS_AS(o.validate(), mabopt::ConfigError);
}
