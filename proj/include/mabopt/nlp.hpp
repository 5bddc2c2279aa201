#pragma once

/**
 * @file
 * Generic smooth nonlinear program
 *
 *   minimize f(z)  subject to  c_E(z) = 0,  c_I(z) >= 0,  lower <= z <= upper
 *
 * together with the first-order optimality (KKT) residuals used to certify a
 * solution. Multipliers follow the convention
 *
 *   grad f - J_E^T lambda - J_I^T mu - z_L + z_U = 0,   mu, z_L, z_U >= 0.
 */

#include "mabopt/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mabopt::nlp {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Half-open range [begin, end) of variable indices.
struct IndexRange {
    Index begin = 0;
    Index end = 0;
    Index size() const { return end - begin; }
};

struct Evaluation {
    double objective = 0.0;
    Vector equalities;    ///< c_E(z)
    Vector inequalities;  ///< c_I(z), feasible when >= 0
    bool has_derivatives = false;
    Vector gradient;
    SparseMatrix equality_jacobian;    ///< structural nonzeros are kept even when their value is 0
    SparseMatrix inequality_jacobian;
};

/// Thrown by an NlpProblem that cannot be evaluated at the requested point.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/**
 * Interface consumed by the solver. Evaluations must be pure functions of z
 * so a problem instance can be shared between threads.
 */
class NlpProblem {
public:
    virtual ~NlpProblem() = default;

    virtual Index num_variables() const = 0;
    virtual Index num_equalities() const = 0;
    virtual Index num_inequalities() const { return 0; }

    virtual Vector lower_bounds() const { return Vector::Constant(num_variables(), -kInfinity); }
    virtual Vector upper_bounds() const { return Vector::Constant(num_variables(), kInfinity); }

    virtual Evaluation evaluate(const Vector& z, bool with_derivatives) const = 0;

    /**
     * Disjoint variable ranges on which the Hessian of the Lagrangian is block
     * diagonal. The quasi-Newton approximation keeps one dense block per range.
     */
    virtual std::vector<IndexRange> hessian_blocks() const { return {{0, num_variables()}}; }

    /// True when lagrangian_hessian() is implemented.
    virtual bool has_hessian() const { return false; }

    /**
     * Hessian of f - lambda^T c_E - mu^T c_I, one dense matrix per entry of
     * hessian_blocks(). Off-block entries must be zero.
     */
    virtual std::vector<Eigen::MatrixXd> lagrangian_hessian(const Vector& /*z*/, const Vector& /*lambda*/,
                                                            const Vector& /*mu*/) const {
        throw Error("this problem does not provide a Lagrangian Hessian");
    }
};

struct Multipliers {
    Vector equality;    ///< lambda
    Vector inequality;  ///< mu >= 0
    Vector lower;       ///< z_L >= 0
    Vector upper;       ///< z_U >= 0
};

struct KktResidual {
    double stationarity = kInfinity;
    double feasibility = kInfinity;
    double complementarity = kInfinity;
};

namespace detail {

inline double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

}  // namespace detail

/**
 * KKT residuals at @p z from an evaluation with derivatives.
 *
 * Stationarity and complementarity are divided by max(1, ||grad f||_inf).
 * Feasibility (constraint and bound violation) is reported unscaled.
 * Negative multipliers count as complementarity violations.
 */
inline KktResidual kkt_residual(const Evaluation& ev, const Vector& z, const Vector& lower, const Vector& upper,
                                const Multipliers& mult) {
    if (!ev.has_derivatives) throw Error("kkt_residual needs an evaluation with derivatives");
    const Index n = z.size();
    const double scale = std::max(1.0, detail::inf_norm(ev.gradient));

    Vector stat = ev.gradient;
    if (ev.equalities.size() > 0) stat -= ev.equality_jacobian.transpose() * mult.equality;
    if (ev.inequalities.size() > 0) stat -= ev.inequality_jacobian.transpose() * mult.inequality;
    stat -= mult.lower;
    stat += mult.upper;

    double feas = detail::inf_norm(ev.equalities);
    double comp = 0.0;
    for (Index i = 0; i < ev.inequalities.size(); ++i) {
        feas = std::max(feas, -ev.inequalities[i]);
        comp = std::max({comp, std::abs(mult.inequality[i] * ev.inequalities[i]), -mult.inequality[i]});
    }
    for (Index i = 0; i < n; ++i) {
        if (std::isfinite(lower[i])) {
            feas = std::max(feas, lower[i] - z[i]);
            comp = std::max({comp, std::abs(mult.lower[i] * (z[i] - lower[i])), -mult.lower[i]});
        } else {
            comp = std::max(comp, std::abs(mult.lower[i]));
        }
        if (std::isfinite(upper[i])) {
            feas = std::max(feas, z[i] - upper[i]);
            comp = std::max({comp, std::abs(mult.upper[i] * (upper[i] - z[i])), -mult.upper[i]});
        } else {
            comp = std::max(comp, std::abs(mult.upper[i]));
        }
    }
    return {detail::inf_norm(stat) / scale, std::max(feas, 0.0), comp / scale};
}

inline KktResidual kkt_residual(const NlpProblem& problem, const Vector& z, const Multipliers& mult) {
    const Index n = problem.num_variables();
    if (z.size() != n || mult.equality.size() != problem.num_equalities() ||
        mult.inequality.size() != problem.num_inequalities() || mult.lower.size() != n || mult.upper.size() != n) {
        throw Error("kkt_residual: dimension mismatch");
    }
    const Evaluation ev = problem.evaluate(z, true);
    return kkt_residual(ev, z, problem.lower_bounds(), problem.upper_bounds(), mult);
}

}  // namespace mabopt::nlp
