#pragma once

/**
 * @file
 * Primal-dual interior-point solver for NlpProblem.
 *
 * Inequalities are turned into equalities with bounded slacks, variable bounds
 * enter through a logarithmic barrier, and each Newton step solves the sparse
 * symmetric KKT system with an LDL^T factorization and inertia correction.
 * Curvature is the problem's exact Lagrangian Hessian when available,
 * otherwise damped BFGS kept block-diagonal on hessian_blocks(). Steps are
 * globalized by a filter (default) or an l1 exact-penalty merit function,
 * both with backtracking and second-order corrections.
 */

#include "mabopt/nlp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mabopt::nlp {

enum class SolverStatus { kConverged, kMaxIterations, kLineSearchFailure, kInfeasible };

inline const char* to_string(SolverStatus s) {
    switch (s) {
        case SolverStatus::kConverged: return "converged";
        case SolverStatus::kMaxIterations: return "max_iter";
        case SolverStatus::kLineSearchFailure: return "line_search_failure";
        case SolverStatus::kInfeasible: return "infeasible";
    }
    return "unknown";
}

/// Step acceptance rule.
enum class LineSearch {
    kFilter,   ///< barrier objective / constraint violation filter
    kL1Merit,  ///< Armijo decrease of the exact l1 penalty function
};

/// Source of second-order information.
enum class HessianMode {
    kAuto,         ///< exact when the problem provides it, otherwise quasi-Newton
    kExact,
    kQuasiNewton,  ///< damped BFGS on every hessian block
};

/// Treatment of indefinite exact Hessian blocks before the KKT factorization.
enum class Convexify {
    kNone,    ///< keep the exact blocks, rely on inertia correction
    kMirror,  ///< replace each eigenvalue by its absolute value
    kClip,    ///< replace negative eigenvalues by zero
};

struct SolverOptions {
    double kkt_tol = 1e-6;
    double feasibility_tol = 1e-6;
    int max_iterations = 500;

    // Line search.
    LineSearch line_search = LineSearch::kFilter;
    double armijo = 1e-4;
    double backtrack = 0.5;
    double min_step = 1e-12;
    bool second_order_correction = true;

    // Barrier.
    double mu_init = 0.1;
    double bound_push = 1e-2;
    double tau_min = 0.99;

    HessianMode hessian = HessianMode::kAuto;
    Convexify convexify = Convexify::kNone;  ///< exact Hessian only

    // Quasi-Newton.
    double hessian_init = 1.0;
    double bfgs_damping = 0.2;

    // Regularization of the KKT matrix.
    double primal_regularization = 1e-10;
    double dual_regularization = 1e-10;

    std::ostream* log = nullptr;  ///< one line per major iteration when set

    void validate() const {
        if (!(kkt_tol > 0.0) || !(feasibility_tol > 0.0)) throw ConfigError("solver tolerances must be > 0");
        if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
        if (!(backtrack > 0.0 && backtrack < 1.0)) throw ConfigError("backtrack factor must lie in (0, 1)");
        if (!(armijo > 0.0 && armijo < 0.5)) throw ConfigError("armijo constant must lie in (0, 0.5)");
    }
};

struct IterationRecord {
    int iteration = 0;
    double objective = 0.0;
    double stationarity = 0.0;
    double feasibility = 0.0;
    double complementarity = 0.0;
    double barrier = 0.0;
    double step = 0.0;        ///< accepted primal step length
    double dual_step = 0.0;
    double penalty = 0.0;     ///< l1 penalty weight of the merit function
    double regularization = 0.0;  ///< primal shift added for inertia correction
    double merit_before = 0.0;
    double merit_after = 0.0;  ///< both evaluated with the same barrier and penalty
    bool second_order_correction = false;
};

struct SolverReport {
    SolverStatus status = SolverStatus::kMaxIterations;
    int iterations = 0;
    double objective = 0.0;
    double stationarity = kInfinity;
    double feasibility = kInfinity;
    double complementarity = kInfinity;
    long evaluations = 0;
    int hessian_resets = 0;
    bool exact_hessian = false;
    std::vector<IterationRecord> history;

    bool converged() const { return status == SolverStatus::kConverged; }
};

struct SolveResult {
    Vector z;
    Multipliers multipliers;
    SolverReport report;
};

namespace detail {

class InteriorPointSolver {
public:
    InteriorPointSolver(const NlpProblem& problem, const SolverOptions& opts)
        : problem_(problem), opts_(opts) {
        opts_.validate();
        nz_ = problem_.num_variables();
        me_ = problem_.num_equalities();
        mi_ = problem_.num_inequalities();
        n_ = nz_ + mi_;
        m_ = me_ + mi_;
        const Vector zl = problem_.lower_bounds();
        const Vector zu = problem_.upper_bounds();
        if (zl.size() != nz_ || zu.size() != nz_) throw Error("bound vectors have the wrong size");
        lo_ = Vector::Constant(n_, -kInfinity);
        up_ = Vector::Constant(n_, kInfinity);
        lo_.head(nz_) = zl;
        up_.head(nz_) = zu;
        lo_.tail(mi_).setZero();
        for (Index i = 0; i < n_; ++i) {
            if (lo_[i] > up_[i]) throw Error("lower bound exceeds upper bound");
            if (lo_[i] == up_[i]) throw Error("fixed variables are not supported; remove them from the problem");
        }
        blocks_ = problem_.hessian_blocks();
        validate_blocks();
        if (opts_.hessian == HessianMode::kExact && !problem_.has_hessian()) {
            throw ConfigError("exact Hessian requested but the problem provides none");
        }
        exact_ = opts_.hessian == HessianMode::kExact ||
                 (opts_.hessian == HessianMode::kAuto && problem_.has_hessian());
        reset_hessian();
    }

    SolveResult run(const Vector& z0) {
        if (z0.size() != nz_) throw Error("initial point has the wrong dimension");
        SolverReport report;
        report.exact_hessian = exact_;
        mu_ = opts_.mu_init;

        // Initial point strictly inside the bounds.
        Vector w(n_);
        w.head(nz_) = z0;
        Point cur = evaluate(w.head(nz_), Vector(), true, report);
        if (mi_ > 0) w.tail(mi_) = cur.ev.inequalities;
        push_inside(w);
        cur = evaluate(w.head(nz_), w.tail(mi_), true, report);
        cur.w = w;

        zl_ = Vector::Zero(n_);
        zu_ = Vector::Zero(n_);
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i)) zl_[i] = 1.0;
            if (has_up(i)) zu_[i] = 1.0;
        }
        y_ = initial_multipliers(cur);
        nu_ = 0.0;
        const double theta0 = cur.c.lpNorm<1>();
        theta_max_ = 1e4 * std::max(1.0, theta0);
        theta_min_ = 1e-4 * std::max(1.0, theta0);
        filter_.clear();

        for (int iter = 0;; ++iter) {
            const KktResidual res = residual(cur);
            report.iterations = iter;
            report.objective = cur.ev.objective;
            report.stationarity = res.stationarity;
            report.feasibility = res.feasibility;
            report.complementarity = res.complementarity;
            if (res.stationarity <= opts_.kkt_tol && res.feasibility <= opts_.feasibility_tol &&
                res.complementarity <= opts_.kkt_tol) {
                report.status = SolverStatus::kConverged;
                break;
            }
            if (iter >= opts_.max_iterations) {
                report.status = SolverStatus::kMaxIterations;
                break;
            }
            update_barrier(cur);
            if (exact_) load_exact_hessian(cur);

            std::optional<Step> step = take_step(cur, report);
            if (!step && !exact_) {
                // Retry once with a fresh curvature model before giving up.
                reset_hessian();
                ++report.hessian_resets;
                step = take_step(cur, report);
            }
            if (!step && exact_ && opts_.line_search == LineSearch::kL1Merit && prox_ < 1e6) {
                // Shorter, better-modelled steps before giving up.
                prox_ = std::max(1e-2, 100.0 * prox_);
                step = take_step(cur, report);
            }
            if (!step) {
                report.status = looks_infeasible(cur) ? SolverStatus::kInfeasible : SolverStatus::kLineSearchFailure;
                break;
            }

            adapt_proximal_shift(step->alpha);

            IterationRecord rec;
            rec.iteration = iter;
            rec.objective = step->next.ev.objective;
            rec.barrier = mu_;
            rec.step = step->alpha;
            rec.dual_step = step->alpha_dual;
            rec.penalty = nu_;
            rec.regularization = delta_w_;
            rec.merit_before = step->merit_before;
            rec.merit_after = step->merit_after;
            rec.second_order_correction = step->soc;

            const Point prev = std::move(cur);
            cur = std::move(step->next);
            y_ += step->alpha * step->dy;
            zl_ += step->alpha_dual * step->dzl;
            zu_ += step->alpha_dual * step->dzu;
            safeguard_bound_multipliers(cur.w);
            if (!exact_) update_hessian(prev, cur);

            const KktResidual after = residual(cur);
            rec.stationarity = after.stationarity;
            rec.feasibility = after.feasibility;
            rec.complementarity = after.complementarity;
            report.history.push_back(rec);
            if (opts_.log) log_line(rec);
        }

        SolveResult out;
        out.z = cur.w.head(nz_);
        out.multipliers = multipliers();
        out.report = std::move(report);
        return out;
    }

private:
    struct Point {
        Vector w;
        Evaluation ev;
        Vector c;        ///< [c_E; c_I - s]
        SparseMatrix J;  ///< Jacobian of c with respect to w
        Vector grad;     ///< gradient of f with respect to w
    };

    struct Step {
        Point next;
        Vector dy, dzl, dzu;
        double alpha = 0.0;
        double alpha_dual = 0.0;
        double merit_before = 0.0;
        double merit_after = 0.0;
        bool soc = false;
    };

    bool has_lo(Index i) const { return std::isfinite(lo_[i]); }
    bool has_up(Index i) const { return std::isfinite(up_[i]); }

    void validate_blocks() {
        std::vector<int> owner(static_cast<std::size_t>(nz_), -1);
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const IndexRange& r = blocks_[b];
            if (r.begin < 0 || r.end > nz_ || r.begin > r.end) throw Error("invalid hessian block");
            for (Index i = r.begin; i < r.end; ++i) {
                if (owner[static_cast<std::size_t>(i)] >= 0) throw Error("hessian blocks overlap");
                owner[static_cast<std::size_t>(i)] = static_cast<int>(b);
            }
        }
    }

    /// Grows the proximal shift after heavily backtracked steps and relaxes it after full ones.
    void adapt_proximal_shift(double alpha) {
        if (!exact_ || opts_.line_search != LineSearch::kL1Merit) return;
        if (alpha < 0.1) {
            prox_ = std::max(1e-4, 10.0 * prox_);
        } else if (alpha >= 0.5) {
            prox_ = prox_ <= 1e-8 ? 0.0 : prox_ / 10.0;
        }
    }

    static void convexify_block(Eigen::MatrixXd& blk, Convexify mode) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (blk + blk.transpose()));
        Vector ev = es.eigenvalues();
        for (Index i = 0; i < ev.size(); ++i) ev[i] = mode == Convexify::kMirror ? std::abs(ev[i]) : std::max(ev[i], 0.0);
        blk = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    }

    void load_exact_hessian(const Point& pt) {
        const Multipliers mult = multipliers();
        std::vector<Eigen::MatrixXd> h = problem_.lagrangian_hessian(pt.w.head(nz_), mult.equality, mult.inequality);
        if (h.size() != blocks_.size()) throw Error("lagrangian_hessian returned the wrong number of blocks");
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            if (h[b].rows() != blocks_[b].size() || h[b].cols() != blocks_[b].size() || !h[b].allFinite()) {
                throw EvaluationError("lagrangian_hessian returned an invalid block");
            }
        }
        if (opts_.convexify != Convexify::kNone) {
            for (auto& blk : h) convexify_block(blk, opts_.convexify);
        }
        hess_ = std::move(h);
    }

    void reset_hessian() {
        hess_.clear();
        hess_fresh_.clear();
        for (const IndexRange& r : blocks_) {
            hess_.push_back(Eigen::MatrixXd::Identity(r.size(), r.size()) * opts_.hessian_init);
            hess_fresh_.push_back(true);
        }
    }

    void push_inside(Vector& w) const {
        const double k = opts_.bound_push;
        for (Index i = 0; i < n_; ++i) {
            const bool l = has_lo(i), u = has_up(i);
            if (l && u) {
                const double width = up_[i] - lo_[i];
                const double pl = std::min(k * std::max(1.0, std::abs(lo_[i])), k * width);
                const double pu = std::min(k * std::max(1.0, std::abs(up_[i])), k * width);
                w[i] = std::clamp(w[i], lo_[i] + pl, up_[i] - pu);
            } else if (l) {
                w[i] = std::max(w[i], lo_[i] + k * std::max(1.0, std::abs(lo_[i])));
            } else if (u) {
                w[i] = std::min(w[i], up_[i] - k * std::max(1.0, std::abs(up_[i])));
            }
        }
    }

    Point evaluate(const Vector& z, const Vector& s, bool derivs, SolverReport& report) const {
        ++report.evaluations;
        Point pt;
        pt.ev = problem_.evaluate(z, derivs);
        if (pt.ev.equalities.size() != me_ || pt.ev.inequalities.size() != mi_) {
            throw Error("problem returned constraint vectors of the wrong size");
        }
        if (!std::isfinite(pt.ev.objective) || !pt.ev.equalities.allFinite() || !pt.ev.inequalities.allFinite()) {
            throw EvaluationError("non-finite problem values");
        }
        pt.w.resize(n_);
        pt.w.head(nz_) = z;
        if (mi_ > 0 && s.size() == mi_) pt.w.tail(mi_) = s;
        pt.c.resize(m_);
        pt.c.head(me_) = pt.ev.equalities;
        if (mi_ > 0) pt.c.tail(mi_) = pt.ev.inequalities - (s.size() == mi_ ? s : Vector::Zero(mi_));
        if (derivs) build_derivatives(pt);
        return pt;
    }

    void build_derivatives(Point& pt) const {
        if (!pt.ev.has_derivatives || pt.ev.gradient.size() != nz_ || !pt.ev.gradient.allFinite()) {
            throw EvaluationError("problem returned no usable derivatives");
        }
        pt.grad = Vector::Zero(n_);
        pt.grad.head(nz_) = pt.ev.gradient;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(pt.ev.equality_jacobian.nonZeros() +
                                              pt.ev.inequality_jacobian.nonZeros() + mi_));
        auto append = [&](const SparseMatrix& a, Index row0) {
            for (Index col = 0; col < a.outerSize(); ++col) {
                for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
                    if (!std::isfinite(it.value())) throw EvaluationError("non-finite Jacobian entry");
                    trip.emplace_back(row0 + it.row(), it.col(), it.value());
                }
            }
        };
        if (me_ > 0) append(pt.ev.equality_jacobian, 0);
        if (mi_ > 0) {
            append(pt.ev.inequality_jacobian, me_);
            for (Index i = 0; i < mi_; ++i) trip.emplace_back(me_ + i, nz_ + i, -1.0);
        }
        pt.J.resize(m_, n_);
        pt.J.setFromTriplets(trip.begin(), trip.end());
    }

    Vector initial_multipliers(const Point& pt) {
        if (m_ == 0) return Vector();
        // Least-squares estimate from [I J^T; J 0] [d; y] = [-(grad - zl + zu); 0].
        Vector diag = Vector::Ones(n_);
        if (!factorize(pt.J, diag, /*identity_hessian=*/true)) return Vector::Zero(m_);
        Vector rhs = Vector::Zero(n_ + m_);
        rhs.head(n_) = -(pt.grad - zl_ + zu_);
        const Vector sol = solve_kkt(rhs);
        Vector y = sol.tail(m_);
        if (!y.allFinite() || y.lpNorm<Eigen::Infinity>() > 1e3) y.setZero();
        return y;
    }

    /// Residuals of the original problem at the current iterate.
    KktResidual residual(const Point& pt) const {
        return kkt_residual(pt.ev, pt.w.head(nz_), lo_.head(nz_), up_.head(nz_), multipliers());
    }

    Multipliers multipliers() const {
        Multipliers mult;
        mult.equality = m_ > 0 ? Vector(-y_.head(me_)) : Vector();
        mult.inequality = mi_ > 0 ? Vector(-y_.tail(mi_)) : Vector();
        mult.lower = zl_.head(nz_);
        mult.upper = zu_.head(nz_);
        return mult;
    }

    double barrier_error(const Point& pt) const {
        const double smax = 100.0;
        const double nm = static_cast<double>(std::max<Index>(1, m_ + 2 * n_));
        const double sd = std::max(smax, (y_.lpNorm<1>() + zl_.lpNorm<1>() + zu_.lpNorm<1>()) / nm) / smax;
        const double sc = std::max(smax, (zl_.lpNorm<1>() + zu_.lpNorm<1>()) / std::max<double>(1.0, 2.0 * n_)) / smax;
        Vector dual = pt.grad - zl_ + zu_;
        if (m_ > 0) dual += pt.J.transpose() * y_;
        double comp = 0.0;
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i)) comp = std::max(comp, std::abs((pt.w[i] - lo_[i]) * zl_[i] - mu_));
            if (has_up(i)) comp = std::max(comp, std::abs((up_[i] - pt.w[i]) * zu_[i] - mu_));
        }
        return std::max({nlp::detail::inf_norm(dual) / sd, nlp::detail::inf_norm(pt.c), comp / sc});
    }

    void update_barrier(const Point& pt) {
        const double mu_min = opts_.kkt_tol / 10.0;
        while (mu_ > mu_min && barrier_error(pt) <= 10.0 * mu_) {
            mu_ = std::max(mu_min, std::min(0.2 * mu_, std::pow(mu_, 1.5)));
            filter_.clear();
        }
    }

    double barrier_objective(const Point& pt) const {
        double phi = pt.ev.objective;
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i)) phi -= mu_ * std::log(pt.w[i] - lo_[i]);
            if (has_up(i)) phi -= mu_ * std::log(up_[i] - pt.w[i]);
        }
        return phi;
    }

    double merit(const Point& pt) const { return barrier_objective(pt) + nu_ * pt.c.lpNorm<1>(); }

    Vector barrier_gradient(const Point& pt) const {
        Vector g = pt.grad;
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i)) g[i] -= mu_ / (pt.w[i] - lo_[i]);
            if (has_up(i)) g[i] += mu_ / (up_[i] - pt.w[i]);
        }
        return g;
    }

    Vector sigma(const Point& pt) const {
        Vector s = Vector::Zero(n_);
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i)) s[i] += zl_[i] / (pt.w[i] - lo_[i]);
            if (has_up(i)) s[i] += zu_[i] / (up_[i] - pt.w[i]);
        }
        return s;
    }

    /**
     * Assembles and factorizes the regularized KKT matrix, shifting the
     * primal block until the inertia is (n, m, 0). Returns false on failure.
     */
    bool factorize(const SparseMatrix& J, const Vector& diag, bool identity_hessian) {
        double delta = identity_hessian ? 0.0 : prox_;
        for (int attempt = 0; attempt < 40; ++attempt) {
            if (assemble_and_factorize(J, diag, identity_hessian, delta)) {
                if (!identity_hessian) delta_w_ = delta;
                if (delta > 0.0) last_delta_w_ = delta;
                return true;
            }
            if (delta == 0.0) {
                delta = last_delta_w_ == 0.0 ? 1e-4 : std::max(1e-20, last_delta_w_ / 3.0);
            } else if (delta == prox_ && attempt == 0) {
                delta = std::max(10.0 * prox_, last_delta_w_ == 0.0 ? 1e-4 : last_delta_w_ / 3.0);
            } else {
                delta *= last_delta_w_ == 0.0 ? 100.0 : 8.0;
            }
            if (delta > 1e40) break;
        }
        return false;
    }

    bool assemble_and_factorize(const SparseMatrix& J, const Vector& diag, bool identity_hessian, double delta) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(J.nonZeros() + n_ + m_ + hessian_nonzeros()));
        for (Index i = 0; i < n_; ++i) trip.emplace_back(i, i, diag[i] + delta + opts_.primal_regularization);
        if (!identity_hessian) {
            for (std::size_t b = 0; b < blocks_.size(); ++b) {
                const Index off = blocks_[b].begin;
                const Eigen::MatrixXd& h = hess_[b];
                for (Index c = 0; c < h.cols(); ++c) {
                    for (Index r = c; r < h.rows(); ++r) trip.emplace_back(off + r, off + c, h(r, c));
                }
            }
        }
        for (Index col = 0; col < J.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(J, col); it; ++it) {
                trip.emplace_back(n_ + it.row(), it.col(), it.value());
            }
        }
        for (Index i = 0; i < m_; ++i) trip.emplace_back(n_ + i, n_ + i, -opts_.dual_regularization);
        kkt_.resize(n_ + m_, n_ + m_);
        kkt_.setFromTriplets(trip.begin(), trip.end());
        kkt_.makeCompressed();

        if (!pattern_ready_ || !same_pattern(kkt_)) {
            ldlt_.analyzePattern(kkt_);
            pattern_outer_.assign(kkt_.outerIndexPtr(), kkt_.outerIndexPtr() + kkt_.outerSize() + 1);
            pattern_inner_.assign(kkt_.innerIndexPtr(), kkt_.innerIndexPtr() + kkt_.nonZeros());
            pattern_ready_ = true;
        }
        ldlt_.factorize(kkt_);
        return ldlt_.info() == Eigen::Success && correct_inertia();
    }

    Index hessian_nonzeros() const {
        Index nnz = 0;
        for (const IndexRange& r : blocks_) nnz += r.size() * (r.size() + 1) / 2;
        return nnz;
    }

    bool same_pattern(const SparseMatrix& a) const {
        if (static_cast<std::size_t>(a.nonZeros()) != pattern_inner_.size()) return false;
        if (static_cast<std::size_t>(a.outerSize() + 1) != pattern_outer_.size()) return false;
        return std::equal(pattern_outer_.begin(), pattern_outer_.end(), a.outerIndexPtr()) &&
               std::equal(pattern_inner_.begin(), pattern_inner_.end(), a.innerIndexPtr());
    }

    bool correct_inertia() const {
        const Vector d = ldlt_.vectorD();
        Index pos = 0, neg = 0;
        for (Index i = 0; i < d.size(); ++i) {
            if (!std::isfinite(d[i])) return false;
            if (d[i] > 0.0) ++pos;
            else if (d[i] < 0.0) ++neg;
        }
        return pos == n_ && neg == m_;
    }

    /// Solves with the factorized matrix and refines toward the system without dual regularization.
    Vector solve_kkt(const Vector& rhs) const {
        Vector x = ldlt_.solve(rhs);
        for (int it = 0; it < 2 && m_ > 0; ++it) {
            Vector r = rhs - kkt_.selfadjointView<Eigen::Lower>() * x;
            r.tail(m_) -= opts_.dual_regularization * x.tail(m_);
            x += ldlt_.solve(r);
        }
        return x;
    }

    double fraction_to_boundary(const Vector& w, const Vector& dw, double tau) const {
        double alpha = 1.0;
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i) && dw[i] < 0.0) alpha = std::min(alpha, -tau * (w[i] - lo_[i]) / dw[i]);
            if (has_up(i) && dw[i] > 0.0) alpha = std::min(alpha, tau * (up_[i] - w[i]) / dw[i]);
        }
        return alpha;
    }

    double multiplier_step(const Vector& dzl, const Vector& dzu, double tau) const {
        double alpha = 1.0;
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i) && dzl[i] < 0.0) alpha = std::min(alpha, -tau * zl_[i] / dzl[i]);
            if (has_up(i) && dzu[i] < 0.0) alpha = std::min(alpha, -tau * zu_[i] / dzu[i]);
        }
        return alpha;
    }

    std::optional<Point> try_point(const Vector& w, bool derivs, SolverReport& report) const {
        try {
            Point pt = evaluate(w.head(nz_), w.tail(mi_), derivs, report);
            pt.w = w;
            return pt;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

    std::optional<Step> take_step(const Point& cur, SolverReport& report) {
        const Vector sig = sigma(cur);
        if (!factorize(cur.J, sig, false)) return std::nullopt;

        const Vector gphi = barrier_gradient(cur);
        Vector rhs(n_ + m_);
        rhs.head(n_) = -gphi;
        if (m_ > 0) {
            rhs.head(n_) -= cur.J.transpose() * y_;
            rhs.tail(m_) = -cur.c;
        }
        const Vector sol = solve_kkt(rhs);
        if (!sol.allFinite()) return std::nullopt;
        const Vector dw = sol.head(n_);

        Step step;
        step.dy = sol.tail(m_);
        step.dzl = Vector::Zero(n_);
        step.dzu = Vector::Zero(n_);
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i)) {
                const double d = cur.w[i] - lo_[i];
                step.dzl[i] = mu_ / d - zl_[i] - zl_[i] / d * dw[i];
            }
            if (has_up(i)) {
                const double d = up_[i] - cur.w[i];
                step.dzu[i] = mu_ / d - zu_[i] + zu_[i] / d * dw[i];
            }
        }

        const double tau = std::max(opts_.tau_min, 1.0 - mu_);
        const double alpha_max = fraction_to_boundary(cur.w, dw, tau);
        step.alpha_dual = multiplier_step(step.dzl, step.dzu, tau);

        // Penalty weight large enough for dw to be a descent direction of the l1 merit function.
        const double theta = cur.c.lpNorm<1>();
        Vector hdw = sig.cwiseProduct(dw);
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            hdw.segment(blocks_[b].begin, blocks_[b].size()) +=
                hess_[b] * dw.segment(blocks_[b].begin, blocks_[b].size());
        }
        const double gdw = gphi.dot(dw);
        const double curvature = std::max(0.0, dw.dot(hdw));
        if (theta > 0.0) {
            const double rho = 0.1;
            const double needed = (gdw + 0.5 * curvature) / ((1.0 - rho) * theta);
            if (needed > nu_) nu_ = needed + 1e-6;
        }
        const double phi = barrier_objective(cur);
        const double merit0 = phi + nu_ * theta;
        const double slope = gdw - nu_ * theta;
        step.merit_before = merit0;

        // Negligible steps are accepted without a line search.
        const double wnorm = std::max(1.0, cur.w.lpNorm<Eigen::Infinity>());
        if (dw.lpNorm<Eigen::Infinity>() <= 10.0 * std::numeric_limits<double>::epsilon() * wnorm) {
            std::optional<Point> pt = try_point(cur.w + alpha_max * dw, true, report);
            if (!pt) return std::nullopt;
            step.merit_after = merit(*pt);
            step.alpha = alpha_max;
            step.next = std::move(*pt);
            return step;
        }

        // Acceptance test for a trial point reached with primal step alpha.
        bool f_type = false;
        auto acceptable = [&](const Point& t, double alpha) {
            const double tt = t.c.lpNorm<1>();
            const double pt = barrier_objective(t);
            if (!std::isfinite(pt) || !std::isfinite(tt)) return false;
            if (opts_.line_search == LineSearch::kL1Merit) {
                return pt + nu_ * tt <= merit0 + opts_.armijo * alpha * slope;
            }
            if (tt > theta_max_ || in_filter(tt, pt)) return false;
            const bool switching = gdw < 0.0 && alpha * std::pow(-gdw, kSPhi) > std::pow(theta, kSTheta);
            f_type = switching && theta <= theta_min_;
            if (f_type) return pt <= phi + opts_.armijo * alpha * gdw;
            return tt <= (1.0 - kGammaTheta) * theta || pt <= phi - kGammaPhi * theta;
        };
        auto accept = [&](Point&& t, double alpha, bool soc) -> Step {
            build_derivatives_or_reevaluate(t, report);
            if (opts_.line_search == LineSearch::kFilter && !f_type) {
                filter_.emplace_back((1.0 - kGammaTheta) * theta, phi - kGammaPhi * theta);
            }
            step.alpha = alpha;
            step.soc = soc;
            step.merit_after = merit(t);
            step.next = std::move(t);
            return std::move(step);
        };

        double alpha = alpha_max;
        bool first = true;
        while (alpha >= opts_.min_step) {
            std::optional<Point> pt = try_point(cur.w + alpha * dw, false, report);
            if (pt) {
                if (acceptable(*pt, alpha)) return accept(std::move(*pt), alpha, false);
                if (first && opts_.second_order_correction && m_ > 0 && pt->c.lpNorm<1>() >= theta) {
                    // Up to four accumulated second-order corrections of the full step.
                    Vector csoc = alpha * cur.c + pt->c;
                    double theta_old = pt->c.lpNorm<1>();
                    for (int p = 0; p < 4; ++p) {
                        Vector rsoc(n_ + m_);
                        rsoc.head(n_) = rhs.head(n_);
                        rsoc.tail(m_) = -csoc;
                        const Vector dws = solve_kkt(rsoc).head(n_);
                        if (!dws.allFinite()) break;
                        const double as = fraction_to_boundary(cur.w, dws, tau);
                        std::optional<Point> ps = try_point(cur.w + as * dws, false, report);
                        if (!ps) break;
                        if (acceptable(*ps, alpha)) return accept(std::move(*ps), alpha, true);
                        const double theta_soc = ps->c.lpNorm<1>();
                        if (theta_soc > 0.99 * theta_old) break;
                        theta_old = theta_soc;
                        csoc = as * csoc + ps->c;
                    }
                }
            }
            first = false;
            alpha *= opts_.backtrack;
        }
        return std::nullopt;
    }

    bool in_filter(double theta, double phi) const {
        for (const auto& [ft, fp] : filter_) {
            if (theta >= ft && phi >= fp) return true;
        }
        return false;
    }

    void build_derivatives_or_reevaluate(Point& pt, SolverReport& report) const {
        if (pt.J.size() > 0 || (m_ == 0 && pt.grad.size() == n_)) return;
        const Vector w = pt.w;
        pt = evaluate(w.head(nz_), w.tail(mi_), true, report);
        pt.w = w;
    }

    void safeguard_bound_multipliers(const Vector& w) {
        const double kappa = 1e10;
        for (Index i = 0; i < n_; ++i) {
            if (has_lo(i)) {
                const double d = w[i] - lo_[i];
                zl_[i] = std::clamp(zl_[i], mu_ / (kappa * d), kappa * mu_ / d);
            }
            if (has_up(i)) {
                const double d = up_[i] - w[i];
                zu_[i] = std::clamp(zu_[i], mu_ / (kappa * d), kappa * mu_ / d);
            }
        }
    }

    Vector lagrangian_gradient(const Point& pt, const Vector& y) const {
        Vector g = pt.grad.head(nz_);
        if (m_ > 0) g += (pt.J.transpose() * y).head(nz_);
        return g;
    }

    /// Damped BFGS update of every Hessian block.
    void update_hessian(const Point& prev, const Point& cur) {
        const Vector s = cur.w.head(nz_) - prev.w.head(nz_);
        const Vector yv = lagrangian_gradient(cur, y_) - lagrangian_gradient(prev, y_);
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const IndexRange& r = blocks_[b];
            const Vector sb = s.segment(r.begin, r.size());
            Vector yb = yv.segment(r.begin, r.size());
            const double snorm = sb.norm();
            if (!(snorm > 1e-14)) continue;
            Eigen::MatrixXd& h = hess_[b];
            double sy = sb.dot(yb);
            if (hess_fresh_[b] && sy > 0.0) {
                const double scale = yb.squaredNorm() / sy;
                if (std::isfinite(scale) && scale > 0.0) h = Eigen::MatrixXd::Identity(r.size(), r.size()) * scale;
            }
            hess_fresh_[b] = false;
            Vector hs = h * sb;
            const double shs = sb.dot(hs);
            if (!(shs > 0.0)) continue;
            if (sy < opts_.bfgs_damping * shs) {
                const double theta = (1.0 - opts_.bfgs_damping) * shs / (shs - sy);
                yb = theta * yb + (1.0 - theta) * hs;
                sy = sb.dot(yb);
            }
            if (!(sy > 0.0) || !yb.allFinite()) continue;
            h.noalias() += (yb * yb.transpose()) / sy;
            h.noalias() -= (hs * hs.transpose()) / shs;
            h = 0.5 * (h + h.transpose()).eval();
        }
    }

    bool looks_infeasible(const Point& pt) const {
        const double feas = nlp::detail::inf_norm(pt.c);
        if (feas <= opts_.feasibility_tol || m_ == 0) return false;
        const Vector g = pt.J.transpose() * pt.c;
        return nlp::detail::inf_norm(g) <= 1e-8 * std::max(1.0, feas);
    }

    void log_line(const IterationRecord& r) const {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "iter=%d obj=%.10e stat=%.3e feas=%.3e comp=%.3e mu=%.3e alpha=%.3e alpha_dual=%.3e reg=%.1e%s\n",
                      r.iteration, r.objective, r.stationarity, r.feasibility, r.complementarity, r.barrier, r.step,
                      r.dual_step, r.regularization, r.second_order_correction ? " soc=1" : "");
        *opts_.log << buf;
        opts_.log->flush();
    }

    const NlpProblem& problem_;
    SolverOptions opts_;
    Index nz_ = 0, me_ = 0, mi_ = 0, n_ = 0, m_ = 0;
    Vector lo_, up_;
    std::vector<IndexRange> blocks_;
    std::vector<Eigen::MatrixXd> hess_;
    std::vector<bool> hess_fresh_;
    static constexpr double kGammaTheta = 1e-5;
    static constexpr double kGammaPhi = 1e-8;
    static constexpr double kSTheta = 1.1;
    static constexpr double kSPhi = 2.3;

    std::vector<std::pair<double, double>> filter_;  ///< (theta, phi) corners
    double theta_max_ = kInfinity;
    double theta_min_ = 0.0;

    bool exact_ = false;
    double delta_w_ = 0.0;       ///< shift used for the current step
    double last_delta_w_ = 0.0;  ///< last nonzero shift, seeds the next correction
    double prox_ = 0.0;          ///< step-length driven proximal shift (exact Hessian only)

    Vector y_, zl_, zu_;
    double mu_ = 0.1;
    double nu_ = 0.0;

    SparseMatrix kkt_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower> ldlt_;
    bool pattern_ready_ = false;
    std::vector<int> pattern_outer_, pattern_inner_;
};

}  // namespace detail

/// Solves @p problem from @p z0; non-convergence is reported through the status, never thrown.
inline SolveResult solve(const NlpProblem& problem, const Vector& z0, const SolverOptions& opts = {}) {
    detail::InteriorPointSolver solver(problem, opts);
    return solver.run(z0);
}

/**
 * Multi-start variant: solves from every start and returns the converged
 * result with the lowest objective (or, when none converged, the least
 * infeasible one).
 */
inline SolveResult solve(const NlpProblem& problem, std::span<const Vector> starts, const SolverOptions& opts = {}) {
    if (starts.empty()) throw Error("multi-start solve needs at least one initial point");
    std::optional<SolveResult> best;
    auto better = [](const SolveResult& a, const SolveResult& b) {
        if (a.report.converged() != b.report.converged()) return a.report.converged();
        if (!a.report.converged() && a.report.feasibility != b.report.feasibility) {
            return a.report.feasibility < b.report.feasibility;
        }
        return a.report.objective < b.report.objective;
    };
    for (const Vector& z0 : starts) {
        SolveResult r = solve(problem, z0, opts);
        if (!best || better(r, *best)) best = std::move(r);
    }
    return std::move(*best);
}

}  // namespace mabopt::nlp
