#pragma once

/**
 * @file
 * Optimal control problem for the reactor (maximize final mAb mass) and its
 * direct multiple-shooting transcription to an NlpProblem.
 *
 * Decision layout (physical units). Controls are held over blocks of
 * `move_blocking` intervals. Block b stores
 *
 *   u_b = (F_W, F_G, F_per, T),  then x_k for k = bM .. bM+M-1 (x_0 omitted),
 *
 * and the last block additionally stores x_N. Interval k only touches u_b and
 * x_k of its own block plus x_{k+1}, so the Lagrangian Hessian is block
 * diagonal on these ranges. F_out is never a decision variable.
 */

#include "mabopt/control_grid.hpp"
#include "mabopt/errors.hpp"
#include "mabopt/integrator.hpp"
#include "mabopt/interior_point.hpp"
#include "mabopt/model.hpp"
#include "mabopt/nlp.hpp"
#include "mabopt/operating_bounds.hpp"
#include "mabopt/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mabopt {

inline constexpr int kFreeInputs = 4;

/// Everything build_ocp may take from a run configuration.
struct OcpConfig {
    ModelParameters params;
    OperatingBounds bounds;
    PhaseSchedule schedule;  ///< source of the base case and of the sampling sequence
    ControlGrid grid;
    State x0 = default_initial_state();
    IntegratorOptions integrator;
    double terminal_glucose_max = 1.0;  ///< [g], used by setups 2 and 4
};

struct OcpSpec {
    int setup = 1;
    ControlGrid grid;
    State x0;
    OperatingBounds bounds;
    ModelParameters params;
    PhaseSchedule schedule;
    IntegratorOptions integrator;
    std::vector<double> fixed_sampling;  ///< F_out per interval [L/min]
    double terminal_glucose_bound = std::numeric_limits<double>::infinity();  ///< upper bound on m_G(t_f) [g]

    bool has_terminal_glucose_bound() const { return std::isfinite(terminal_glucose_bound); }
    Input input(int k, const std::array<double, kFreeInputs>& u) const {
        return {u[0], u[1], u[2], fixed_sampling[static_cast<std::size_t>(k)], u[3]};
    }
    void validate() const;
};

inline void OcpSpec::validate() const {
    if (setup < 1 || setup > 4) throw ConfigError("unknown setup id " + std::to_string(setup));
    grid.validate();
    bounds.validate();
    params.validate();
    integrator.validate();
    if (static_cast<int>(fixed_sampling.size()) != grid.intervals) {
        throw ConfigError("sampling sequence length does not match the grid");
    }
    if (grid.intervals == 0) throw ConfigError("the OCP needs at least one control interval");
    if (!(x0.volume > 0.0)) throw ConfigError("initial volume must be > 0");
}

/// Table-3 setup: 1 and 2 without sampling, 3 and 4 with the base-case sampling; 2 and 4 bound m_G(t_f).
inline OcpSpec build_ocp(int setup, const OcpConfig& cfg = {}) {
    if (setup < 1 || setup > 4) throw ConfigError("unknown setup id " + std::to_string(setup));
    OcpSpec spec;
    spec.setup = setup;
    spec.grid = cfg.grid;
    spec.x0 = cfg.x0;
    spec.bounds = cfg.bounds;
    spec.params = cfg.params;
    spec.schedule = cfg.schedule;
    spec.integrator = cfg.integrator;
    spec.grid.validate();
    if (setup == 3 || setup == 4) {
        const std::vector<Input> base = build_base_case(cfg.schedule, cfg.grid, cfg.params, cfg.bounds);
        for (const Input& u : base) spec.fixed_sampling.push_back(u.sampling_flow);
    } else {
        spec.fixed_sampling.assign(static_cast<std::size_t>(spec.grid.intervals), 0.0);
    }
    if (setup == 2 || setup == 4) spec.terminal_glucose_bound = cfg.terminal_glucose_max;
    spec.validate();
    return spec;
}

/// Index bookkeeping for the flat decision vector.
class DecisionLayout {
public:
    explicit DecisionLayout(const ControlGrid& grid) : grid_(grid) {
        grid_.validate();
        const int nb = grid_.blocks();
        const int m = grid_.move_blocking;
        input_offset_.resize(static_cast<std::size_t>(nb));
        state_offset_.assign(static_cast<std::size_t>(grid_.intervals) + 1, -1);
        nlp::Index pos = 0;
        for (int b = 0; b < nb; ++b) {
            const nlp::Index begin = pos;
            input_offset_[static_cast<std::size_t>(b)] = pos;
            pos += kFreeInputs;
            for (int k = b * m; k < (b + 1) * m; ++k) {
                if (k == 0) continue;
                state_offset_[static_cast<std::size_t>(k)] = pos;
                pos += kStateSize;
            }
            if (b == nb - 1) {
                state_offset_[static_cast<std::size_t>(grid_.intervals)] = pos;
                pos += kStateSize;
            }
            ranges_.push_back({begin, pos});
        }
        size_ = pos;
    }

    nlp::Index size() const { return size_; }
    int blocks() const { return grid_.blocks(); }
    int intervals() const { return grid_.intervals; }
    const ControlGrid& grid() const { return grid_; }

    nlp::Index input_offset(int block) const { return input_offset_.at(static_cast<std::size_t>(block)); }
    /// Offset of x_k, 1 <= k <= N.
    nlp::Index state_offset(int k) const {
        if (k < 1 || k > grid_.intervals) throw Error("shooting node index out of range");
        return state_offset_[static_cast<std::size_t>(k)];
    }
    const std::vector<nlp::IndexRange>& block_ranges() const { return ranges_; }

private:
    ControlGrid grid_;
    nlp::Index size_ = 0;
    std::vector<nlp::Index> input_offset_;
    std::vector<nlp::Index> state_offset_;
    std::vector<nlp::IndexRange> ranges_;
};

/// Structured, physical-unit view of the decision vector.
struct DecisionVector {
    std::vector<std::array<double, kFreeInputs>> controls;  ///< per block: F_W, F_G, F_per, T
    std::vector<State> states;                              ///< x_1 .. x_N

    friend bool operator==(const DecisionVector&, const DecisionVector&) = default;
};

inline nlp::Vector pack(const DecisionVector& dv, const DecisionLayout& layout) {
    if (static_cast<int>(dv.controls.size()) != layout.blocks() ||
        static_cast<int>(dv.states.size()) != layout.intervals()) {
        throw Error("decision vector does not match the layout");
    }
    nlp::Vector z(layout.size());
    for (int b = 0; b < layout.blocks(); ++b) {
        for (int i = 0; i < kFreeInputs; ++i) z[layout.input_offset(b) + i] = dv.controls[static_cast<std::size_t>(b)][i];
    }
    for (int k = 1; k <= layout.intervals(); ++k) {
        z.segment<kStateSize>(layout.state_offset(k)) = dv.states[static_cast<std::size_t>(k - 1)].to_vector();
    }
    return z;
}

inline DecisionVector unpack(const nlp::Vector& z, const DecisionLayout& layout) {
    if (z.size() != layout.size()) throw Error("flat decision vector has the wrong size");
    DecisionVector dv;
    dv.controls.resize(static_cast<std::size_t>(layout.blocks()));
    for (int b = 0; b < layout.blocks(); ++b) {
        for (int i = 0; i < kFreeInputs; ++i) dv.controls[static_cast<std::size_t>(b)][i] = z[layout.input_offset(b) + i];
    }
    dv.states.reserve(static_cast<std::size_t>(layout.intervals()));
    for (int k = 1; k <= layout.intervals(); ++k) {
        dv.states.push_back(State::from_vector(z.segment<kStateSize>(layout.state_offset(k))));
    }
    return dv;
}

/// Decision vector of a trajectory whose free inputs are constant on every control block.
inline DecisionVector decision_from_trajectory(const Trajectory& traj, const OcpSpec& spec) {
    const ControlGrid& g = spec.grid;
    if (static_cast<int>(traj.inputs.size()) != g.intervals || traj.states.size() != traj.inputs.size() + 1) {
        throw Error("trajectory does not match the OCP grid");
    }
    DecisionVector dv;
    for (int b = 0; b < g.blocks(); ++b) {
        const Input& first = traj.inputs[static_cast<std::size_t>(b * g.move_blocking)];
        for (int k = b * g.move_blocking; k < (b + 1) * g.move_blocking; ++k) {
            const Input& u = traj.inputs[static_cast<std::size_t>(k)];
            if (u.water_flow != first.water_flow || u.glucose_flow != first.glucose_flow ||
                u.perfusion_flow != first.perfusion_flow || u.temperature != first.temperature) {
                throw Error("trajectory inputs are not constant on control block " + std::to_string(b));
            }
        }
        dv.controls.push_back({first.water_flow, first.glucose_flow, first.perfusion_flow, first.temperature});
    }
    dv.states.assign(traj.states.begin() + 1, traj.states.end());
    return dv;
}

/// Node trajectory of a decision vector (states as stored, not re-simulated).
inline Trajectory trajectory_from_decision(const DecisionVector& dv, const OcpSpec& spec) {
    const ControlGrid& g = spec.grid;
    if (static_cast<int>(dv.controls.size()) != g.blocks() || static_cast<int>(dv.states.size()) != g.intervals) {
        throw Error("decision vector does not match the OCP grid");
    }
    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(spec.x0);
    for (int k = 0; k < g.intervals; ++k) {
        traj.inputs.push_back(spec.input(k, dv.controls[static_cast<std::size_t>(g.block_of(k))]));
        traj.times.push_back(g.time(k + 1));
        traj.states.push_back(dv.states[static_cast<std::size_t>(k)]);
    }
    refresh_metrics(traj);
    return traj;
}

/// Affine map z_scaled = (z - offset) / width applied to every decision variable.
struct DecisionScaling {
    nlp::Vector offset;
    nlp::Vector width;

    nlp::Vector to_scaled(const nlp::Vector& z) const { return (z - offset).cwiseQuotient(width); }
    nlp::Vector to_physical(const nlp::Vector& s) const { return offset + s.cwiseProduct(width); }
};

namespace detail {

// Characteristic state ranges: V by [4, 8] L, cells by [0, 50], other masses by [0, 100] g.
inline const StateVector kStateOffset = (StateVector() << 4.0, 0.0, 0.0, 0.0, 0.0, 0.0).finished();
inline const StateVector kStateWidth = (StateVector() << 4.0, 50.0, 50.0, 100.0, 100.0, 100.0).finished();

}  // namespace detail

inline DecisionScaling make_scaling(const DecisionLayout& layout, const OperatingBounds& bounds) {
    DecisionScaling s{nlp::Vector::Zero(layout.size()), nlp::Vector::Ones(layout.size())};
    for (int b = 0; b < layout.blocks(); ++b) {
        const nlp::Index o = layout.input_offset(b);
        for (int i = 0; i < 3; ++i) {
            s.offset[o + i] = bounds.F_min;
            s.width[o + i] = bounds.F_max - bounds.F_min;
        }
        s.offset[o + 3] = bounds.T_min;
        s.width[o + 3] = bounds.T_max - bounds.T_min;
    }
    for (int k = 1; k <= layout.intervals(); ++k) {
        s.offset.segment<kStateSize>(layout.state_offset(k)) = detail::kStateOffset;
        s.width.segment<kStateSize>(layout.state_offset(k)) = detail::kStateWidth;
    }
    return s;
}

/**
 * Scaled multiple-shooting NLP:
 *
 *   minimize  -m_P(t_f) / 100
 *   subject to (x_{k+1} - Phi(x_k, u_k)) / width = 0,  k = 0 .. N-1
 *
 * with path and input bounds as variable bounds and the terminal glucose
 * limit as an upper bound on m_G of x_N.
 */
class MultipleShootingProblem : public nlp::NlpProblem {
public:
    /// @p objective_scale multiplies -m_P(t_f) [g]; the default gives a unit objective gradient in scaled variables.
    explicit MultipleShootingProblem(OcpSpec spec, double objective_scale = 1.0)
        : spec_(std::move(spec)),
          layout_(spec_.grid),
          scaling_(make_scaling(layout_, spec_.bounds)),
          objective_scale_(objective_scale) {
        spec_.validate();
        build_bounds();
    }

    nlp::Index num_variables() const override { return layout_.size(); }
    nlp::Index num_equalities() const override { return kStateSize * static_cast<nlp::Index>(spec_.grid.intervals); }
    nlp::Index num_inequalities() const override { return 0; }
    nlp::Vector lower_bounds() const override { return lower_; }
    nlp::Vector upper_bounds() const override { return upper_; }
    std::vector<nlp::IndexRange> hessian_blocks() const override { return layout_.block_ranges(); }

    const OcpSpec& spec() const { return spec_; }
    const DecisionLayout& layout() const { return layout_; }
    const DecisionScaling& scaling() const { return scaling_; }

    nlp::Vector to_scaled(const nlp::Vector& physical) const { return scaling_.to_scaled(physical); }
    nlp::Vector to_physical(const nlp::Vector& scaled) const { return scaling_.to_physical(scaled); }

    /// Physical-unit defects x_{k+1} - Phi(x_k, u_k), stacked by interval.
    nlp::Vector physical_defects(const nlp::Vector& z_physical) const {
        const DecisionVector dv = unpack(z_physical, layout_);
        nlp::Vector g(num_equalities());
        for (int k = 0; k < spec_.grid.intervals; ++k) {
            const State& xk = k == 0 ? spec_.x0 : dv.states[static_cast<std::size_t>(k - 1)];
            const Input u = spec_.input(k, dv.controls[static_cast<std::size_t>(spec_.grid.block_of(k))]);
            const State end = integrate(xk, u, spec_.grid.time(k), spec_.grid.time(k + 1), spec_.params, spec_.integrator);
            g.segment<kStateSize>(kStateSize * k) =
                dv.states[static_cast<std::size_t>(k)].to_vector() - end.to_vector();
        }
        return g;
    }

    /// Columns that defect block k may depend on: u of its block, x_k (k >= 1) and x_{k+1}.
    std::vector<nlp::Index> defect_stencil(int k) const {
        std::vector<nlp::Index> cols;
        const nlp::Index uo = layout_.input_offset(spec_.grid.block_of(k));
        for (int i = 0; i < kFreeInputs; ++i) cols.push_back(uo + i);
        if (k >= 1) {
            for (int i = 0; i < kStateSize; ++i) cols.push_back(layout_.state_offset(k) + i);
        }
        for (int i = 0; i < kStateSize; ++i) cols.push_back(layout_.state_offset(k + 1) + i);
        std::sort(cols.begin(), cols.end());
        return cols;
    }

    nlp::Evaluation evaluate(const nlp::Vector& z, bool with_derivatives) const override {
        if (z.size() != layout_.size()) throw nlp::EvaluationError("decision vector has the wrong size");
        const nlp::Vector zp = to_physical(z);
        const DecisionVector dv = unpack(zp, layout_);
        const ControlGrid& g = spec_.grid;
        const StateVector& sw = detail::kStateWidth;

        nlp::Evaluation ev;
        const nlp::Index ip = layout_.state_offset(g.intervals) + state_index::kProduct;
        ev.objective = -objective_scale_ * z[ip];
        ev.equalities.resize(num_equalities());
        ev.inequalities.resize(0);

        std::vector<Eigen::Triplet<double>> trip;
        if (with_derivatives) trip.reserve(static_cast<std::size_t>(g.intervals) * kStateSize * (1 + kStateSize + kFreeInputs));

        for (int k = 0; k < g.intervals; ++k) {
            const int b = g.block_of(k);
            const State& xk = k == 0 ? spec_.x0 : dv.states[static_cast<std::size_t>(k - 1)];
            const Input u = spec_.input(k, dv.controls[static_cast<std::size_t>(b)]);
            const StateVector next = dv.states[static_cast<std::size_t>(k)].to_vector();
            const nlp::Index row = kStateSize * static_cast<nlp::Index>(k);
            try {
                if (!with_derivatives) {
                    const State end = integrate(xk, u, g.time(k), g.time(k + 1), spec_.params, spec_.integrator);
                    ev.equalities.segment<kStateSize>(row) = (next - end.to_vector()).cwiseQuotient(sw);
                    continue;
                }
                const SensitivityResult sr =
                    integrate_with_sensitivities(xk, u, g.time(k), g.time(k + 1), spec_.params, spec_.integrator);
                ev.equalities.segment<kStateSize>(row) = (next - sr.x_end.to_vector()).cwiseQuotient(sw);

                const nlp::Index no = layout_.state_offset(k + 1);
                for (int i = 0; i < kStateSize; ++i) trip.emplace_back(row + i, no + i, 1.0);
                if (k >= 1) {
                    const nlp::Index xo = layout_.state_offset(k);
                    for (int j = 0; j < kStateSize; ++j) {
                        for (int i = 0; i < kStateSize; ++i) {
                            trip.emplace_back(row + i, xo + j, -sr.A(i, j) * sw[j] / sw[i]);
                        }
                    }
                }
                const nlp::Index uo = layout_.input_offset(b);
                static constexpr std::array<int, kFreeInputs> kCols{
                    input_index::kWaterFlow, input_index::kGlucoseFlow, input_index::kPerfusionFlow,
                    input_index::kTemperature};
                for (int j = 0; j < kFreeInputs; ++j) {
                    const double uw = scaling_.width[uo + j];
                    for (int i = 0; i < kStateSize; ++i) {
                        trip.emplace_back(row + i, uo + j, -sr.B(i, kCols[static_cast<std::size_t>(j)]) * uw / sw[i]);
                    }
                }
            } catch (const IntegrationError& e) {
                throw nlp::EvaluationError("shooting interval " + std::to_string(k) + ": " + e.what());
            }
        }
        if (with_derivatives) {
            ev.has_derivatives = true;
            ev.gradient = nlp::Vector::Zero(layout_.size());
            ev.gradient[ip] = -objective_scale_;
            ev.equality_jacobian.resize(num_equalities(), layout_.size());
            ev.equality_jacobian.setFromTriplets(trip.begin(), trip.end());
            ev.inequality_jacobian.resize(0, layout_.size());
        }
        return ev;
    }

    bool has_hessian() const override { return true; }

    /**
     * Lagrangian Hessian in scaled coordinates. The objective is linear, so
     * only the defects contribute; for interval k the curvature of
     * (lambda_k / width)^T Phi(x_k, u) is obtained by central differences of
     * its exact gradient [A^T w; B^T w] from the variational equations.
     */
    std::vector<Eigen::MatrixXd> lagrangian_hessian(const nlp::Vector& z, const nlp::Vector& lambda,
                                                    const nlp::Vector& /*mu*/) const override {
        if (z.size() != layout_.size() || lambda.size() != num_equalities()) {
            throw nlp::EvaluationError("lagrangian_hessian: dimension mismatch");
        }
        const DecisionVector dv = unpack(to_physical(z), layout_);
        const ControlGrid& g = spec_.grid;
        const auto& ranges = layout_.block_ranges();
        std::vector<Eigen::MatrixXd> blocks;
        for (const nlp::IndexRange& r : ranges) blocks.push_back(Eigen::MatrixXd::Zero(r.size(), r.size()));

        using Local = Eigen::Matrix<double, kStateSize + kFreeInputs, 1>;
        for (int k = 0; k < g.intervals; ++k) {
            const int b = g.block_of(k);
            const StateVector w = lambda.segment<kStateSize>(kStateSize * static_cast<nlp::Index>(k))
                                      .cwiseQuotient(detail::kStateWidth);
            if (w.isZero(0.0)) continue;
            const nlp::Index uo = layout_.input_offset(b);
            const nlp::Index base = ranges[static_cast<std::size_t>(b)].begin;

            // Local variables v = (x_k, u_b) in physical units with their scaled positions.
            Local v, width;
            std::array<nlp::Index, kStateSize + kFreeInputs> pos{};
            const State xk = k == 0 ? spec_.x0 : dv.states[static_cast<std::size_t>(k - 1)];
            v.head<kStateSize>() = xk.to_vector();
            width.head<kStateSize>() = detail::kStateWidth;
            const auto& u = dv.controls[static_cast<std::size_t>(b)];
            for (int j = 0; j < kFreeInputs; ++j) {
                v[kStateSize + j] = u[static_cast<std::size_t>(j)];
                width[kStateSize + j] = scaling_.width[uo + j];
                pos[static_cast<std::size_t>(kStateSize + j)] = uo + j - base;
            }
            for (int i = 0; i < kStateSize; ++i) {
                pos[static_cast<std::size_t>(i)] = k == 0 ? -1 : layout_.state_offset(k) + i - base;
            }
            const int first = k == 0 ? kStateSize : 0;

            auto weighted_gradient = [&](const Local& at) {
                State x = State::from_vector(at.head<kStateSize>());
                const Input in = spec_.input(k, {at[6], at[7], at[8], at[9]});
                SensitivityResult sr;
                try {
                    sr = integrate_with_sensitivities(x, in, g.time(k), g.time(k + 1), spec_.params,
                                                      spec_.integrator);
                } catch (const IntegrationError& e) {
                    throw nlp::EvaluationError("shooting interval " + std::to_string(k) + ": " + e.what());
                }
                Local grad;
                grad.head<kStateSize>() = sr.A.transpose() * w;
                static constexpr std::array<int, kFreeInputs> kCols{
                    input_index::kWaterFlow, input_index::kGlucoseFlow, input_index::kPerfusionFlow,
                    input_index::kTemperature};
                for (int j = 0; j < kFreeInputs; ++j) {
                    grad[kStateSize + j] = sr.B.col(kCols[static_cast<std::size_t>(j)]).dot(w);
                }
                return grad;
            };

            Eigen::Matrix<double, kStateSize + kFreeInputs, kStateSize + kFreeInputs> h;
            h.setZero();
            for (int j = first; j < kStateSize + kFreeInputs; ++j) {
                const double step = kHessianStep * width[j];
                Local vp = v, vm = v;
                vp[j] += step;
                vm[j] -= step;
                h.col(j) = (weighted_gradient(vp) - weighted_gradient(vm)) / (2.0 * step);
            }
            // Physical to scaled, symmetrized; -lambda^T g = +w^T Phi + linear terms.
            Eigen::MatrixXd& blk = blocks[static_cast<std::size_t>(b)];
            for (int j = first; j < kStateSize + kFreeInputs; ++j) {
                for (int i = first; i < kStateSize + kFreeInputs; ++i) {
                    const double hij = 0.5 * (h(i, j) + h(j, i)) * width[i] * width[j];
                    blk(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]) += hij;
                }
            }
        }
        return blocks;
    }

private:
    static constexpr double kHessianStep = 1e-4;  ///< central-difference step in scaled units

    void build_bounds() {
        const double inf = nlp::kInfinity;
        nlp::Vector lo = nlp::Vector::Constant(layout_.size(), -inf);
        nlp::Vector up = nlp::Vector::Constant(layout_.size(), inf);
        const OperatingBounds& bd = spec_.bounds;
        for (int b = 0; b < layout_.blocks(); ++b) {
            const nlp::Index o = layout_.input_offset(b);
            for (int i = 0; i < 3; ++i) {
                lo[o + i] = bd.F_min;
                up[o + i] = bd.F_max;
            }
            lo[o + 3] = bd.T_min;
            up[o + 3] = bd.T_max;
        }
        for (int k = 1; k <= layout_.intervals(); ++k) {
            const nlp::Index o = layout_.state_offset(k);
            lo[o + state_index::kVolume] = bd.V_min;
            up[o + state_index::kVolume] = bd.V_max;
            lo[o + state_index::kGlucose] = bd.m_G_min;
            lo[o + state_index::kLactate] = bd.m_L_min;
        }
        if (spec_.has_terminal_glucose_bound()) {
            up[layout_.state_offset(layout_.intervals()) + state_index::kGlucose] = spec_.terminal_glucose_bound;
        }
        // Bounds are affine in the scaling, so map them directly.
        lower_ = scaling_.to_scaled(lo);
        upper_ = scaling_.to_scaled(up);
    }

    OcpSpec spec_;
    DecisionLayout layout_;
    DecisionScaling scaling_;
    double objective_scale_ = 1.0;
    nlp::Vector lower_, upper_;
};

inline MultipleShootingProblem transcribe(const OcpSpec& spec) { return MultipleShootingProblem(spec); }

enum class GuessStrategy { kBaseCase, kConstantFeed };

/// Held inputs of the constant-feed guess; the default is volume-neutral at mid-range temperature.
struct ConstantFeed {
    double water_flow = 0.005;
    double glucose_flow = 0.005;
    double perfusion_flow = 0.01;
    double temperature = 309.15;
};

/**
 * Defect-feasible initial guess in physical units. The base-case strategy
 * averages the recipe's inputs over each control block (preserving fed
 * volumes) and packs the resulting simulation.
 */
inline DecisionVector initial_guess(const OcpSpec& spec, GuessStrategy strategy, const ConstantFeed& feed = {}) {
    spec.validate();
    const ControlGrid& g = spec.grid;
    DecisionVector dv;
    if (strategy == GuessStrategy::kBaseCase) {
        const std::vector<Input> base = build_base_case(spec.schedule, g, spec.params, spec.bounds);
        for (int b = 0; b < g.blocks(); ++b) {
            std::array<double, kFreeInputs> avg{};
            for (int k = b * g.move_blocking; k < (b + 1) * g.move_blocking; ++k) {
                const Input& u = base[static_cast<std::size_t>(k)];
                avg[0] += u.water_flow;
                avg[1] += u.glucose_flow;
                avg[2] += u.perfusion_flow;
                avg[3] += u.temperature;
            }
            for (double& v : avg) v /= g.move_blocking;
            dv.controls.push_back(avg);
        }
    } else {
        dv.controls.assign(static_cast<std::size_t>(g.blocks()),
                           {feed.water_flow, feed.glucose_flow, feed.perfusion_flow, feed.temperature});
    }
    std::vector<Input> inputs;
    for (int k = 0; k < g.intervals; ++k) inputs.push_back(spec.input(k, dv.controls[static_cast<std::size_t>(g.block_of(k))]));
    const Trajectory traj = simulate(spec.x0, inputs, g, spec.params, spec.integrator);
    dv.states.assign(traj.states.begin() + 1, traj.states.end());
    return dv;
}

struct ExtractedSolution {
    Trajectory nodes;        ///< states as returned by the solver
    Trajectory resimulated;  ///< open-loop re-simulation of the controls at tight tolerance
    double max_relative_mismatch = 0.0;
    bool consistent = true;  ///< mismatch within 1e-4
};

inline ExtractedSolution extract_solution(const DecisionVector& dv, const OcpSpec& spec) {
    ExtractedSolution out;
    out.nodes = trajectory_from_decision(dv, spec);
    IntegratorOptions tight = spec.integrator;
    tight.rel_tol = std::min(tight.rel_tol, 1e-10);
    tight.abs_tol = std::min(tight.abs_tol, 1e-12);
    out.resimulated = simulate(spec.x0, out.nodes.inputs, spec.grid, spec.params, tight);
    for (std::size_t k = 0; k < out.nodes.states.size(); ++k) {
        const StateVector a = out.nodes.states[k].to_vector();
        const StateVector b = out.resimulated.states[k].to_vector();
        for (int i = 0; i < kStateSize; ++i) {
            const double rel = std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i]));
            out.max_relative_mismatch = std::max(out.max_relative_mismatch, rel);
        }
    }
    out.consistent = out.max_relative_mismatch <= 1e-4;
    return out;
}

struct OcpResult {
    DecisionVector decision;
    nlp::SolveResult solve;  ///< in scaled coordinates
    ExtractedSolution solution;
};

/// Transcribes, solves from the given physical-unit guess and extracts the trajectory.
inline OcpResult solve_ocp(const OcpSpec& spec, const DecisionVector& guess, const nlp::SolverOptions& opts = {}) {
    const MultipleShootingProblem problem(spec);
    const nlp::Vector z0 = problem.to_scaled(pack(guess, problem.layout()));
    OcpResult r;
    r.solve = nlp::solve(problem, z0, opts);
    r.decision = unpack(problem.to_physical(r.solve.z), problem.layout());
    r.solution = extract_solution(r.decision, spec);
    return r;
}

}  // namespace mabopt
