#pragma once

/**
 * @file
 * Base-case operating recipe (batch, daily fed-batch boluses, perfusion, daily
 * sampling) and open-loop simulation on a control grid.
 */

#include "mabopt/control_grid.hpp"
#include "mabopt/errors.hpp"
#include "mabopt/integrator.hpp"
#include "mabopt/model.hpp"
#include "mabopt/operating_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mabopt {

/// A feed of total flow @p total_flow mixed from water and glucose feed so the inflow has @p glucose_conc.
struct MixedFeed {
    double water_flow = 0.0;
    double glucose_flow = 0.0;
};

inline MixedFeed mix_feed(double total_flow, double glucose_conc, const ModelParameters& p) {
    if (!(total_flow >= 0.0)) throw ConfigError("feed flow must be >= 0");
    if (!(glucose_conc >= 0.0) || glucose_conc > p.cG_in) {
        throw ConfigError("feed glucose concentration must lie in [0, cG_in]");
    }
    const double glucose = total_flow * glucose_conc / p.cG_in;
    return {total_flow - glucose, glucose};
}

struct BolusRecipe {
    double start_offset = 0.0;   ///< minutes after the start of each day
    double duration = 30.0;      ///< [min]
    double total_flow = 0.018;   ///< F_W + F_G [L/min]
    double feed_glucose = 32.0;  ///< glucose concentration of the mixed bolus [g/L]
};

struct PerfusionRecipe {
    double perfusion_flow = 0.0015;  ///< F_per [L/min]
    double total_inflow = 0.0015;    ///< F_W + F_G [L/min]
    double feed_glucose = 8.65;      ///< [g/L]
};

struct SamplingEvent {
    double start = 0.0;     ///< [min]
    double duration = 0.0;  ///< [min]
    double flow = 0.0;      ///< F_out [L/min]

    friend bool operator==(const SamplingEvent&, const SamplingEvent&) = default;
};

/// One draw per day at a fixed time of day, for days in [first_day, end_day).
inline std::vector<SamplingEvent> daily_sampling(int first_day, int end_day, double offset, double duration,
                                                 double volume) {
    std::vector<SamplingEvent> events;
    if (!(duration > 0.0)) throw ConfigError("sampling duration must be > 0");
    for (int d = first_day; d < end_day; ++d) {
        events.push_back({d * kMinutesPerDay + offset, duration, volume / duration});
    }
    return events;
}

/// Daily draw used when no explicit sampling events are given.
struct SamplingRecipe {
    double offset = 720.0;   ///< minutes after the start of each day
    double duration = 30.0;  ///< [min]
    double volume = 0.05;    ///< [L] per draw
};

struct PhaseSchedule {
    double batch_end_days = 2.0;
    double fedbatch_end_days = 6.0;
    double final_days = 14.0;
    BolusRecipe bolus;
    PerfusionRecipe perfusion;
    SamplingRecipe daily_draw;
    /// Explicit draws; when unset, one daily_draw on every whole day after the batch phase.
    std::optional<std::vector<SamplingEvent>> sampling;
    double temperature = 310.15;  ///< [K]

    std::vector<SamplingEvent> sampling_events() const {
        if (sampling) return *sampling;
        if (daily_draw.volume == 0.0) return {};
        return daily_sampling(static_cast<int>(std::ceil(batch_end_days)), static_cast<int>(std::floor(final_days)),
                              daily_draw.offset, daily_draw.duration, daily_draw.volume);
    }

    void validate(const ModelParameters& p, const OperatingBounds& bounds = {}) const;
};

inline void PhaseSchedule::validate(const ModelParameters& p, const OperatingBounds& bounds) const {
    if (!(0.0 <= batch_end_days && batch_end_days <= fedbatch_end_days && fedbatch_end_days <= final_days)) {
        throw ConfigError("phase boundaries must satisfy 0 <= batch_end <= fedbatch_end <= final");
    }
    if (!(bolus.start_offset >= 0.0) || !(bolus.start_offset + bolus.duration <= kMinutesPerDay) ||
        !(bolus.duration > 0.0)) {
        throw ConfigError("bolus must lie within one day and have positive duration");
    }
    const MixedFeed b = mix_feed(bolus.total_flow, bolus.feed_glucose, p);
    const MixedFeed f = mix_feed(perfusion.total_inflow, perfusion.feed_glucose, p);
    for (double flow : {b.water_flow, b.glucose_flow, f.water_flow, f.glucose_flow, perfusion.perfusion_flow}) {
        if (!bounds.flow_in_range(flow)) throw ConfigError("recipe flow outside [F_min, F_max]");
    }
    if (!(daily_draw.volume >= 0.0) || !(daily_draw.duration > 0.0) || !(daily_draw.offset >= 0.0) ||
        daily_draw.offset + daily_draw.duration > kMinutesPerDay) {
        throw ConfigError("daily sampling draw must lie within one day with volume >= 0");
    }
    for (const SamplingEvent& e : sampling_events()) {
        if (!(e.start >= 0.0) || !(e.duration > 0.0) || !bounds.flow_in_range(e.flow)) {
            throw ConfigError("invalid sampling event");
        }
    }
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
}

namespace detail {

inline bool on_grid(double t, double step) {
    const double n = t / step;
    return std::abs(n - std::round(n)) <= 1e-9 * std::max(1.0, std::abs(n));
}

}  // namespace detail

/**
 * Zero-order-hold input sequence of the base-case recipe on @p grid.
 *
 * Sampling draws in the perfusion phase are balanced by extra feed at the
 * perfusion feed concentration, keeping the working volume constant there.
 * Every recipe event must fall on grid boundaries.
 */
inline std::vector<Input> build_base_case(const PhaseSchedule& schedule, const ControlGrid& grid,
                                          const ModelParameters& p, const OperatingBounds& bounds = {}) {
    schedule.validate(p, bounds);
    if (std::abs(grid.horizon() - schedule.final_days * kMinutesPerDay) > 1e-9 * std::max(1.0, grid.horizon())) {
        throw ConfigError("grid horizon does not match the schedule's final time");
    }
    const double ts = grid.step;
    const double batch_end = schedule.batch_end_days * kMinutesPerDay;
    const double fedbatch_end = schedule.fedbatch_end_days * kMinutesPerDay;
    auto require = [&](double t, const char* what) {
        if (!detail::on_grid(t, ts)) {
            throw ConfigError(std::string(what) + " is not aligned to the control grid");
        }
    };
    require(batch_end, "batch phase end");
    require(fedbatch_end, "fed-batch phase end");
    require(schedule.bolus.start_offset, "bolus start");
    require(schedule.bolus.duration, "bolus duration");
    const std::vector<SamplingEvent> sampling = schedule.sampling_events();
    for (const SamplingEvent& e : sampling) {
        require(e.start, "sampling start");
        require(e.duration, "sampling duration");
    }

    const MixedFeed bolus = mix_feed(schedule.bolus.total_flow, schedule.bolus.feed_glucose, p);
    const MixedFeed perfusion = mix_feed(schedule.perfusion.total_inflow, schedule.perfusion.feed_glucose, p);

    std::vector<Input> inputs(static_cast<std::size_t>(grid.intervals));
    for (int k = 0; k < grid.intervals; ++k) {
        // Interval midpoint decides membership; all events are grid-aligned.
        const double mid = (k + 0.5) * ts;
        Input& u = inputs[static_cast<std::size_t>(k)];
        u.temperature = schedule.temperature;
        const bool in_perfusion = mid >= fedbatch_end;
        if (mid >= batch_end && mid < fedbatch_end) {
            const double tod = std::fmod(mid, kMinutesPerDay);
            if (tod >= schedule.bolus.start_offset && tod < schedule.bolus.start_offset + schedule.bolus.duration) {
                u.water_flow = bolus.water_flow;
                u.glucose_flow = bolus.glucose_flow;
            }
        } else if (in_perfusion) {
            u.water_flow = perfusion.water_flow;
            u.glucose_flow = perfusion.glucose_flow;
            u.perfusion_flow = schedule.perfusion.perfusion_flow;
        }
        double drawn = 0.0;
        for (const SamplingEvent& e : sampling) {
            if (mid >= e.start && mid < e.start + e.duration) drawn += e.flow;
        }
        if (drawn > 0.0) {
            u.sampling_flow = drawn;
            if (in_perfusion) {
                const MixedFeed make_up =
                    mix_feed(schedule.perfusion.total_inflow + drawn, schedule.perfusion.feed_glucose, p);
                u.water_flow = make_up.water_flow;
                u.glucose_flow = make_up.glucose_flow;
            }
        }
        for (double flow : {u.water_flow, u.glucose_flow, u.perfusion_flow, u.sampling_flow}) {
            if (!bounds.flow_in_range(flow)) {
                throw ConfigError("base-case flow outside [F_min, F_max] in interval " + std::to_string(k));
            }
        }
    }
    return inputs;
}

struct TrajectoryMetrics {
    double final_mab = 0.0;  ///< m_P(t_f) [g]
    double max_volume = 0.0;
    double min_volume = 0.0;
    double min_glucose = 0.0;
    double min_lactate = 0.0;
};

struct Trajectory {
    std::vector<double> times;  ///< grid points [min], N + 1 entries
    std::vector<State> states;  ///< N + 1 entries
    std::vector<Input> inputs;  ///< N entries, inputs[k] held on [times[k], times[k+1])
    TrajectoryMetrics metrics;
    bool negative_glucose = false;
    bool negative_lactate = false;

    std::size_t intervals() const { return inputs.size(); }
    const State& final_state() const { return states.back(); }

    void validate() const {
        if (states.empty() || times.size() != states.size() || inputs.size() + 1 != states.size()) {
            throw Error("trajectory lengths are inconsistent");
        }
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) throw Error("trajectory grid is not strictly increasing");
        }
        for (const State& s : states) {
            if (!(s.volume > 0.0)) throw Error("trajectory contains a non-positive volume");
        }
    }
};

inline TrajectoryMetrics compute_metrics(const std::vector<State>& states) {
    TrajectoryMetrics m;
    if (states.empty()) return m;
    m.final_mab = states.back().mass(kProduct);
    m.max_volume = -std::numeric_limits<double>::infinity();
    m.min_volume = m.min_glucose = m.min_lactate = std::numeric_limits<double>::infinity();
    for (const State& s : states) {
        m.max_volume = std::max(m.max_volume, s.volume);
        m.min_volume = std::min(m.min_volume, s.volume);
        m.min_glucose = std::min(m.min_glucose, s.mass(kGlucose));
        m.min_lactate = std::min(m.min_lactate, s.mass(kLactate));
    }
    return m;
}

inline void refresh_metrics(Trajectory& traj) {
    traj.metrics = compute_metrics(traj.states);
    traj.negative_glucose = traj.metrics.min_glucose < 0.0;
    traj.negative_lactate = traj.metrics.min_lactate < 0.0;
}

/// Integration failure inside a simulation, tagged with the control interval.
class SimulationError : public IntegrationError {
public:
    SimulationError(const IntegrationError& cause, int interval)
        : IntegrationError(Preformatted{}, std::string(cause.what()) + " in interval " + std::to_string(interval),
                           cause.time()),
          interval_(interval) {}

    int interval() const noexcept { return interval_; }

private:
    int interval_;
};

/// Interval-by-interval open-loop simulation.
inline Trajectory simulate(const State& x0, std::span<const Input> inputs, const ControlGrid& grid,
                           const ModelParameters& p, const IntegratorOptions& opts = {}) {
    if (static_cast<int>(inputs.size()) != grid.intervals) {
        throw ConfigError("input sequence length does not match the grid");
    }
    if (!(x0.volume > 0.0)) throw ModelError("initial volume must be positive");
    Trajectory traj;
    traj.times.reserve(inputs.size() + 1);
    traj.states.reserve(inputs.size() + 1);
    traj.inputs.assign(inputs.begin(), inputs.end());
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    State x = x0;
    for (int k = 0; k < grid.intervals; ++k) {
        try {
            x = integrate(x, inputs[static_cast<std::size_t>(k)], grid.time(k), grid.time(k + 1), p, opts);
        } catch (const IntegrationError& e) {
            throw SimulationError(e, k);
        }
        traj.times.push_back(grid.time(k + 1));
        traj.states.push_back(x);
    }
    refresh_metrics(traj);
    return traj;
}

/// Percent change of @p candidate relative to @p baseline.
inline double improvement_percent(double baseline, double candidate) {
    if (baseline == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return 100.0 * (candidate - baseline) / baseline;
}

struct Summary {
    double final_mab = 0.0;
    std::optional<double> improvement;  ///< [%] versus the supplied baseline
    double max_volume = 0.0;
    double min_volume = 0.0;
    double min_glucose = 0.0;
    double min_lactate = 0.0;
};

inline Summary summarize(const Trajectory& traj, std::optional<double> baseline_mab = std::nullopt) {
    if (traj.states.empty()) throw Error("cannot summarize an empty trajectory");
    const TrajectoryMetrics m = compute_metrics(traj.states);
    Summary s{m.final_mab, std::nullopt, m.max_volume, m.min_volume, m.min_glucose, m.min_lactate};
    if (baseline_mab) s.improvement = improvement_percent(*baseline_mab, m.final_mab);
    return s;
}

}  // namespace mabopt
