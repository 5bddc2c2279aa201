#pragma once

/**
 * @file
 * Run configuration: every tunable of a simulate/optimize run, its TOML-subset
 * file representation and the resolved-config manifest written next to
 * results. Defaults reproduce the published model, operation parameters and
 * control grid. Unknown sections and keys are rejected.
 *
 * Sections and keys:
 *
 *   [model]       Table-style kinetic parameters (mu_X_max, ..., alpha_6L)
 *                 plus gamma and alpha_smooth
 *   [operation]   V0, m_Xv0, m_Xd0, m_G0, m_L0, m_P0, cG_in,
 *                 F_min, F_max, T_min, T_max, V_min, V_max, m_G_min, m_L_min
 *   [schedule]    batch_end_days, fedbatch_end_days, final_days, temperature,
 *                 bolus_offset_min, bolus_duration_min, bolus_total_flow,
 *                 bolus_feed_glucose, perfusion_flow, perfusion_total_inflow,
 *                 perfusion_feed_glucose, sampling_offset_min,
 *                 sampling_duration_min, sampling_volume,
 *                 sampling_events = [[start_min, duration_min, flow], ...]
 *   [grid]        step_min, move_blocking, intervals
 *   [integrator]  rel_tol, abs_tol, max_steps, initial_step_min, fixed_step_min
 *   [solver]      kkt_tol, feasibility_tol, max_iterations, mu_init,
 *                 line_search ("filter" | "l1-merit"),
 *                 hessian ("auto" | "exact" | "quasi-newton"),
 *                 convexify ("none" | "mirror" | "clip")
 *   [ocp]         terminal_glucose_max, initial_guess ("base-case" | "constant-feed")
 *   [output]      dir
 */

#include "mabopt/interior_point.hpp"
#include "mabopt/io.hpp"
#include "mabopt/ocp.hpp"
#include "mabopt/toml_subset.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mabopt {

struct RunConfig {
    ModelParameters params;
    State x0 = default_initial_state();
    OperatingBounds bounds;
    PhaseSchedule schedule;

    double step_min = 30.0;  ///< T_s
    int move_blocking = 8;
    std::optional<int> intervals;  ///< N; when set the horizon is N * T_s and overrides final_days

    IntegratorOptions integrator;
    nlp::SolverOptions solver = default_solver_options();

    double terminal_glucose_max = 1.0;  ///< [g]
    GuessStrategy guess = GuessStrategy::kBaseCase;

    std::string output_dir = "out";

    /// Solver settings used for the dynamic optimization unless overridden.
    static nlp::SolverOptions default_solver_options() {
        nlp::SolverOptions o;
        o.kkt_tol = 1e-6;
        o.feasibility_tol = 1e-6;
        o.max_iterations = 500;
        o.mu_init = 0.1;
        o.convexify = nlp::Convexify::kMirror;
        return o;
    }

    double horizon_min() const { return intervals ? *intervals * step_min : schedule.final_days * kMinutesPerDay; }

    /// Schedule with phase boundaries clipped to the horizon.
    PhaseSchedule resolved_schedule() const {
        PhaseSchedule s = schedule;
        s.final_days = horizon_min() / kMinutesPerDay;
        s.fedbatch_end_days = std::min(s.fedbatch_end_days, s.final_days);
        s.batch_end_days = std::min(s.batch_end_days, s.fedbatch_end_days);
        return s;
    }

    ControlGrid grid() const { return ControlGrid::covering(horizon_min(), step_min, move_blocking); }

    OcpConfig ocp_config() const {
        return OcpConfig{params, bounds, resolved_schedule(), grid(), x0, integrator, terminal_glucose_max};
    }

    void validate() const {
        params.validate();
        bounds.validate();
        integrator.validate();
        solver.validate();
        if (intervals && *intervals < 0) throw ConfigError("grid intervals must be >= 0");
        if (!(0.0 <= schedule.batch_end_days && schedule.batch_end_days <= schedule.fedbatch_end_days)) {
            throw ConfigError("phase boundaries must satisfy 0 <= batch_end <= fedbatch_end");
        }
        const ControlGrid g = grid();
        g.validate();
        resolved_schedule().validate(params, bounds);
        if (!(x0.volume > 0.0)) throw ConfigError("initial volume must be > 0");
        for (int c = 0; c < kNumComponents; ++c) {
            if (!(x0.masses[c] >= 0.0) || !std::isfinite(x0.masses[c])) {
                throw ConfigError("initial masses must be finite and >= 0");
            }
        }
        if (!(terminal_glucose_max >= 0.0)) throw ConfigError("terminal_glucose_max must be >= 0");
        if (output_dir.empty()) throw ConfigError("output dir must not be empty");
    }
};

namespace detail {

using io::format_number;

inline std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out + "\"";
}

/// Typed access to one section that records which keys were consumed.
class SectionReader {
public:
    SectionReader(std::string name, const toml::Table& table) : name_(std::move(name)), table_(table) {}

    void number(const std::string& key, double& out) {
        if (const toml::Value* v = find(key)) out = as_number(key, *v);
    }

    void integer(const std::string& key, int& out) {
        if (const toml::Value* v = find(key)) out = as_int(key, *v);
    }

    void integer(const std::string& key, long& out) {
        if (const toml::Value* v = find(key)) out = as_integer(key, *v);
    }

    void optional_integer(const std::string& key, std::optional<int>& out) {
        if (const toml::Value* v = find(key)) out = as_int(key, *v);
    }

    void optional_number(const std::string& key, std::optional<double>& out) {
        if (const toml::Value* v = find(key)) out = as_number(key, *v);
    }

    void string(const std::string& key, std::string& out) {
        if (const toml::Value* v = find(key)) {
            if (!v->is_string()) throw error(*v, key, "expected a string");
            out = std::get<std::string>(v->data);
        }
    }

    template <class Enum>
    void choice(const std::string& key, Enum& out, std::initializer_list<std::pair<std::string_view, Enum>> options) {
        const toml::Value* v = find(key);
        if (!v) return;
        if (!v->is_string()) throw error(*v, key, "expected a string");
        const std::string& s = std::get<std::string>(v->data);
        std::string allowed;
        for (const auto& [name, value] : options) {
            if (name == s) {
                out = value;
                return;
            }
            allowed += (allowed.empty() ? "" : ", ") + std::string(name);
        }
        throw error(*v, key, "unknown value \"" + s + "\" (expected one of " + allowed + ")");
    }

    const toml::Value* find(const std::string& key) {
        const auto it = table_.find(key);
        if (it == table_.end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    void reject_unknown() const {
        for (const auto& [key, value] : table_) {
            if (!used_.count(key)) throw error(value, key, "unknown key");
        }
    }

    ConfigError error(const toml::Value& v, const std::string& key, const std::string& msg) const {
        return toml::parse_error(v.line, "[" + name_ + "] " + key + ": " + msg);
    }

    double as_number(const std::string& key, const toml::Value& v) const {
        if (!v.is_number()) throw error(v, key, "expected a number");
        return std::get<double>(v.data);
    }

    long as_integer(const std::string& key, const toml::Value& v) const {
        const double d = as_number(key, v);
        if (d != std::floor(d) || std::abs(d) > 1e15) throw error(v, key, "expected an integer");
        return static_cast<long>(d);
    }

    int as_int(const std::string& key, const toml::Value& v) const {
        const long n = as_integer(key, v);
        if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
            throw error(v, key, "integer out of range");
        }
        return static_cast<int>(n);
    }

private:
    std::string name_;
    const toml::Table& table_;
    std::set<std::string> used_;
};

inline std::vector<SamplingEvent> read_sampling_events(SectionReader& r, const toml::Value& v) {
    const std::string key = "sampling_events";
    if (!v.is_array()) throw r.error(v, key, "expected an array of [start_min, duration_min, flow]");
    std::vector<SamplingEvent> events;
    for (const toml::Value& item : std::get<toml::Array>(v.data)) {
        if (!item.is_array() || std::get<toml::Array>(item.data).size() != 3) {
            throw r.error(item, key, "each event must be [start_min, duration_min, flow]");
        }
        const toml::Array& a = std::get<toml::Array>(item.data);
        events.push_back({r.as_number(key, a[0]), r.as_number(key, a[1]), r.as_number(key, a[2])});
    }
    return events;
}

}  // namespace detail

/// Applies the settings of @p doc on top of @p cfg and validates the result.
inline RunConfig apply_config(const toml::Document& doc, RunConfig cfg = {}) {
    using detail::SectionReader;
    if (!doc.root.empty()) {
        const auto& [key, value] = *doc.root.begin();
        throw toml::parse_error(value.line, "key '" + key + "' must appear inside a section");
    }

    const std::map<std::string, std::function<void(SectionReader&)>> handlers{
        {"model",
         [&](SectionReader& r) {
             for (const auto& [name, field] : kModelParameterTable) {
                 if (name != "cG_in") r.number(std::string(name), cfg.params.*field);
             }
         }},
        {"operation",
         [&](SectionReader& r) {
             r.number("V0", cfg.x0.volume);
             r.number("m_Xv0", cfg.x0.masses[kViableCells]);
             r.number("m_Xd0", cfg.x0.masses[kDeadCells]);
             r.number("m_G0", cfg.x0.masses[kGlucose]);
             r.number("m_L0", cfg.x0.masses[kLactate]);
             r.number("m_P0", cfg.x0.masses[kProduct]);
             r.number("cG_in", cfg.params.cG_in);
             r.number("F_min", cfg.bounds.F_min);
             r.number("F_max", cfg.bounds.F_max);
             r.number("T_min", cfg.bounds.T_min);
             r.number("T_max", cfg.bounds.T_max);
             r.number("V_min", cfg.bounds.V_min);
             r.number("V_max", cfg.bounds.V_max);
             r.number("m_G_min", cfg.bounds.m_G_min);
             r.number("m_L_min", cfg.bounds.m_L_min);
         }},
        {"schedule",
         [&](SectionReader& r) {
             PhaseSchedule& s = cfg.schedule;
             r.number("batch_end_days", s.batch_end_days);
             r.number("fedbatch_end_days", s.fedbatch_end_days);
             r.number("final_days", s.final_days);
             r.number("temperature", s.temperature);
             r.number("bolus_offset_min", s.bolus.start_offset);
             r.number("bolus_duration_min", s.bolus.duration);
             r.number("bolus_total_flow", s.bolus.total_flow);
             r.number("bolus_feed_glucose", s.bolus.feed_glucose);
             r.number("perfusion_flow", s.perfusion.perfusion_flow);
             r.number("perfusion_total_inflow", s.perfusion.total_inflow);
             r.number("perfusion_feed_glucose", s.perfusion.feed_glucose);
             r.number("sampling_offset_min", s.daily_draw.offset);
             r.number("sampling_duration_min", s.daily_draw.duration);
             r.number("sampling_volume", s.daily_draw.volume);
             if (const toml::Value* v = r.find("sampling_events")) s.sampling = detail::read_sampling_events(r, *v);
         }},
        {"grid",
         [&](SectionReader& r) {
             r.number("step_min", cfg.step_min);
             r.integer("move_blocking", cfg.move_blocking);
             r.optional_integer("intervals", cfg.intervals);
         }},
        {"integrator",
         [&](SectionReader& r) {
             r.number("rel_tol", cfg.integrator.rel_tol);
             r.number("abs_tol", cfg.integrator.abs_tol);
             r.integer("max_steps", cfg.integrator.max_steps);
             r.optional_number("initial_step_min", cfg.integrator.initial_step);
             r.optional_number("fixed_step_min", cfg.integrator.fixed_step);
         }},
        {"solver",
         [&](SectionReader& r) {
             r.number("kkt_tol", cfg.solver.kkt_tol);
             r.number("feasibility_tol", cfg.solver.feasibility_tol);
             r.integer("max_iterations", cfg.solver.max_iterations);
             r.number("mu_init", cfg.solver.mu_init);
             r.choice("line_search", cfg.solver.line_search,
                      {{"filter", nlp::LineSearch::kFilter}, {"l1-merit", nlp::LineSearch::kL1Merit}});
             r.choice("hessian", cfg.solver.hessian,
                      {{"auto", nlp::HessianMode::kAuto},
                       {"exact", nlp::HessianMode::kExact},
                       {"quasi-newton", nlp::HessianMode::kQuasiNewton}});
             r.choice("convexify", cfg.solver.convexify,
                      {{"none", nlp::Convexify::kNone},
                       {"mirror", nlp::Convexify::kMirror},
                       {"clip", nlp::Convexify::kClip}});
         }},
        {"ocp",
         [&](SectionReader& r) {
             r.number("terminal_glucose_max", cfg.terminal_glucose_max);
             r.choice("initial_guess", cfg.guess,
                      {{"base-case", GuessStrategy::kBaseCase}, {"constant-feed", GuessStrategy::kConstantFeed}});
         }},
        {"output", [&](SectionReader& r) { r.string("dir", cfg.output_dir); }},
    };

    for (const auto& [name, table] : doc.sections) {
        const auto h = handlers.find(name);
        if (h == handlers.end()) throw toml::parse_error(doc.section_lines.at(name), "unknown section [" + name + "]");
        SectionReader reader(name, table);
        h->second(reader);
        reader.reject_unknown();
    }
    cfg.validate();
    return cfg;
}

inline RunConfig parse_config(std::string_view text) { return apply_config(toml::parse(text)); }

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ":" + e.what());
    }
}

namespace detail {

template <class Enum>
std::string enum_name(Enum v, std::initializer_list<std::pair<std::string_view, Enum>> options) {
    for (const auto& [name, value] : options) {
        if (value == v) return quoted(std::string(name));
    }
    return "\"?\"";
}

}  // namespace detail

/// Fully resolved configuration in the file syntax; parse_config() of the result reproduces @p cfg.
inline std::string to_toml(const RunConfig& cfg) {
    using detail::format_number;
    std::ostringstream out;
    auto kv = [&](std::string_view key, const std::string& value) { out << key << " = " << value << "\n"; };
    auto num = [&](std::string_view key, double v) { kv(key, format_number(v)); };

    out << "[model]\n";
    for (const auto& [name, field] : kModelParameterTable) {
        if (name != "cG_in") num(name, cfg.params.*field);
    }

    out << "\n[operation]\n";
    num("V0", cfg.x0.volume);
    num("m_Xv0", cfg.x0.masses[kViableCells]);
    num("m_Xd0", cfg.x0.masses[kDeadCells]);
    num("m_G0", cfg.x0.masses[kGlucose]);
    num("m_L0", cfg.x0.masses[kLactate]);
    num("m_P0", cfg.x0.masses[kProduct]);
    num("cG_in", cfg.params.cG_in);
    num("F_min", cfg.bounds.F_min);
    num("F_max", cfg.bounds.F_max);
    num("T_min", cfg.bounds.T_min);
    num("T_max", cfg.bounds.T_max);
    num("V_min", cfg.bounds.V_min);
    num("V_max", cfg.bounds.V_max);
    num("m_G_min", cfg.bounds.m_G_min);
    num("m_L_min", cfg.bounds.m_L_min);

    const PhaseSchedule& s = cfg.schedule;
    out << "\n[schedule]\n";
    num("batch_end_days", s.batch_end_days);
    num("fedbatch_end_days", s.fedbatch_end_days);
    num("final_days", s.final_days);
    num("temperature", s.temperature);
    num("bolus_offset_min", s.bolus.start_offset);
    num("bolus_duration_min", s.bolus.duration);
    num("bolus_total_flow", s.bolus.total_flow);
    num("bolus_feed_glucose", s.bolus.feed_glucose);
    num("perfusion_flow", s.perfusion.perfusion_flow);
    num("perfusion_total_inflow", s.perfusion.total_inflow);
    num("perfusion_feed_glucose", s.perfusion.feed_glucose);
    num("sampling_offset_min", s.daily_draw.offset);
    num("sampling_duration_min", s.daily_draw.duration);
    num("sampling_volume", s.daily_draw.volume);
    if (s.sampling) {
        out << "sampling_events = [";
        for (std::size_t i = 0; i < s.sampling->size(); ++i) {
            const SamplingEvent& e = (*s.sampling)[i];
            out << (i ? ",\n  " : "\n  ") << "[" << format_number(e.start) << ", " << format_number(e.duration) << ", "
                << format_number(e.flow) << "]";
        }
        out << "\n]\n";
    }

    out << "\n[grid]\n";
    num("step_min", cfg.step_min);
    num("move_blocking", cfg.move_blocking);
    if (cfg.intervals) num("intervals", *cfg.intervals);

    out << "\n[integrator]\n";
    num("rel_tol", cfg.integrator.rel_tol);
    num("abs_tol", cfg.integrator.abs_tol);
    num("max_steps", static_cast<double>(cfg.integrator.max_steps));
    if (cfg.integrator.initial_step) num("initial_step_min", *cfg.integrator.initial_step);
    if (cfg.integrator.fixed_step) num("fixed_step_min", *cfg.integrator.fixed_step);

    out << "\n[solver]\n";
    num("kkt_tol", cfg.solver.kkt_tol);
    num("feasibility_tol", cfg.solver.feasibility_tol);
    num("max_iterations", cfg.solver.max_iterations);
    num("mu_init", cfg.solver.mu_init);
    kv("line_search", detail::enum_name(cfg.solver.line_search, {{"filter", nlp::LineSearch::kFilter},
                                                                 {"l1-merit", nlp::LineSearch::kL1Merit}}));
    kv("hessian", detail::enum_name(cfg.solver.hessian, {{"auto", nlp::HessianMode::kAuto},
                                                         {"exact", nlp::HessianMode::kExact},
                                                         {"quasi-newton", nlp::HessianMode::kQuasiNewton}}));
    kv("convexify", detail::enum_name(cfg.solver.convexify, {{"none", nlp::Convexify::kNone},
                                                             {"mirror", nlp::Convexify::kMirror},
                                                             {"clip", nlp::Convexify::kClip}}));

    out << "\n[ocp]\n";
    num("terminal_glucose_max", cfg.terminal_glucose_max);
    kv("initial_guess", detail::enum_name(cfg.guess, {{"base-case", GuessStrategy::kBaseCase},
                                                      {"constant-feed", GuessStrategy::kConstantFeed}}));

    out << "\n[output]\n";
    kv("dir", detail::quoted(cfg.output_dir));
    return out.str();
}

}  // namespace mabopt
