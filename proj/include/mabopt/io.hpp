#pragma once

/**
 * @file
 * Result files: trajectory CSV, summary, comparison table and figure data.
 * Numbers are written in shortest round-trip form, so reading a file back
 * reproduces the doubles exactly. Every file is written to a temporary name
 * and renamed into place.
 */

#include "mabopt/errors.hpp"
#include "mabopt/model.hpp"
#include "mabopt/scenario.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mabopt::io {

inline constexpr std::string_view kTrajectoryHeader =
    "t_min,V_L,m_Xv,m_Xd,m_G,m_L,m_P,c_Xv,c_Xd,c_G,c_L,c_P,F_W,F_G,F_per,F_out,T_K";
inline constexpr int kTrajectoryColumns = 17;

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
        throw Error("invalid number '" + std::string(s) + "'");
    }
    return v;
}

/// Writes @p contents to @p path via a sibling temporary file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << contents;
        out.flush();
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/**
 * One row per grid point. Row k carries the input held on [t_k, t_{k+1});
 * the final row repeats the last input (defaults when there are no intervals).
 */
inline std::string trajectory_csv(const Trajectory& traj) {
    traj.validate();
    std::string out(kTrajectoryHeader);
    out += '\n';
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const State& x = traj.states[k];
        const Input u = k < traj.inputs.size() ? traj.inputs[k] : (traj.inputs.empty() ? Input{} : traj.inputs.back());
        std::vector<double> row{traj.times[k], x.volume};
        for (int c = 0; c < kNumComponents; ++c) row.push_back(x.masses[c]);
        for (int c = 0; c < kNumComponents; ++c) row.push_back(x.masses[c] / x.volume);
        row.insert(row.end(), {u.water_flow, u.glucose_flow, u.perfusion_flow, u.sampling_flow, u.temperature});
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_number(row[i]);
        }
        out += '\n';
    }
    return out;
}

/// Parses trajectory_csv() output; concentration columns are ignored, metrics are recomputed.
inline Trajectory parse_trajectory_csv(std::string_view text) {
    Trajectory traj;
    std::vector<Input> row_inputs;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line_no == 1) {
            if (line != kTrajectoryHeader) throw Error("unexpected trajectory CSV header");
            continue;
        }
        if (line.empty()) continue;
        std::vector<double> v;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string_view field = line.substr(start, comma == std::string_view::npos ? line.size() - start
                                                                                              : comma - start);
            try {
                v.push_back(parse_number(field));
            } catch (const Error& e) {
                throw Error("line " + std::to_string(line_no) + ": " + e.what());
            }
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (static_cast<int>(v.size()) != kTrajectoryColumns) {
            throw Error("line " + std::to_string(line_no) + ": expected " + std::to_string(kTrajectoryColumns) +
                        " columns");
        }
        traj.times.push_back(v[0]);
        State x;
        x.volume = v[1];
        for (int c = 0; c < kNumComponents; ++c) x.masses[c] = v[2 + c];
        traj.states.push_back(x);
        row_inputs.push_back(Input{v[12], v[13], v[14], v[15], v[16]});
    }
    if (traj.states.empty()) throw Error("trajectory CSV has no rows");
    row_inputs.pop_back();
    traj.inputs = std::move(row_inputs);
    traj.validate();
    refresh_metrics(traj);
    return traj;
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) { return parse_trajectory_csv(read_file(path)); }

inline std::string summary_text(const Summary& s) {
    std::string out;
    auto kv = [&](std::string_view key, double v) {
        out += key;
        out += " = ";
        out += format_number(v);
        out += '\n';
    };
    kv("final_mab_g", s.final_mab);
    kv("max_volume_L", s.max_volume);
    kv("min_volume_L", s.min_volume);
    kv("min_glucose_g", s.min_glucose);
    kv("min_lactate_g", s.min_lactate);
    if (s.improvement) kv("improvement_percent", *s.improvement);
    return out;
}

struct ComparisonRow {
    std::string name;
    double final_mab = 0.0;
    std::optional<double> improvement;  ///< [%], absent for the baseline itself
};

/// Markdown table in the layout "Case | mAb [g] | Improvement [%]".
inline std::string comparison_table(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << "| Case | mAb [g] | Improvement [%] |\n|---|---:|---:|\n";
    char buf[96];
    for (const ComparisonRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.2f", r.final_mab);
        out << "| " << r.name << " | " << buf << " | ";
        if (r.improvement) {
            std::snprintf(buf, sizeof(buf), "%.0f", *r.improvement);
            out << buf;
        } else {
            out << "-";
        }
        out << " |\n";
    }
    return out.str();
}

/// f_G_inh over c_G in [c_min, c_max] on @p points evenly spaced values; marker = 1 on the row nearest @p mark.
inline std::string glucose_inhibition_csv(const ModelParameters& p, double c_min = 0.0, double c_max = 15.0,
                                          int points = 301, double mark = 7.0) {
    if (points < 2) throw ConfigError("figure data needs at least two points");
    const double h = (c_max - c_min) / (points - 1);
    const long marked = std::lround((mark - c_min) / h);
    std::string out = "c_G_g_per_L,f_G_inh,marker\n";
    for (int i = 0; i < points; ++i) {
        const double c = c_min + (c_max - c_min) * i / (points - 1);
        out += format_number(c) + "," + format_number(1.0 - sigmoid(c, p.cG_bar, p.gamma)) + "," +
               (i == marked ? "1" : "0") + "\n";
    }
    return out;
}

/// smooth_max([0, 1 - KI_P c_P]) over c_P in [0, c_max], with the exact maximum for reference.
inline std::string product_inhibition_csv(const ModelParameters& p, double c_max = 3.0, int points = 301) {
    if (points < 2) throw ConfigError("figure data needs at least two points");
    std::string out = "c_P_g_per_L,linear_term,smooth_max,exact_max\n";
    for (int i = 0; i < points; ++i) {
        const double c = c_max * i / (points - 1);
        const double y = 1.0 - p.KI_P * c;
        const std::array<double, 2> terms{0.0, y};
        out += format_number(c) + "," + format_number(y) + "," + format_number(smooth_max(terms, p.alpha_smooth)) +
               "," + format_number(std::max(0.0, y)) + "\n";
    }
    return out;
}

}  // namespace mabopt::io
