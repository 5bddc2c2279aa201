#pragma once

#include "mabopt/errors.hpp"

#include <cmath>

namespace mabopt {

/// Operating envelope of the reactor: path bounds on the state, box bounds on the inputs.
struct OperatingBounds {
    double V_min = 4.0;     // [L]
    double V_max = 8.0;     // [L]
    double m_G_min = 0.0;   // [g]
    double m_L_min = 0.0;   // [g]
    double F_min = 0.0;     // [L/min]
    double F_max = 0.02;    // [L/min]
    double T_min = 308.15;  // [K]
    double T_max = 310.15;  // [K]

    void validate() const {
        auto ordered = [](double lo, double hi) { return std::isfinite(lo) && std::isfinite(hi) && lo < hi; };
        if (!ordered(V_min, V_max) || V_min <= 0.0) throw ConfigError("volume bounds must satisfy 0 < V_min < V_max");
        if (!ordered(F_min, F_max) || F_min < 0.0) throw ConfigError("flow bounds must satisfy 0 <= F_min < F_max");
        if (!ordered(T_min, T_max) || T_min <= 0.0) throw ConfigError("temperature bounds must satisfy 0 < T_min < T_max");
        if (!std::isfinite(m_G_min) || !std::isfinite(m_L_min)) throw ConfigError("mass lower bounds must be finite");
    }

    bool flow_in_range(double f) const { return f >= F_min && f <= F_max; }
};

}  // namespace mabopt
