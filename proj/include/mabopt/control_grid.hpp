#pragma once

#include "mabopt/errors.hpp"

#include <cmath>
#include <string>

namespace mabopt {

inline constexpr double kMinutesPerDay = 1440.0;

/// Uniform zero-order-hold grid; controls may be held over blocks of intervals.
struct ControlGrid {
    int intervals = 672;    ///< N
    double step = 30.0;     ///< T_s [min]
    int move_blocking = 8;  ///< intervals per control move

    double horizon() const { return intervals * step; }
    double time(int k) const { return k * step; }
    int blocks() const { return move_blocking > 0 ? intervals / move_blocking : 0; }
    int block_of(int k) const { return k / move_blocking; }

    void validate() const {
        if (intervals < 0) throw ConfigError("grid intervals must be >= 0");
        if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("grid step must be > 0");
        if (move_blocking < 1) throw ConfigError("move_blocking must be >= 1");
        if (intervals % move_blocking != 0) {
            throw ConfigError("move_blocking (" + std::to_string(move_blocking) + ") must divide N (" +
                              std::to_string(intervals) + ")");
        }
    }

    /// Grid covering @p horizon_min with step @p step_min; the step must divide the horizon.
    static ControlGrid covering(double horizon_min, double step_min, int move_blocking) {
        if (!(step_min > 0.0)) throw ConfigError("grid step must be > 0");
        const double n = horizon_min / step_min;
        const double rounded = std::round(n);
        if (!(horizon_min >= 0.0) || std::abs(n - rounded) > 1e-9 * std::max(1.0, n)) {
            throw ConfigError("grid step does not divide the horizon");
        }
        ControlGrid g{static_cast<int>(rounded), step_min, move_blocking};
        return g;
    }
};

}  // namespace mabopt
