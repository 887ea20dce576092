#pragma once

#include <cstdio>
#include <string>

namespace hwobs {

// All CSV output funnels through this formatter so replays are byte-identical:
// 12 significant digits, shortest form, round-off negatives squashed to 0.
inline std::string format_double(double v) {
    if (v > -1e-12 && v < 0.0) v = 0.0;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

inline std::string format_double(double v, int significant) {
    if (v > -1e-12 && v < 0.0) v = 0.0;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.*g", significant, v);
    return std::string(buf);
}

} // namespace hwobs
