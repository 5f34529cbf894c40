#pragma once

// Deterministic float formatting for the line-oriented file formats.
// Doubles are printed with 17 significant digits so that parsing reproduces
// the exact bit pattern.

#include <cstdio>
#include <string>

namespace symskill {

inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace symskill
