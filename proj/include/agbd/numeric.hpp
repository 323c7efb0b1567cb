#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace agbd {

// Neumaier variant of compensated summation. The running error term also
// captures the case where the addend dominates the running sum, which plain
// Kahan misses. Deterministic for a fixed order of additions.
struct NeumaierSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double x) {
        const double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }

    double value() const { return sum + comp; }
};

// 9-significant-digit decimal text, the fixed format for all CSV output and
// ASCII-grid cells.
inline std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// Full round-trip precision, used where re-reading must recover the exact
// double (coordinates in generated plot files).
inline std::string format_g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace agbd
