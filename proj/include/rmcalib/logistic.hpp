#pragma once

#include <cmath>

namespace rmcalib {

/// Overflow-safe logistic sigmoid: 1 / (1 + exp(-x)).
/// Large |x| saturates to 0 or 1 without producing intermediate infinities.
inline double sigmoid(double x) {
    const double e = std::exp(-std::fabs(x));
    return x >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

/// -log(sigmoid(x)) = log(1 + exp(-x)), stable for any finite x.
inline double neg_log_sigmoid(double x) {
    if (x < 0.0) return -x + std::log1p(std::exp(x));
    return std::log1p(std::exp(-x));
}

} // namespace rmcalib
