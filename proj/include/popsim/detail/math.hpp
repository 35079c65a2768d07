#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace popsim::detail {

inline constexpr std::int64_t kLogFactorialTableSize = 256;

inline const std::array<double, kLogFactorialTableSize> &log_factorial_table() {
    static const auto table = [] {
        std::array<double, kLogFactorialTableSize> t{};
        for (std::int64_t k = 0; k < kLogFactorialTableSize; ++k)
            t[static_cast<std::size_t>(k)] = std::lgamma(static_cast<double>(k) + 1.0);
        return t;
    }();
    return table;
}

/// Stirling tail of ln Γ(z): 1/(12z) - 1/(360z³) + 1/(1260z⁵) - 1/(1680z⁷).
inline double stirling_correction(double z) {
    const double r = 1.0 / z;
    const double r2 = r * r;
    return r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)));
}

/// ln(k!)
inline double log_factorial(std::int64_t k) {
    if (k < kLogFactorialTableSize)
        return log_factorial_table()[static_cast<std::size_t>(k)];
    const double z = static_cast<double>(k) + 1.0;
    return (z - 0.5) * std::log(z) - z + 0.91893853320467274178 + stirling_correction(z);
}

/// ln(x! / y!) without forming the two (possibly huge) log-factorials when
/// both arguments are large, so the result keeps its relative precision.
inline double log_factorial_ratio(std::int64_t x, std::int64_t y) {
    if (x == y)
        return 0.0;
    if (x < kLogFactorialTableSize || y < kLogFactorialTableSize)
        return log_factorial(x) - log_factorial(y);
    const double z1 = static_cast<double>(x) + 1.0;
    const double z2 = static_cast<double>(y) + 1.0;
    const double d = static_cast<double>(x - y);
    // (z1-½)ln z1 - (z2-½)ln z2 - d, rearranged around log1p(d/z2).
    return (z2 - 0.5) * std::log1p(d / z2) + d * (std::log(z1) - 1.0) + stirling_correction(z1) -
           stirling_correction(z2);
}

} // namespace popsim::detail
