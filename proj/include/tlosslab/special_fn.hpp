#pragma once

// Log-gamma and digamma for positive real arguments.
//
// Both functions lift the argument with the recurrence
//   lnG(x) = lnG(x + n) - ln(x (x+1) ... (x+n-1)),   psi(x) = psi(x + n) - sum 1/(x+k)
// until x >= kAsymptoticThreshold and then evaluate the Stirling / de Moivre
// asymptotic series. Truncation error of the series at the threshold is below
// 1e-20, so accuracy is limited by the floating type T. Instantiate with
// long double when absolute accuracy is needed at very large arguments
// (lnG(1e6) ~ 1.3e7, where one double ulp is already ~2e-9).

#include <array>
#include <cmath>
#include <concepts>
#include <numbers>
#include <stdexcept>
#include <string>

namespace tlosslab {

namespace detail {

inline constexpr double kAsymptoticThreshold = 16.0;

template <std::floating_point T>
void require_positive_finite(T x, const char* fn) {
    if (!std::isfinite(x) || !(x > T(0)))
        throw std::domain_error(std::string(fn) + ": argument must be finite and > 0, got " +
                                std::to_string(static_cast<long double>(x)));
}

// B_{2k} / (2k (2k-1)), k = 1..8, as numerator/denominator pairs.
inline constexpr std::array<std::array<double, 2>, 8> kStirlingCoeffs{{
    {1.0, 12.0},
    {-1.0, 360.0},
    {1.0, 1260.0},
    {-1.0, 1680.0},
    {1.0, 1188.0},
    {-691.0, 360360.0},
    {1.0, 156.0},
    {-3617.0, 122400.0},
}};

// B_{2k} / (2k), k = 1..7.
inline constexpr std::array<std::array<double, 2>, 7> kDigammaCoeffs{{
    {1.0, 12.0},
    {-1.0, 120.0},
    {1.0, 252.0},
    {-1.0, 240.0},
    {1.0, 132.0},
    {-691.0, 32760.0},
    {1.0, 12.0},
}};

}  // namespace detail

/// Natural log of the gamma function for x > 0.
template <std::floating_point T>
T log_gamma(T x) {
    detail::require_positive_finite(x, "log_gamma");

    // Multiply up the lifting product; at most ~16 factors each < 16, so it
    // cannot overflow even for T = float.
    T shift_log = T(0);
    if (x < T(detail::kAsymptoticThreshold)) {
        T prod = T(1);
        while (x < T(detail::kAsymptoticThreshold)) {
            prod *= x;
            x += T(1);
        }
        shift_log = std::log(prod);
    }

    const T inv = T(1) / x;
    const T inv2 = inv * inv;
    T series = T(0);
    T pow = inv;
    for (const auto& [num, den] : detail::kStirlingCoeffs) {
        series += (T(num) / T(den)) * pow;
        pow *= inv2;
    }
    const T half_log_two_pi = T(0.5) * std::log(T(2) * std::numbers::pi_v<T>);
    return (x - T(0.5)) * std::log(x) - x + half_log_two_pi + series - shift_log;
}

/// psi(x) = d/dx ln Gamma(x) for x > 0.
template <std::floating_point T>
T digamma(T x) {
    detail::require_positive_finite(x, "digamma");

    T shift = T(0);
    while (x < T(detail::kAsymptoticThreshold)) {
        shift += T(1) / x;
        x += T(1);
    }

    const T inv = T(1) / x;
    const T inv2 = inv * inv;
    T series = T(0);
    T pow = inv2;
    for (const auto& [num, den] : detail::kDigammaCoeffs) {
        series += (T(num) / T(den)) * pow;
        pow *= inv2;
    }
    return std::log(x) - T(0.5) * inv - series - shift;
}

}  // namespace tlosslab
