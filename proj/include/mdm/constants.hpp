#pragma once

#include <numbers>

namespace mdm {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Angular optical frequency for a vacuum wavelength.
[[nodiscard]] constexpr double angular_frequency(double wavelength_m) noexcept {
    return kTwoPi * kSpeedOfLight / wavelength_m;
}

/// Baseband offset frequency of a laser at `lambda_laser` relative to `lambda_ref`.
[[nodiscard]] constexpr double offset_frequency(double lambda_laser, double lambda_ref) noexcept {
    return kSpeedOfLight * (1.0 / lambda_laser - 1.0 / lambda_ref);
}

[[nodiscard]] constexpr double wavelength_from_offset(double offset_hz, double lambda_ref) noexcept {
    return 1.0 / (offset_hz / kSpeedOfLight + 1.0 / lambda_ref);
}

}  // namespace mdm
