#pragma once

namespace mdm {

struct ThermalParams {
    double gamma = 251e-12 / 1e-3;  // m/W
    double rh = 8e3;                // Ohm
    double tau_h = 15e-6;           // s
    bool dynamic = false;           // first-order lag instead of the instantaneous static shift

    void validate() const;
};

struct ThermalState {
    double d_lambda = 0.0;  // m
};

struct HeaterPower {
    double ph;  // W
    double ih;  // A
};

inline constexpr double kMaxHeaterVoltage = 8.0;

[[nodiscard]] HeaterPower heater_power(const ThermalParams& tp, double v_h);
[[nodiscard]] double wavelength_shift_static(const ThermalParams& tp, double ph);
/// Exact exponential update of d(dL)/dt = (gamma Ph - dL) / tau_h over `dt`.
[[nodiscard]] ThermalState wavelength_shift_step(const ThermalParams& tp, const ThermalState& st, double ph,
                                                 double dt);

}  // namespace mdm
