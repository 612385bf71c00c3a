#pragma once

#include <complex>
#include <vector>

namespace mdm {

/// Lumped pad/substrate/junction network. Defaults are the measured microdisk values.
struct ElectricalParams {
    double cj0 = 143e-15;   // F, zero-bias junction capacitance
    double vbi = 1.328;     // V, built-in potential
    double mj = 0.5;        // grading exponent
    double rs = 79.28;      // Ohm, series resistance
    double cox = 65.3e-15;  // F
    double rsi = 1.4e3;     // Ohm
    double cpad = 20.3e-15; // F
    double z0 = 50.0;       // Ohm, source impedance
    double rh = 8e3;        // Ohm, heater resistance

    void validate() const;
    /// Lowest junction voltage at which the depletion formula is used.
    [[nodiscard]] double forward_limit() const noexcept { return -vbi + 0.1 * vbi; }
};

/// v1: pad node, v_cox: across the substrate capacitor, v_m: across the junction (positive = reverse bias).
struct ElectricalState {
    double v1 = 0.0;
    double v_cox = 0.0;
    double v_m = 0.0;

    /// All node voltages equal to `v` (DC equilibrium of the capacitive network).
    [[nodiscard]] static ElectricalState at_dc(double v) noexcept { return {v, v, v}; }
};

struct ElectricalDerivatives {
    double dv1;
    double dv_cox;
    double dv_m;
};

[[nodiscard]] double junction_capacitance(const ElectricalParams& ep, double v_m);

[[nodiscard]] ElectricalDerivatives network_derivatives(const ElectricalParams& ep, const ElectricalState& st,
                                                        double v_src);

/// Source current into the pad node, and the three branch currents leaving it.
struct NetworkCurrents {
    double source;
    double pad;
    double substrate;
    double junction;
};
[[nodiscard]] NetworkCurrents network_currents(const ElectricalParams& ep, const ElectricalState& st,
                                               double v_src, const ElectricalDerivatives& d);

[[nodiscard]] std::complex<double> input_impedance(const ElectricalParams& ep, double v_bias, double f_hz);
[[nodiscard]] std::complex<double> s11(const ElectricalParams& ep, double v_bias, double f_hz);

/// Self-bandwidth of the Rs-Cj branch, 1 / (2 pi Rs Cj(v)).
[[nodiscard]] double electrical_bandwidth(const ElectricalParams& ep, double v_bias);

struct S11Point {
    double f_hz;
    std::complex<double> s11;
};

[[nodiscard]] std::vector<S11Point> s11_sweep(const ElectricalParams& ep, double v_bias,
                                              const std::vector<double>& freqs_hz);

}  // namespace mdm
