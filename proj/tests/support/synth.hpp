#pragma once

#include "mdm/constants.hpp"
#include "mdm/electrical.hpp"
#include "mdm/extraction.hpp"

#include <cmath>
#include <vector>

namespace mdm::test {

struct SynthOptions {
    double window = 2e-9;         // m either side of the resonance
    std::size_t points = 4001;
    double background = 0.5;      // coupler insertion loss (linear)
    double tilt = 0.1;            // relative background slope across the window
    std::vector<double> biases{-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5};
    std::vector<double> heater_powers{0.0, 1e-3 / 3.0, 2e-3 / 3.0, 1e-3};
    double heater_bias = 0.0;
    std::vector<double> cv_biases{-0.4, 0.0, 1.0};
};

/// Lorentzian sweep centred on the resonance, multiplied by a tilted coupler background.
inline TransmissionSweep synth_sweep(const ResonatorParams& p, double bias, double heater_power,
                                     const SynthOptions& o) {
    const double centre = p.lambda0_coeffs(bias) + p.gamma * heater_power;
    TransmissionSweep s = synthesize_sweep(p, bias, heater_power, centre - o.window, centre + o.window, o.points);
    for (auto& pt : s.points) {
        const double x = (pt.wavelength - centre) / o.window;
        pt.transmission *= o.background * (1.0 + o.tilt * x);
    }
    return s;
}

inline std::vector<double> log_frequencies(double f0, double f1, std::size_t n) {
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i)
        f[i] = f0 * std::pow(f1 / f0, static_cast<double>(i) / static_cast<double>(n - 1));
    return f;
}

/// Noise-free bias sweeps, heater sweeps, S11 (201 points, 0.1-50 GHz at 0 V) and C-V points.
inline MeasurementSet synth_measurements(const ResonatorParams& p, const ElectricalParams& ep,
                                         const SynthOptions& o = {}) {
    MeasurementSet m;
    for (double v : o.biases) m.bias_sweeps.push_back(synth_sweep(p, v, 0.0, o));
    for (double ph : o.heater_powers) m.heater_sweeps.push_back(synth_sweep(p, o.heater_bias, ph, o));
    m.s11 = s11_sweep(ep, 0.0, log_frequencies(0.1e9, 50e9, 201));
    m.s11_bias = 0.0;
    for (double v : o.cv_biases) m.cv.emplace_back(v, junction_capacitance(ep, v));
    // Starting point 30% away from the truth, alternating in sign.
    m.electrical_init = ep;
    m.electrical_init.cj0 *= 1.3;
    m.electrical_init.rs *= 0.7;
    m.electrical_init.cox *= 1.3;
    m.electrical_init.rsi *= 0.7;
    m.electrical_init.cpad *= 1.3;
    return m;
}

}  // namespace mdm::test
