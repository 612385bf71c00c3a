#pragma once

#include <complex>
#include <optional>
#include <utility>
#include <vector>

namespace mdm {

/// Ascending-power polynomial in the junction voltage, c[0] + c[1] v + c[2] v^2 + ...
struct Polynomial {
    std::vector<double> coeffs;

    [[nodiscard]] double operator()(double v) const noexcept;
    [[nodiscard]] double derivative(double v) const noexcept;
    [[nodiscard]] std::size_t degree() const noexcept { return coeffs.empty() ? 0 : coeffs.size() - 1; }
};

/// Fitted optical model of one resonance. SI units throughout.
struct ResonatorParams {
    double lambda_ref = 1566.7e-9;  // analytic-frame reference wavelength (m)
    Polynomial lambda0_coeffs{{1566.7e-9, 0.0, 0.0}};  // m, m/V, m/V^2
    Polynomial tau_c_coeffs{{20e-12, 0.0, 0.0}};       // s, s/V, s/V^2
    Polynomial tau_l_coeffs{{30e-12, 0.0, 0.0}};       // s, s/V, s/V^2
    std::pair<double, double> v_range{-0.5, 2.5};      // polynomial validity window (V)
    double gamma = 251e-12 / 1e-3;                     // heater efficiency (m/W)

    /// Throws NonPhysicalFit / BadArgument when the card violates its invariants.
    void validate() const;
};

/// Informational physical geometry; mu is always derived from tau_c at runtime.
struct ResonatorGeometry {
    double radius = 0.0;          // m
    double group_velocity = 0.0;  // m/s
    double kappa_sq = 0.0;        // power coupling
    double effective_index = 0.0;
    double circumference = 0.0;   // m
    int order = 0;

    /// mu^2 = kappa^2 v_g / (2 pi R)
    [[nodiscard]] double mu_squared() const noexcept;
    /// True when mu^2 matches 2/tau_c within `rel` relative.
    [[nodiscard]] bool consistent_with(double tau_c, double rel = 0.01) const noexcept;
};

struct TauSet {
    double tau_c;
    double tau_l;
    double tau;
    double mu;  // sqrt(2 / tau_c)
};

struct QualityMetrics {
    double q;         // loaded Q = w0 tau / 2
    double f_opt;     // optical 3 dB bandwidth (Hz)
    double fwhm;      // full linewidth (Hz)
};

/// Throws OutOfRangeBias when v is outside the fit window.
void check_bias(const ResonatorParams& p, double v);

[[nodiscard]] double resonance_wavelength(const ResonatorParams& p, double v, double d_lambda);
[[nodiscard]] TauSet tau_at(const ResonatorParams& p, double v);

/// Steady-state energy amplitude for a CW input of absolute angular frequency `omega_laser`.
[[nodiscard]] std::complex<double> steady_state_amplitude(const ResonatorParams& p, double v, double d_lambda,
                                                          double omega_laser, std::complex<double> e_in);

/// Lorentzian power transmission |Eout/Ein|^2 at `lambda_laser`.
[[nodiscard]] double static_transmission(const ResonatorParams& p, double v, double d_lambda, double lambda_laser);

/// Lorentzian transmission from raw rates; `detuning` is omega - omega0 (rad/s).
[[nodiscard]] double lorentzian_transmission(double detuning, double tau_c, double tau_l) noexcept;

[[nodiscard]] QualityMetrics quality_metrics(const ResonatorParams& p, double v);

}  // namespace mdm
