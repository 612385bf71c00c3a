#pragma once

#include "mdm/core_model.hpp"
#include "mdm/electrical.hpp"

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mdm {

struct SpectrumPoint {
    double wavelength;    // m
    double transmission;  // linear power ratio
};

/// One wavelength sweep at a fixed bias and heater power.
struct TransmissionSweep {
    double bias = 0.0;          // V
    double heater_power = 0.0;  // W
    std::vector<SpectrumPoint> points;

    /// Strictly increasing wavelengths and positive transmission.
    void validate() const;
};

/// Ideal Lorentzian sweep on a uniform wavelength grid.
[[nodiscard]] TransmissionSweep synthesize_sweep(const ResonatorParams& p, double bias, double heater_power,
                                                 double lambda_start, double lambda_stop, std::size_t n);

/// Removes the slowly varying coupler background; off-resonance level becomes unity.
[[nodiscard]] TransmissionSweep deembed(const TransmissionSweep& sweep);

struct Resonance {
    double lambda0;  // m
    double t0;       // amplitude transmission at resonance
};

[[nodiscard]] Resonance find_resonance(const TransmissionSweep& sweep);

/// Which of the two time-constant assignments sharing |T0| and linewidth is reported.
enum class CouplingBranch {
    CouplingDominant,  // 1/tau_c > 1/tau_l (tau_c < tau_l)
    LossDominant,      // 1/tau_l > 1/tau_c
};

struct TauFit {
    double tau_l;
    double tau_c;
    double residual_rms;
    double t0;  // refined resonance depth (amplitude) the coupling ratio was pinned to
};

[[nodiscard]] TauFit fit_tau(const TransmissionSweep& sweep, const Resonance& res,
                             CouplingBranch branch = CouplingBranch::CouplingDominant);

struct BiasPoint {
    double v;
    double lambda0;
    double tau_c;
    double tau_l;
};

struct VoltagePolyFit {
    Polynomial lambda0;
    Polynomial tau_c;
    Polynomial tau_l;
    std::vector<double> lambda0_residuals;
    std::vector<double> tau_c_residuals;
    std::vector<double> tau_l_residuals;
};

[[nodiscard]] VoltagePolyFit fit_voltage_polys(const std::vector<BiasPoint>& points, int lambda0_degree = 2);

/// Least-squares polynomial of `degree` through (x, y); throws InsufficientPoints.
[[nodiscard]] Polynomial polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree);

/// Slope of (lambda0(Ph) - lambda0(0)) against Ph through the origin (m/W).
[[nodiscard]] double fit_gamma(const std::vector<std::pair<double, double>>& power_lambda0);

struct CvFit {
    double cj0;
    double vbi;
    double mj;
    double residual_rms;  // in log(Cj)
};

[[nodiscard]] CvFit fit_cv(const std::vector<std::pair<double, double>>& v_cj);

/// Parameters of the S11 fit, in this order: Cj0, Rs, Cox, RSi, Cpad.
inline constexpr std::array<const char*, 5> kS11ParamNames{"Cj0", "Rs", "Cox", "RSi", "Cpad"};
using S11Mask = std::array<bool, 5>;  // true = free

struct S11Fit {
    ElectricalParams params;
    double residual_rms = 0.0;
    int iterations = 0;
    std::array<double, 5> sensitivities{};  // diag(J^T J) in log-parameter space
};

[[nodiscard]] S11Fit fit_s11(const std::vector<S11Point>& measured, const ElectricalParams& init,
                             const S11Mask& free = {true, true, true, true, true}, double v_bias = 0.0);

struct BiasFitEntry {
    double v;
    double heater_power;
    double lambda0;
    double t0;
    double tau_l;
    double tau_c;
    double residual_rms;
};

struct MeasurementSet {
    std::vector<TransmissionSweep> bias_sweeps;    // heater off
    std::vector<TransmissionSweep> heater_sweeps;  // fixed bias, increasing heater power
    std::vector<S11Point> s11;                     // measured at s11_bias
    double s11_bias = 0.0;
    std::vector<std::pair<double, double>> cv;     // (v, Cj)
    ElectricalParams electrical_init;
};

struct ExtractionOptions {
    int lambda0_degree = 2;
    CouplingBranch branch = CouplingBranch::CouplingDominant;
    bool deembed = true;
};

struct ExtractionResult {
    ResonatorParams card;
    std::optional<ElectricalParams> electrical;
    bool has_gamma = false;
    std::vector<BiasFitEntry> bias_fits;
    std::vector<BiasFitEntry> heater_fits;
    std::optional<VoltagePolyFit> polys;
    std::optional<CvFit> cv;
    std::optional<S11Fit> s11;
    std::vector<std::string> warnings;
};

/// De-embed, per-bias Lorentzian fits, voltage polynomials, gamma; then C-V and S11.
[[nodiscard]] ExtractionResult extract_all(const MeasurementSet& data, const ExtractionOptions& opts = {});

}  // namespace mdm
