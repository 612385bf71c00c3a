#pragma once

#include "mdm/core_model.hpp"
#include "mdm/extraction.hpp"
#include "mdm/stimulus.hpp"
#include "mdm/trace.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mdm {

struct EyeMetrics {
    double extinction_ratio_db = 0.0;
    double eye_height = 0.0;  // W, negative when closed
    double eye_width = 0.0;   // s
    double rise_20_80 = 0.0;  // s, optical power rising
    double fall_80_20 = 0.0;  // s, optical power falling
    double p_high = 0.0;      // W, mean steady high level
    double p_low = 0.0;       // W, mean steady low level
    double sample_phase = 0.0;  // s after the bit start where the eye is most open
    std::size_t rise_count = 0;
    std::size_t fall_count = 0;
};

/// Output power folded at two unit intervals; counts[it * n_p + ip].
struct EyeDiagram {
    std::size_t n_t = 0;
    std::size_t n_p = 0;
    double ui = 0.0;
    double p_min = 0.0;
    double p_max = 0.0;
    std::vector<std::uint64_t> counts;
    std::optional<EyeMetrics> metrics;

    [[nodiscard]] std::uint64_t at(std::size_t it, std::size_t ip) const { return counts[it * n_p + ip]; }
    [[nodiscard]] std::uint64_t total() const noexcept;
};

struct EyeOptions {
    std::size_t skip = 2;  // leading unit intervals discarded
    std::size_t n_t = 128;
    std::size_t n_p = 128;
    std::size_t points_per_ui = 64;
    bool linear = true;  // scope-style linear interpolation between recorded samples
};

/// Resamples from t_begin + skip*ui and folds at 2*ui; throws TraceTooShort.
[[nodiscard]] EyeDiagram fold_eye(const Trace& trace, double ui, const EyeOptions& opts = {});

/// Where each symbol sits on the trace time axis.
struct PatternTiming {
    double ui = 0.0;
    double t_first = 0.0;  // start time of symbol 0
    std::size_t skip = 2;  // leading symbols ignored
};

/// Level, eye-opening and edge-time metrics for an NRZ trace with known bits; throws InsufficientTransitions.
[[nodiscard]] EyeMetrics eye_metrics(const Trace& trace, const Bits& bits, const PatternTiming& timing);

struct Pam4Levels {
    std::array<double, 4> mean{};    // per symbol index, W
    std::array<double, 4> stddev{};  // per symbol index, W
    std::vector<double> sorted;      // distinct optical levels, ascending
    double gap_ratio = 0.0;          // max / min adjacent gap of the sorted levels
    std::size_t histogram_modes = 0;
    double sample_phase = 0.0;
};

/// Steady-symbol optical levels of a PAM4 trace at the most open sampling phase.
[[nodiscard]] Pam4Levels pam4_levels(const Trace& trace, const std::vector<int>& symbols, const PatternTiming& timing);

/// Local maxima of a lightly smoothed histogram that reach `min_fraction` of the tallest peak;
/// maxima not separated by a valley below half the smaller peak count once.
[[nodiscard]] std::size_t count_histogram_modes(const std::vector<double>& values, std::size_t bins = 64,
                                                double min_fraction = 0.05);

struct ChirpSpec {
    double f_start = 0.0;   // Hz offset from lambda_ref
    double f_stop = 0.0;    // Hz
    double duration = 0.0;  // s
};

struct FcmResult {
    TransmissionSweep sweep;
    bool chirp_too_fast = false;
    double dwell_ratio = 0.0;  // linewidth dwell time divided by tau_max; 0 when no card was supplied
    std::vector<std::string> warnings;
};

/// Default linewidth dwell in units of tau_max; keeps sweep distortion of the resonance near 0.5% of its depth.
inline constexpr double kFcmDwellFactor = 100.0;

/// Largest tau over the card's validity window.
[[nodiscard]] double max_tau(const ResonatorParams& p);

/// Chirp duration that gives a dwell of `dwell_factor * tau_max` per linewidth over `span_hz`.
[[nodiscard]] double fcm_duration(const ResonatorParams& p, double span_hz, double dwell_factor);

/// Maps the chirped trace onto wavelength; the dwell check is warning-level.
[[nodiscard]] FcmResult fcm_spectrum(const Trace& trace, const ChirpSpec& chirp, double lambda_ref, double laser_power,
                                     const ResonatorParams* card = nullptr, std::size_t n_points = 2001,
                                     double dwell_factor = kFcmDwellFactor);

struct SolverComparison {
    double rms_power_diff = 0.0;
    double max_diff = 0.0;
    double peak_power = 0.0;
    std::size_t grid_points = 0;
    SolverStats a;
    SolverStats b;
    /// cost(b) / cost(a): baseline ticks per adaptive evaluation when b is the clocked baseline.
    [[nodiscard]] double cost_ratio() const noexcept;
};

/// Resamples both traces on a shared uniform grid; throws MisalignedTraces.
[[nodiscard]] SolverComparison compare_solvers(const Trace& a, const Trace& b, std::size_t n_points = 20001);

}  // namespace mdm
