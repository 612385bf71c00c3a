#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

namespace mdm {

using Bits = std::vector<std::uint8_t>;

/// Maximal-length LFSR pattern. Supported orders: 7, 9, 13, 15, 31.
[[nodiscard]] Bits prbs_bits(int order, std::uint64_t seed, std::size_t n);

/// Continuous piecewise-linear waveform; held constant outside the knot span.
class PiecewiseLinear {
public:
    PiecewiseLinear() = default;
    explicit PiecewiseLinear(double constant);
    PiecewiseLinear(std::vector<double> times, std::vector<double> values);

    [[nodiscard]] double operator()(double t) const noexcept;
    /// Slope of the linear piece containing `piece_time`.
    [[nodiscard]] double slope(double piece_time) const noexcept;
    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] double max_abs_slope() const noexcept;

private:
    [[nodiscard]] std::size_t segment(double t) const noexcept;

    std::vector<double> times_;
    std::vector<double> values_;
};

/// Right-continuous step function; value before the first step is `values[0]`.
class PiecewiseConstant {
public:
    PiecewiseConstant() = default;
    explicit PiecewiseConstant(double constant) : times_{0.0}, values_{constant} {}
    PiecewiseConstant(std::vector<double> start_times, std::vector<double> values);

    /// Value on the piece containing `piece_time`.
    [[nodiscard]] double operator()(double piece_time) const noexcept;
    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> times_;
    std::vector<double> values_;
};

[[nodiscard]] PiecewiseLinear nrz_waveform(const Bits& bits, double ui, double v_low, double v_high, double t_edge);

/// Symbol levels for `vpp` centred on `v_bias`, equally spaced.
[[nodiscard]] std::array<double, 4> default_pam4_levels(double vpp, double v_bias);
/// Bit pairs to symbol indices 0..3 (Gray: 00,01,11,10 -> 0,1,2,3).
[[nodiscard]] std::vector<int> pam4_symbols(const Bits& bits, bool gray);
[[nodiscard]] PiecewiseLinear pam4_waveform(const Bits& bits, double ui, const std::array<double, 4>& levels,
                                            double t_edge, bool gray);

inline constexpr double kMaxBasebandOffset = 100e9;  // Hz

/// Baseband laser field: sqrt(P) exp(j phi(t)) with phi' = 2 pi f(t), or piecewise-constant complex values.
class LaserSource {
public:
    enum class Kind { Cw, Chirp, Piecewise };

    [[nodiscard]] static LaserSource cw(double power_w, double lambda_laser, double lambda_ref);
    [[nodiscard]] static LaserSource cw_offset(double power_w, double offset_hz);
    [[nodiscard]] static LaserSource chirp(double power_w, double f_start, double f_stop, double duration);
    /// Constant complex field on [start_times[i], start_times[i+1]).
    [[nodiscard]] static LaserSource piecewise(std::vector<double> start_times,
                                               std::vector<std::complex<double>> fields);

    [[nodiscard]] std::complex<double> field(double t, double piece_time) const noexcept;
    [[nodiscard]] std::complex<double> field_rate(double t, double piece_time) const noexcept;
    [[nodiscard]] double offset(double t) const noexcept;  // instantaneous offset frequency (Hz)
    [[nodiscard]] double phase(double t) const noexcept;
    [[nodiscard]] double power() const noexcept { return power_; }
    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] double f_start() const noexcept { return f_start_; }
    [[nodiscard]] double f_stop() const noexcept { return f_stop_; }
    [[nodiscard]] double duration() const noexcept { return duration_; }
    [[nodiscard]] std::vector<double> corners() const;

private:
    Kind kind_ = Kind::Cw;
    double power_ = 0.0;
    double f_start_ = 0.0;
    double f_stop_ = 0.0;
    double duration_ = 0.0;
    std::vector<double> piece_times_;
    std::vector<std::complex<double>> piece_fields_;
};

/// Everything the solver samples at one instant.
struct InputSample {
    double v_src;
    double dv_src;
    std::complex<double> e_in;
    std::complex<double> de_in;
    double heater_power;
};

struct Stimulus {
    PiecewiseLinear voltage_drive{0.0};
    LaserSource laser = LaserSource::cw_offset(1e-3, 0.0);
    PiecewiseConstant heater_power{0.0};  // W

    [[nodiscard]] InputSample sample(double t, double piece_time) const noexcept;
    /// Sorted, de-duplicated times where any input has a kink or jump.
    [[nodiscard]] std::vector<double> corners() const;
};

}  // namespace mdm
