#pragma once

#include "mdm/electrical.hpp"

#include <complex>
#include <iosfwd>
#include <string>
#include <vector>

namespace mdm {

/// Analytic baseband field x + jy in sqrt(W); power is |E|^2.
using FieldSample = std::complex<double>;

/// Resonator energy amplitude ax + j ay in sqrt(J); |a|^2 is stored energy.
struct ResonatorState {
    double ax = 0.0;
    double ay = 0.0;

    [[nodiscard]] std::complex<double> complex() const noexcept { return {ax, ay}; }
    [[nodiscard]] double energy() const noexcept { return ax * ax + ay * ay; }
};

struct TraceSample {
    double t = 0.0;
    ResonatorState resonator;
    ElectricalState electrical;
    double d_lambda = 0.0;
    FieldSample e_in;
    FieldSample e_out;
    FieldSample de_out;  // d(Eout)/dt; zero when the trace carries no slopes

    [[nodiscard]] double p_out() const noexcept { return std::norm(e_out); }
};

struct SolverStats {
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
    std::size_t derivative_evals = 0;
    std::size_t jacobian_evals = 0;
    std::size_t ticks = 0;  // fixed-step baseline only
    double wall_clock_s = 0.0;
    std::string method;

    /// Right-hand-side plus Jacobian evaluations (or ticks for the clocked baseline).
    [[nodiscard]] std::size_t cost() const noexcept {
        return ticks > 0 ? ticks : derivative_evals + jacobian_evals;
    }
};

class Trace {
public:
    std::vector<TraceSample> samples;
    SolverStats stats;
    /// Samples carry d(Eout)/dt, enabling cubic Hermite resampling.
    bool has_slopes = false;

    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }
    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] double t_begin() const { return samples.front().t; }
    [[nodiscard]] double t_end() const { return samples.back().t; }

    /// Output field at time t (Hermite between samples when slopes exist, linear otherwise).
    [[nodiscard]] FieldSample e_out_at(double t) const;
    [[nodiscard]] double p_out_at(double t) const { return std::norm(e_out_at(t)); }
    /// Linear interpolation of the recorded output power (scope-style resampling).
    [[nodiscard]] double p_out_linear(double t) const;
    [[nodiscard]] double v_m_at(double t) const;

    /// Uniform resampling of output power on [t0, t0 + (n-1) dt].
    [[nodiscard]] std::vector<double> resample_power(double t0, double dt, std::size_t n, bool linear = false) const;

    [[nodiscard]] double peak_power() const noexcept;

    /// CSV columns: t_s, v_m_V, ein_x, ein_y, eout_x, eout_y, p_out_W, dlambda_m
    void write_csv(std::ostream& os, std::size_t decimation = 1) const;
    [[nodiscard]] static Trace read_csv(std::istream& is, const std::string& source_name = "trace");

private:
    [[nodiscard]] std::size_t locate(double t) const;
};

}  // namespace mdm
