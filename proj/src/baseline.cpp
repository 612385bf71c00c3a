#include "mdm/solver.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <chrono>
#include <cmath>

namespace mdm {

using namespace std::complex_literals;

namespace {

/// One backward-Euler step of the pad/substrate/junction network with junction capacitance `cj`.
ElectricalState backward_euler(const ElectricalParams& ep, const ElectricalState& s, double v_src_next, double cj,
                               double dt) {
    // Branch nodes in terms of the new pad voltage: v' = alpha * v + beta * v1'.
    const double kc = ep.cox / dt;
    const double gc = 1.0 / ep.rsi;
    const double alpha_c = kc / (kc + gc);
    const double beta_c = gc / (kc + gc);
    const double kj = cj / dt;
    const double gj = 1.0 / ep.rs;
    const double alpha_j = kj / (kj + gj);
    const double beta_j = gj / (kj + gj);
    const double kp = ep.cpad / dt;
    const double g0 = 1.0 / ep.z0;

    const double lhs = kp + g0 + gc * (1.0 - beta_c) + gj * (1.0 - beta_j);
    const double rhs = kp * s.v1 + g0 * v_src_next + gc * alpha_c * s.v_cox + gj * alpha_j * s.v_m;
    const double v1 = rhs / lhs;
    return {v1, alpha_c * s.v_cox + beta_c * v1, alpha_j * s.v_m + beta_j * v1};
}

}  // namespace

Trace integrate_fixed_baseline(const ResonatorParams& rp, const ElectricalParams& ep, const ThermalParams& tp,
                               const BaselineConfig& cfg, const Stimulus& drive) {
    if (!(cfg.dt > 0.0)) throw Error(ErrorCode::BadArgument, "baseline dt must be positive");
    if (!(cfg.t_end >= 0.0)) throw Error(ErrorCode::BadArgument, "t_end must be >= 0");
    rp.validate();
    ep.validate();
    const auto start = std::chrono::steady_clock::now();

    Trace tr;
    tr.stats.method = cfg.nonlinear_cj ? "baseline_nonlinear_cj" : "baseline_constant_cj";
    const std::size_t stride = std::max<std::size_t>(cfg.record_stride, 1);
    const double omega_ref = angular_frequency(rp.lambda_ref);
    const double slack = 1e-3 * (rp.v_range.second - rp.v_range.first);
    auto bias = [&](double v) {
        if (v < rp.v_range.first - slack || v > rp.v_range.second + slack) check_bias(rp, v);
        return std::clamp(v, rp.v_range.first, rp.v_range.second);
    };

    const InputSample in0 = drive.sample(0.0, 0.0);
    ElectricalState el = ElectricalState::at_dc(in0.v_src);
    ThermalState th{rp.gamma * in0.heater_power};
    std::complex<double> a{0.0, 0.0};
    if (cfg.initial == InitialCondition::SteadyState) {
        const auto ss = steady_state_baseband(rp, bias(el.v_m), th.d_lambda, in0.e_in, drive.laser.offset(0.0));
        a = ss.complex();
    }

    auto record = [&](double t, const std::complex<double>& e_in, double mu) {
        TraceSample s;
        s.t = t;
        s.resonator = {a.real(), a.imag()};
        s.electrical = el;
        s.d_lambda = th.d_lambda;
        s.e_in = e_in;
        s.e_out = e_in - 1.0i * mu * a;
        tr.samples.push_back(s);
    };

    const auto n_ticks = static_cast<std::size_t>(std::ceil(cfg.t_end / cfg.dt - 1e-9));
    record(0.0, in0.e_in, tau_at(rp, bias(el.v_m)).mu);
    ThermalParams dyn = tp;
    dyn.gamma = rp.gamma;

    for (std::size_t n = 0; n < n_ticks; ++n) {
        const double t0 = static_cast<double>(n) * cfg.dt;
        // The last tick is shortened so the run ends exactly at t_end.
        const double t1 = std::min(static_cast<double>(n + 1) * cfg.dt, cfg.t_end);
        const double h = t1 - t0;
        const double piece = 0.5 * (t0 + t1);
        const InputSample in_a = drive.sample(t0, piece);
        const InputSample in_b = drive.sample(t1, piece);

        // Optical update with coefficients frozen at the start of the tick.
        const double vm = bias(el.v_m);
        const TauSet ts = tau_at(rp, vm);
        const double w0 = angular_frequency(rp.lambda0_coeffs(vm) + th.d_lambda) - omega_ref;
        const double wl_a = kTwoPi * drive.laser.offset(t0);
        const double wl_b = kTwoPi * drive.laser.offset(t1);
        const std::complex<double> a_ss0 = (-1.0i * ts.mu) / (1.0i * (wl_a - w0) + 1.0 / ts.tau) * in_a.e_in;
        const std::complex<double> a_ss1 = (-1.0i * ts.mu) / (1.0i * (wl_b - w0) + 1.0 / ts.tau) * in_b.e_in;
        a = a_ss1 + (a - a_ss0) * std::exp((1.0i * w0 - 1.0 / ts.tau) * h);

        const double cj = cfg.nonlinear_cj ? junction_capacitance(ep, el.v_m) : ep.cj0;
        el = backward_euler(ep, el, in_b.v_src, cj, h);
        if (tp.dynamic) {
            th = wavelength_shift_step(dyn, th, in_b.heater_power, h);
        } else {
            th.d_lambda = rp.gamma * in_b.heater_power;
        }
        ++tr.stats.ticks;
        if ((n + 1) % stride == 0 || n + 1 == n_ticks) record(t1, in_b.e_in, tau_at(rp, bias(el.v_m)).mu);
    }
    tr.stats.accepted_steps = tr.stats.ticks;
    tr.stats.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tr;
}

}  // namespace mdm
