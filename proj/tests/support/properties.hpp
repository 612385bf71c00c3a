#pragma once

#include "mdm/constants.hpp"
#include "mdm/electrical.hpp"
#include "mdm/solver.hpp"
#include "mdm/stimulus.hpp"
#include "mdm/thermal.hpp"

#include "support/golden.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mdm::test {

/// Outcome of one randomized property run.
struct PropertyReport {
    std::size_t cases = 0;
    std::size_t failures = 0;
    double worst = 0.0;  // largest violation measure seen (property specific)
    std::string first_failure;

    void record(bool ok, double measure, const std::string& what) {
        ++cases;
        worst = std::max(worst, measure);
        if (!ok && failures++ == 0) first_failure = what;
    }
};

namespace detail {

/// Random NRZ drive inside the card's validity window.
inline PiecewiseLinear random_drive(std::mt19937_64& rng, double ui, std::size_t n_bits) {
    std::uniform_real_distribution<double> level(-0.5, 2.5), edge(0.1, 0.6);
    std::uniform_int_distribution<std::uint64_t> seed(1, 127);
    double lo = level(rng), hi = level(rng);
    if (lo > hi) std::swap(lo, hi);
    return nrz_waveform(prbs_bits(7, seed(rng), n_bits), ui, lo, hi, edge(rng) * ui);
}

}  // namespace detail

/// Starting from an empty resonator, the output energy never exceeds the input energy:
/// at every accepted step, the integral of |Eout|^2 stays below the integral of |Ein|^2.
inline PropertyReport passivity_property(std::size_t n_cases, std::uint64_t seed = 101) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(-60e9, 60e9), power(0.1e-3, 2e-3);
    const ResonatorParams rp = golden_resonator();
    const ElectricalParams ep;
    const ThermalParams tp;
    PropertyReport rep;
    for (std::size_t c = 0; c < n_cases; ++c) {
        const double ui = 40e-12, p = power(rng);
        Stimulus st;
        st.voltage_drive = detail::random_drive(rng, ui, 12);
        st.laser = LaserSource::cw_offset(p, offset(rng));
        SolverConfig cfg;
        cfg.method = IntegrationMethod::Rodas4;
        cfg.rel_tol = 1e-7;
        cfg.t_end = 10 * ui;
        cfg.initial_resonator = ResonatorState{};
        const Trace tr = integrate_adaptive(rp, ep, tp, cfg, st);
        double e_in = 0.0, e_out = 0.0, worst = 0.0;
        for (std::size_t i = 1; i < tr.size(); ++i) {
            const auto& a = tr.samples[i - 1];
            const auto& b = tr.samples[i];
            const double h = b.t - a.t;
            e_in += 0.5 * h * (std::norm(a.e_in) + std::norm(b.e_in));
            e_out += 0.5 * h * (a.p_out() + b.p_out());
            // Time-averaged powers, normalised by the input power.
            worst = std::max(worst, (e_out - e_in) / (p * b.t));
        }
        std::ostringstream what;
        what << "case " << c << ": mean output exceeds input by " << worst << " of P";
        rep.record(worst <= 1e-9, worst, what.str());
    }
    return rep;
}

/// Moving the analytic-frame reference by +10 pm (with the laser offset following) leaves |Eout(t)| unchanged.
inline PropertyReport frame_invariance_property(std::size_t n_cases, std::uint64_t seed = 202) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> detune(-0.3e-9, 0.3e-9), power(0.1e-3, 2e-3);
    const ElectricalParams ep;
    const ThermalParams tp;
    PropertyReport rep;
    for (std::size_t c = 0; c < n_cases; ++c) {
        const double ui = 40e-12, p = power(rng);
        const ResonatorParams base = golden_resonator();
        const double lambda_laser = base.lambda_ref + detune(rng);
        Stimulus st;
        st.voltage_drive = detail::random_drive(rng, ui, 8);
        SolverConfig cfg;
        cfg.method = IntegrationMethod::Rodas4;
        cfg.rel_tol = 1e-10;
        cfg.abs_tol_field = 1e-13;
        cfg.t_end = 6 * ui;

        auto run = [&](double shift) {
            ResonatorParams rp = base;
            rp.lambda_ref += shift;
            Stimulus s = st;
            s.laser = LaserSource::cw(p, lambda_laser, rp.lambda_ref);
            return integrate_adaptive(rp, ep, tp, cfg, s);
        };
        const Trace a = run(0.0);
        const Trace b = run(10e-12);
        double worst = 0.0;
        const double scale = std::sqrt(p);
        for (int k = 0; k <= 600; ++k) {
            const double t = cfg.t_end * k / 600.0;
            worst = std::max(worst, std::abs(std::abs(a.e_out_at(t)) - std::abs(b.e_out_at(t))) / scale);
        }
        std::ostringstream what;
        what << "case " << c << ": |Eout| differs by " << worst << " of sqrt(P)";
        rep.record(worst <= 1e-6, worst, what.str());
    }
    return rep;
}

/// For a fixed drive, the input field maps linearly onto the resonator amplitude and the output field.
inline PropertyReport field_linearity_property(std::size_t n_cases, std::uint64_t seed = 303) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.0, 0.04), phase(0.0, kTwoPi), dur(3e-12, 25e-12);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    const ResonatorParams rp = golden_resonator();
    const ElectricalParams ep;
    const ThermalParams tp;
    PropertyReport rep;
    for (std::size_t c = 0; c < n_cases; ++c) {
        const double ui = 40e-12;
        Stimulus st;
        st.voltage_drive = detail::random_drive(rng, ui, 6);
        std::vector<double> starts;
        std::vector<std::complex<double>> f1, f2, f3;
        const std::complex<double> alpha(coef(rng), coef(rng)), beta(coef(rng), coef(rng));
        for (double t = 0.0; t < 4 * ui; t += dur(rng)) {
            starts.push_back(t);
            f1.push_back(std::polar(amp(rng), phase(rng)));
            f2.push_back(std::polar(amp(rng), phase(rng)));
            f3.push_back(alpha * f1.back() + beta * f2.back());
        }
        BaselineConfig bc;
        bc.dt = 100e-15;
        bc.t_end = 4 * ui;
        bc.nonlinear_cj = true;
        bc.initial = InitialCondition::Zero;
        auto run = [&](const std::vector<std::complex<double>>& fields) {
            Stimulus s = st;
            s.laser = LaserSource::piecewise(starts, fields);
            return integrate_fixed_baseline(rp, ep, tp, bc, s);
        };
        const Trace t1 = run(f1), t2 = run(f2), t3 = run(f3);
        double worst = 0.0, peak_a = 0.0, peak_e = 0.0;
        for (const auto& s : t3.samples) {
            peak_a = std::max(peak_a, std::abs(s.resonator.complex()));
            peak_e = std::max(peak_e, std::abs(s.e_out));
        }
        for (std::size_t i = 0; i < t3.size(); ++i) {
            const auto a_sup = alpha * t1.samples[i].resonator.complex() + beta * t2.samples[i].resonator.complex();
            const auto e_sup = alpha * t1.samples[i].e_out + beta * t2.samples[i].e_out;
            worst = std::max(worst, std::abs(t3.samples[i].resonator.complex() - a_sup) / peak_a);
            worst = std::max(worst, std::abs(t3.samples[i].e_out - e_sup) / peak_e);
        }
        std::ostringstream what;
        what << "case " << c << ": superposition error " << worst;
        rep.record(worst <= 1e-10, worst, what.str());
    }
    return rep;
}

/// Random order and seed: the pattern repeats with period 2^n - 1 and no shorter period,
/// and one period holds 2^(n-1) ones.
inline PropertyReport prbs_property(std::size_t n_cases, std::uint64_t seed = 404) {
    std::mt19937_64 rng(seed);
    const int orders[] = {7, 9, 13, 15};
    std::uniform_int_distribution<int> pick(0, 3);
    PropertyReport rep;
    for (std::size_t c = 0; c < n_cases; ++c) {
        const int n = orders[pick(rng)];
        const std::size_t period = (std::size_t{1} << n) - 1;
        std::uniform_int_distribution<std::uint64_t> s(1, period);
        const std::uint64_t sd = s(rng);
        const Bits b = prbs_bits(n, sd, 2 * period);
        bool ok = true;
        for (std::size_t i = 0; i < period && ok; ++i) ok = b[i] == b[i + period];
        // A shorter period would have to divide 2^n - 1.
        for (std::size_t d = 1; d < period && ok; ++d) {
            if (period % d != 0) continue;
            bool repeats = true;
            for (std::size_t i = 0; i < period && repeats; ++i) repeats = b[i] == b[i + d];
            ok = !repeats;
        }
        const auto ones = static_cast<std::size_t>(std::count(b.begin(), b.begin() + static_cast<long>(period), 1));
        ok = ok && ones == (std::size_t{1} << (n - 1));
        std::ostringstream what;
        what << "case " << c << ": order " << n << " seed " << sd;
        rep.record(ok, ok ? 0.0 : 1.0, what.str());
    }
    return rep;
}

/// The passive network never reflects more power than it receives.
inline PropertyReport s11_passivity_property(std::size_t n_cases, std::uint64_t seed = 505) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> scale(std::log(1.0 / 3.0), std::log(3.0)), logf(std::log(1e7),
                                                                                        std::log(200e9));
    std::uniform_real_distribution<double> bias(-0.5, 2.5);
    PropertyReport rep;
    for (std::size_t c = 0; c < n_cases; ++c) {
        ElectricalParams ep;
        for (double* x : {&ep.cj0, &ep.rs, &ep.cox, &ep.rsi, &ep.cpad, &ep.z0}) *x *= std::exp(scale(rng));
        const double v = std::max(bias(rng), ep.forward_limit() + 0.05);
        double worst = 0.0;
        for (int k = 0; k < 50; ++k) worst = std::max(worst, std::abs(s11(ep, v, std::exp(logf(rng)))));
        std::ostringstream what;
        what << "case " << c << ": |S11| = " << worst;
        rep.record(worst <= 1.0 + 1e-12, std::max(0.0, worst - 1.0), what.str());
    }
    return rep;
}

}  // namespace mdm::test
