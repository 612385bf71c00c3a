#include <catch_amalgamated.hpp>

#include "mdm/constants.hpp"
#include "mdm/electrical.hpp"
#include "mdm/errors.hpp"
#include "mdm/solver.hpp"

#include "support/golden.hpp"

#include <cmath>
#include <random>

using namespace mdm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::complex<double> parallel(std::complex<double> a, std::complex<double> b) { return a * b / (a + b); }

Trace run_drive(const PiecewiseLinear& drive, double t_end, double rel_tol, double max_step = 0.0) {
    Stimulus st;
    st.voltage_drive = drive;
    SolverConfig cfg;
    cfg.method = IntegrationMethod::Rodas4;
    cfg.rel_tol = rel_tol;
    cfg.abs_tol_voltage = 1e-9;
    cfg.t_end = t_end;
    if (max_step > 0.0) cfg.max_step = max_step;
    const ResonatorParams rp = test::golden_resonator();
    return integrate_adaptive(rp, ElectricalParams{}, ThermalParams{}, cfg, st);
}

}  // namespace

TEST_CASE("junction capacitance follows the depletion law", "[electrical]") {
    const ElectricalParams ep;
    CHECK(junction_capacitance(ep, 0.0) == 143e-15);
    CHECK_THAT(junction_capacitance(ep, 1.328), WithinRel(143e-15 / std::sqrt(2.0), 1e-14));
    CHECK_THAT(junction_capacitance(ep, 1.0), WithinRel(143e-15 / std::sqrt(1.0 + 1.0 / 1.328), 1e-14));
    CHECK_THAT(junction_capacitance(ep, 1.0), WithinAbs(108.0e-15, 0.05e-15));
}

TEST_CASE("forward bias beyond the clamp margin is rejected", "[electrical]") {
    const ElectricalParams ep;
    CHECK_NOTHROW(junction_capacitance(ep, -0.89 * ep.vbi));
    try {
        (void)junction_capacitance(ep, -0.91 * ep.vbi);
        FAIL("expected ForwardBiasLimit");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ForwardBiasLimit);
    }
}

TEST_CASE("parameter validation", "[electrical]") {
    ElectricalParams ep;
    CHECK_NOTHROW(ep.validate());
    ep.mj = 1.0;
    CHECK_THROWS_AS(ep.validate(), Error);
    ep = {};
    ep.rs = 0.0;
    CHECK_THROWS_AS(ep.validate(), Error);
    ep = {};
    ep.vbi = -1.0;
    CHECK_THROWS_AS(ep.validate(), Error);
}

TEST_CASE("network derivatives", "[electrical]") {
    const ElectricalParams ep;
    const ElectricalDerivatives eq = network_derivatives(ep, ElectricalState::at_dc(0.7), 0.7);
    CHECK(eq.dv1 == 0.0);
    CHECK(eq.dv_cox == 0.0);
    CHECK(eq.dv_m == 0.0);

    const ElectricalDerivatives step = network_derivatives(ep, ElectricalState::at_dc(0.0), 2.0);
    CHECK_THAT(step.dv1, WithinRel(2.0 / (50.0 * 20.3e-15), 1e-14));
    CHECK(step.dv_cox == 0.0);
    CHECK(step.dv_m == 0.0);

    const ElectricalState s{0.9, 0.4, 0.2};
    const ElectricalDerivatives d = network_derivatives(ep, s, 1.3);
    const double i_sub = (0.9 - 0.4) / ep.rsi;
    const double i_j = (0.9 - 0.2) / ep.rs;
    CHECK_THAT(d.dv1, WithinRel(((1.3 - 0.9) / ep.z0 - i_sub - i_j) / ep.cpad, 1e-13));
    CHECK_THAT(d.dv_cox, WithinRel(i_sub / ep.cox, 1e-13));
    CHECK_THAT(d.dv_m, WithinRel(i_j / junction_capacitance(ep, 0.2), 1e-13));
}

TEST_CASE("input impedance and reflection", "[electrical]") {
    const ElectricalParams ep;
    const double f = 10e9;
    const double w = kTwoPi * f;
    const std::complex<double> j{0.0, 1.0};
    const std::complex<double> expected =
        parallel(parallel(1.0 / (j * w * ep.cpad), ep.rsi + 1.0 / (j * w * ep.cox)), ep.rs + 1.0 / (j * w * ep.cj0));
    const std::complex<double> z = input_impedance(ep, 0.0, f);
    CHECK_THAT(std::abs(z - expected), WithinAbs(0.0, 1e-12 * std::abs(expected)));

    CHECK(std::abs(input_impedance(ep, 0.0, 1.0)) > 1e9);
    CHECK(std::abs(input_impedance(ep, 0.0, 1e15)) < 1e-2);
    CHECK_THAT(std::abs(s11(ep, 0.0, 1.0) - 1.0), WithinAbs(0.0, 1e-6));
    for (int i = 0; i <= 200; ++i) {
        const double fi = 0.1e9 * std::pow(500.0, i / 200.0);
        REQUIRE(std::abs(s11(ep, 0.0, fi)) <= 1.0 + 1e-12);
    }
}

TEST_CASE("matched load reflects nothing", "[electrical]") {
    // Zin -> RSi || Rs at high frequency with a vanishing pad and huge series capacitors.
    ElectricalParams ep;
    ep.cpad = 1e-30;
    ep.cox = 1.0;
    ep.cj0 = 1.0;
    ep.rs = 100.0;
    ep.rsi = 100.0;
    CHECK(std::abs(s11(ep, 0.0, 1e9)) < 1e-9);
}

TEST_CASE("electrical bandwidth", "[electrical]") {
    const ElectricalParams ep;
    CHECK_THAT(electrical_bandwidth(ep, 1.0), WithinAbs(18.6e9, 0.1e9));
    CHECK_THAT(electrical_bandwidth(ep, 0.0), WithinRel(1.0 / (kTwoPi * 79.28 * 143e-15), 1e-14));
    CHECK_THAT(electrical_bandwidth(ep, 0.0), WithinAbs(14.0e9, 0.05e9));
    ElectricalParams half = ep;
    half.cj0 *= 0.5;
    CHECK_THAT(electrical_bandwidth(half, 0.7), WithinRel(2.0 * electrical_bandwidth(ep, 0.7), 1e-14));
}

TEST_CASE("step response settles to the source level", "[electrical]") {
    const ElectricalParams ep;
    const double tau_slow = (ep.rsi + ep.z0) * ep.cox + (ep.rs + ep.z0) * ep.cj0 + ep.z0 * ep.cpad;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> vd(-0.5, 2.5);
    for (int i = 0; i < 8; ++i) {
        const double v0 = vd(rng), v1 = vd(rng);
        const Trace tr = run_drive(PiecewiseLinear({0.0, 1e-12}, {v0, v1}), 1e-12 + 5.0 * tau_slow, 1e-8);
        const double vm = tr.samples.back().electrical.v_m;
        CHECK(std::abs(vm - v1) <= 0.01 * std::abs(v1 - v0) + 1e-9);
    }
}

TEST_CASE("pad current matches the small-signal impedance", "[electrical]") {
    const ElectricalParams ep;
    const double bias = 0.8, amp = 1e-3;
    for (double f : {1e9, 5e9, 10e9}) {
        const double period = 1.0 / f;
        const int cycles = 12, per = 256;
        std::vector<double> t, v;
        for (int k = 0; k <= cycles * per; ++k) {
            t.push_back(period * k / per);
            v.push_back(bias + amp * std::sin(kTwoPi * t.back() / period));
        }
        const PiecewiseLinear drive(t, v);
        const Trace tr = run_drive(drive, cycles * period, 1e-10, period / per);

        // Project pad voltage and pad current onto the drive frequency over the last four cycles.
        std::complex<double> vp{0.0, 0.0}, ip{0.0, 0.0};
        const double t0 = (cycles - 4) * period;
        for (std::size_t k = 1; k < tr.size(); ++k) {
            const TraceSample& a = tr.samples[k - 1];
            const TraceSample& b = tr.samples[k];
            if (a.t < t0 || b.t <= a.t) continue;
            auto contrib = [&](const TraceSample& s) {
                const std::complex<double> ph = std::polar(1.0, -kTwoPi * f * s.t);
                const double i_src = (drive(s.t) - s.electrical.v1) / ep.z0;
                return std::make_pair((s.electrical.v1 - bias) * ph, i_src * ph);
            };
            const auto ca = contrib(a), cb = contrib(b);
            const double h = 0.5 * (b.t - a.t);
            vp += h * (ca.first + cb.first);
            ip += h * (ca.second + cb.second);
        }
        const std::complex<double> z_sim = vp / ip;
        const std::complex<double> z_ref = input_impedance(ep, bias, f);
        CHECK(std::abs(z_sim - z_ref) / std::abs(z_ref) < 0.01);
    }
}

TEST_CASE("node currents balance at every accepted step", "[electrical]") {
    const ElectricalParams ep;
    const PiecewiseLinear drive({0.0, 10e-12, 40e-12, 50e-12}, {0.0, 2.0, 2.0, -0.4});
    const Trace tr = run_drive(drive, 120e-12, 1e-6);
    REQUIRE(tr.size() > 10);
    for (const TraceSample& s : tr.samples) {
        const double vs = drive(s.t);
        const ElectricalDerivatives d = network_derivatives(ep, s.electrical, vs);
        const NetworkCurrents c = network_currents(ep, s.electrical, vs, d);
        const double scale = std::abs(c.source) + std::abs(c.pad) + std::abs(c.substrate) + std::abs(c.junction);
        REQUIRE(std::abs(c.source - c.pad - c.substrate - c.junction) <= 1e-9 * std::max(scale, 1e-12));
    }
}

TEST_CASE("junction slews faster where its capacitance is smaller", "[electrical]") {
    const ElectricalParams ep;
    const Trace tr = run_drive(PiecewiseLinear({0.0, 1e-13}, {0.0, 2.0}), 150e-12, 1e-9, 0.05e-12);
    auto slew_and_current = [&](double level) {
        for (std::size_t k = 1; k < tr.size(); ++k) {
            const TraceSample& a = tr.samples[k - 1];
            const TraceSample& b = tr.samples[k];
            if (a.electrical.v_m <= level && b.electrical.v_m > level) {
                const double slew = (b.electrical.v_m - a.electrical.v_m) / (b.t - a.t);
                const double x = (level - a.electrical.v_m) / (b.electrical.v_m - a.electrical.v_m);
                const double v1 = a.electrical.v1 + x * (b.electrical.v1 - a.electrical.v1);
                return std::make_pair(slew, (v1 - level) / ep.rs);
            }
        }
        FAIL("level not crossed");
        return std::make_pair(0.0, 0.0);
    };
    const auto lo = slew_and_current(0.5);
    const auto hi = slew_and_current(1.5);
    const double cap_ratio = junction_capacitance(ep, 0.5) / junction_capacitance(ep, 1.5);
    const double predicted = lo.first * (hi.second / lo.second) * cap_ratio;
    CHECK(cap_ratio > 1.0);
    CHECK_THAT(hi.first, WithinRel(predicted, 0.05));
}
