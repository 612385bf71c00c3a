#include <catch_amalgamated.hpp>

#include "mdm/errors.hpp"
#include "mdm/solver.hpp"
#include "mdm/thermal.hpp"

#include "support/golden.hpp"

#include <cmath>
#include <random>

using namespace mdm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("heater power from voltage", "[thermal]") {
    const ThermalParams tp;
    const HeaterPower h = heater_power(tp, 2.83);
    CHECK_THAT(h.ph, WithinRel(2.83 * 2.83 / 8e3, 1e-14));
    CHECK_THAT(h.ph, WithinAbs(1e-3, 0.002e-3));
    CHECK_THAT(h.ih, WithinRel(2.83 / 8e3, 1e-14));
    CHECK(heater_power(tp, 0.0).ph == 0.0);
    CHECK_THAT(heater_power(tp, 4.0).ph, WithinRel(4.0 * heater_power(tp, 2.0).ph, 1e-14));
}

TEST_CASE("heater overdrive is rejected", "[thermal]") {
    const ThermalParams tp;
    CHECK_NOTHROW(heater_power(tp, 8.0));
    try {
        (void)heater_power(tp, 8.01);
        FAIL("expected HeaterOverdrive");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::HeaterOverdrive);
    }
    CHECK_THROWS_AS(heater_power(tp, -0.1), Error);
}

TEST_CASE("static thermo-optic shift", "[thermal]") {
    const ThermalParams tp;
    CHECK_THAT(wavelength_shift_static(tp, 1e-3), WithinRel(251e-12, 1e-14));
    CHECK(wavelength_shift_static(tp, 0.0) == 0.0);
    CHECK_THAT(wavelength_shift_static(tp, 0.5e-3), WithinRel(125.5e-12, 1e-14));
}

TEST_CASE("first-order thermal lag", "[thermal]") {
    ThermalParams tp;
    tp.dynamic = true;
    const ThermalState settled = wavelength_shift_step(tp, {}, 1e-3, 100.0 * tp.tau_h);
    CHECK_THAT(settled.d_lambda, WithinRel(251e-12, 1e-12));

    const ThermalState one = wavelength_shift_step(tp, {}, 1e-3, tp.tau_h);
    CHECK_THAT(one.d_lambda, WithinRel(251e-12 * (1.0 - std::exp(-1.0)), 1e-12));
    CHECK_THAT(one.d_lambda, WithinAbs(158.7e-12, 0.05e-12));

    const ThermalState decay = wavelength_shift_step(tp, {100e-12}, 0.0, 2.0 * tp.tau_h);
    CHECK_THAT(decay.d_lambda, WithinRel(100e-12 * std::exp(-2.0), 1e-12));

    // Composition of two half steps equals one full step.
    const ThermalState a = wavelength_shift_step(tp, wavelength_shift_step(tp, {20e-12}, 0.7e-3, 3e-6), 0.7e-3, 3e-6);
    const ThermalState b = wavelength_shift_step(tp, {20e-12}, 0.7e-3, 6e-6);
    CHECK_THAT(a.d_lambda, WithinRel(b.d_lambda, 1e-12));
}

TEST_CASE("static and dynamic modes agree in steady state", "[thermal]") {
    ThermalParams tp;
    tp.dynamic = true;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> pd(0.0, 8.0 * 8.0 / tp.rh);
    for (int i = 0; i < 100; ++i) {
        const double ph = pd(rng);
        const double dyn = wavelength_shift_step(tp, {0.0}, ph, 60.0 * tp.tau_h).d_lambda;
        const double stat = wavelength_shift_static(tp, ph);
        REQUIRE(std::abs(dyn - stat) <= 1e-9 * std::max(stat, 1e-18));
    }
}

TEST_CASE("dynamic shift is continuous across heater steps", "[thermal]") {
    ThermalParams tp;
    tp.dynamic = true;
    const double dt = 0.1e-6;
    ThermalState st;
    for (int k = 0; k < 400; ++k) {
        const double ph = (k / 100) % 2 == 0 ? 1e-3 : 0.2e-3;
        const ThermalState next = wavelength_shift_step(tp, st, ph, dt);
        REQUIRE(std::abs(next.d_lambda - st.d_lambda) <= tp.gamma * 1e-3 * dt / tp.tau_h * (1.0 + 1e-12));
        REQUIRE(next.d_lambda >= 0.0);
        st = next;
    }
}

TEST_CASE("solver follows the thermal lag", "[thermal]") {
    ResonatorParams rp = test::golden_resonator();
    ThermalParams tp;
    tp.dynamic = true;
    tp.tau_h = 200e-12;  // shortened so the transient fits a short run
    Stimulus st;
    st.heater_power = PiecewiseConstant({0.0, 50e-12}, {0.0, 1e-3});
    SolverConfig cfg;
    cfg.method = IntegrationMethod::Rodas4;
    cfg.rel_tol = 1e-8;
    cfg.t_end = 50e-12 + tp.tau_h;
    const Trace tr = integrate_adaptive(rp, ElectricalParams{}, tp, cfg, st);
    CHECK_THAT(tr.samples.back().d_lambda, WithinRel(rp.gamma * 1e-3 * (1.0 - std::exp(-1.0)), 1e-5));
}
