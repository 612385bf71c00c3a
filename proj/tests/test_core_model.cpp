#include <catch_amalgamated.hpp>

#include "mdm/constants.hpp"
#include "mdm/core_model.hpp"
#include "mdm/errors.hpp"

#include <cmath>
#include <random>

using namespace mdm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ResonatorParams flat_card(double tau_c, double tau_l) {
    ResonatorParams p;
    p.tau_c_coeffs = {{tau_c, 0.0, 0.0}};
    p.tau_l_coeffs = {{tau_l, 0.0, 0.0}};
    return p;
}

}  // namespace

TEST_CASE("resonance wavelength is the polynomial plus thermal shift", "[core_model]") {
    ResonatorParams p;
    CHECK(resonance_wavelength(p, 0.0, 0.0) == 1566.7e-9);
    CHECK_THAT(resonance_wavelength(p, 0.0, 251e-12), WithinAbs(1566.7e-9 + 251e-12, 1e-21));

    p.lambda0_coeffs = {{1566.7e-9, 10e-12, 0.0}};
    CHECK_THAT(resonance_wavelength(p, 2.0, 0.0), WithinAbs(1566.7e-9 + 20e-12, 1e-21));
}

TEST_CASE("out-of-range bias is rejected", "[core_model]") {
    const ResonatorParams p;
    try {
        (void)resonance_wavelength(p, 2.6, 0.0);
        FAIL("expected OutOfRangeBias");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OutOfRangeBias);
    }
    CHECK_THROWS_AS(tau_at(p, -0.6), Error);
    CHECK_NOTHROW(tau_at(p, -0.5));
    CHECK_NOTHROW(tau_at(p, 2.5));
}

TEST_CASE("tau and mu from the coupling and loss times", "[core_model]") {
    const TauSet a = tau_at(flat_card(50e-12, 50e-12), 0.0);
    CHECK_THAT(a.tau, WithinRel(25e-12, 1e-14));
    CHECK_THAT(a.mu, WithinRel(std::sqrt(4e10), 1e-14));

    const TauSet b = tau_at(flat_card(30e-12, 60e-12), 0.0);
    CHECK_THAT(b.tau, WithinRel(20e-12, 1e-14));

    ResonatorParams sloped;
    sloped.tau_c_coeffs = {{20e-12, 1e-12, 0.2e-12}};
    for (double v = -0.5; v <= 2.5; v += 0.25) {
        const TauSet t = tau_at(sloped, v);
        CHECK_THAT(t.mu * t.mu * t.tau_c, WithinRel(2.0, 1e-13));
    }
}

TEST_CASE("non-positive time constants are non-physical", "[core_model]") {
    ResonatorParams p;
    p.tau_l_coeffs = {{10e-12, -10e-12, 0.0}};  // zero at 1 V
    try {
        (void)tau_at(p, 1.5);
        FAIL("expected NonPhysicalFit");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonPhysicalFit);
    }
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("card validation checks lambda_ref distance", "[core_model]") {
    ResonatorParams p;
    CHECK_NOTHROW(p.validate());
    p.lambda_ref = p.lambda0_coeffs(0.0) + 1.5e-9;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("steady-state amplitude at resonance", "[core_model]") {
    const ResonatorParams p = flat_card(20e-12, 30e-12);
    const double w0 = angular_frequency(p.lambda0_coeffs(0.0));
    const std::complex<double> e_in{0.03, -0.01};
    const std::complex<double> a = steady_state_amplitude(p, 0.0, 0.0, w0, e_in);

    const double tau = 1.0 / (1.0 / 20e-12 + 1.0 / 30e-12);
    const double mu = std::sqrt(2.0 / 20e-12);
    const std::complex<double> expected = std::complex<double>(0.0, -mu * tau) * e_in;
    CHECK_THAT(std::abs(a - expected), WithinAbs(0.0, 1e-12 * std::abs(expected)));

    CHECK(steady_state_amplitude(p, 0.0, 0.0, w0, {0.0, 0.0}) == std::complex<double>(0.0, 0.0));
    const std::complex<double> far = steady_state_amplitude(p, 0.0, 0.0, w0 + 1e16, e_in);
    CHECK(std::abs(far) < 1e-4 * std::abs(a));
}

TEST_CASE("static transmission limits", "[core_model]") {
    const ResonatorParams crit = flat_card(25e-12, 25e-12);
    const double l0 = crit.lambda0_coeffs(0.0);
    CHECK_THAT(static_transmission(crit, 0.0, 0.0, l0), WithinAbs(0.0, 1e-15));

    // 1/tau_l = 0.5/tau_c
    const ResonatorParams half = flat_card(20e-12, 40e-12);
    CHECK_THAT(static_transmission(half, 0.0, 0.0, l0), WithinRel(1.0 / 9.0, 1e-12));

    CHECK(static_transmission(half, 0.0, 0.0, l0 + 5e-9) > 0.999);
    CHECK_THAT(lorentzian_transmission(0.0, 20e-12, 40e-12), WithinRel(1.0 / 9.0, 1e-14));
}

TEST_CASE("quality metrics", "[core_model]") {
    const ResonatorParams p = flat_card(4e-12, 4e-12);  // tau = 2 ps
    const QualityMetrics q = quality_metrics(p, 0.0);
    CHECK_THAT(q.q, WithinRel(1202.3, 1e-4));
    const double w0 = angular_frequency(1566.7e-9);
    CHECK_THAT(q.f_opt * q.q, WithinRel(w0 / kTwoPi, 1e-12));
    CHECK_THAT(q.fwhm, WithinRel(1.0 / (kPi * 2e-12), 1e-12));

    const QualityMetrics q2 = quality_metrics(flat_card(8e-12, 8e-12), 0.0);
    CHECK_THAT(q2.q, WithinRel(2.0 * q.q, 1e-12));
}

TEST_CASE("geometry consistency with tau_c", "[core_model]") {
    ResonatorGeometry g;
    g.radius = 5e-6;
    g.group_velocity = 7.5e7;
    g.kappa_sq = 0.02;
    const double tau_c = 2.0 / g.mu_squared();
    CHECK_THAT(g.mu_squared(), WithinRel(0.02 * 7.5e7 / (kTwoPi * 5e-6), 1e-14));
    CHECK(g.consistent_with(tau_c));
    CHECK(g.consistent_with(tau_c * 1.005));
    CHECK_FALSE(g.consistent_with(tau_c * 1.05));
}

TEST_CASE("transmission stays in [0, 1] over a dense grid", "[core_model]") {
    ResonatorParams p;
    p.lambda0_coeffs = {{1566.7e-9, 65e-12, 3e-12}};
    p.tau_c_coeffs = {{20e-12, 0.8e-12, 0.2e-12}};
    p.tau_l_coeffs = {{30e-12, 4e-12, 0.5e-12}};
    for (int iv = 0; iv <= 30; ++iv) {
        const double v = -0.5 + 0.1 * iv;
        for (int il = -200; il <= 200; ++il) {
            const double t = static_transmission(p, v, 0.0, 1566.7e-9 + il * 5e-12);
            REQUIRE(t >= 0.0);
            REQUIRE(t <= 1.0);
        }
    }
}

TEST_CASE("power minimum equals squared amplitude transmission", "[core_model]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> tc(5e-12, 80e-12), tl(5e-12, 80e-12);
    for (int i = 0; i < 200; ++i) {
        const ResonatorParams p = flat_card(tc(rng), tl(rng));
        const TauSet t = tau_at(p, 0.0);
        const double t0 = std::abs((1.0 / t.tau_l - 1.0 / t.tau_c) / (1.0 / t.tau_l + 1.0 / t.tau_c));
        REQUIRE_THAT(static_transmission(p, 0.0, 0.0, p.lambda0_coeffs(0.0)), WithinAbs(t0 * t0, 1e-14));
    }
}

TEST_CASE("steady state reproduces the Lorentzian", "[core_model]") {
    ResonatorParams p;
    p.tau_c_coeffs = {{20e-12, 0.8e-12, 0.2e-12}};
    p.tau_l_coeffs = {{30e-12, 4e-12, 0.5e-12}};
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> vd(-0.5, 2.5), dl(-300e-12, 300e-12), ph(0.0, kTwoPi);
    for (int i = 0; i < 500; ++i) {
        const double v = vd(rng);
        const double lambda = p.lambda0_coeffs(v) + dl(rng);
        const std::complex<double> e_in = std::polar(0.03, ph(rng));
        const std::complex<double> a = steady_state_amplitude(p, v, 0.0, angular_frequency(lambda), e_in);
        const std::complex<double> e_out = e_in - std::complex<double>(0.0, tau_at(p, v).mu) * a;
        const double expected = static_transmission(p, v, 0.0, lambda);
        REQUIRE_THAT(std::norm(e_out / e_in), WithinRel(expected, 1e-12) || WithinAbs(expected, 1e-15));
    }
}

TEST_CASE("Horner evaluation matches the power sum", "[core_model]") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> c(-2.0, 2.0), x(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const Polynomial poly{{c(rng), c(rng), c(rng), c(rng)}};
        const double v = x(rng);
        double naive = 0.0, scale = 0.0;
        for (std::size_t k = 0; k < poly.coeffs.size(); ++k) {
            naive += poly.coeffs[k] * std::pow(v, static_cast<double>(k));
            scale += std::abs(poly.coeffs[k] * std::pow(v, static_cast<double>(k)));
        }
        REQUIRE_THAT(poly(v), WithinAbs(naive, 8.0 * std::numeric_limits<double>::epsilon() * scale));
        const double d = poly.coeffs[1] + 2.0 * poly.coeffs[2] * v + 3.0 * poly.coeffs[3] * v * v;
        REQUIRE_THAT(poly.derivative(v), WithinAbs(d, 1e-12 * (1.0 + std::abs(d))));
    }
}
