#include "mdm/core_model.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <cmath>
#include <sstream>

namespace mdm {

double Polynomial::operator()(double v) const noexcept {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * v + *it;
    return acc;
}

double Polynomial::derivative(double v) const noexcept {
    double acc = 0.0;
    for (std::size_t k = coeffs.size(); k-- > 1;) acc = acc * v + static_cast<double>(k) * coeffs[k];
    return acc;
}

void ResonatorParams::validate() const {
    auto fail = [](ErrorCode code, const std::string& msg) { throw Error(code, msg); };
    if (!(v_range.first < v_range.second)) fail(ErrorCode::BadArgument, "v_range must be increasing");
    if (lambda0_coeffs.coeffs.empty() || lambda0_coeffs.degree() > 2)
        fail(ErrorCode::BadArgument, "lambda0_coeffs must have 1 to 3 entries");
    if (tau_c_coeffs.coeffs.empty() || tau_c_coeffs.degree() > 2 || tau_l_coeffs.coeffs.empty() ||
        tau_l_coeffs.degree() > 2)
        fail(ErrorCode::BadArgument, "tau polynomials must have 1 to 3 entries");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail(ErrorCode::BadArgument, "gamma must be finite and >= 0");

    // Quadratics: the extremum may sit inside the window, so check a dense grid plus the ends.
    constexpr int kGrid = 256;
    for (int i = 0; i <= kGrid; ++i) {
        const double v = v_range.first + (v_range.second - v_range.first) * i / kGrid;
        if (!(tau_c_coeffs(v) > 0.0) || !(tau_l_coeffs(v) > 0.0)) {
            std::ostringstream os;
            os << "tau polynomial not positive at v=" << v << " V";
            fail(ErrorCode::NonPhysicalFit, os.str());
        }
        if (!(lambda0_coeffs(v) > 0.0)) fail(ErrorCode::NonPhysicalFit, "lambda0 polynomial not positive");
    }
    if (std::abs(lambda_ref - lambda0_coeffs(0.0)) > 1e-9)
        fail(ErrorCode::BadArgument, "lambda_ref must lie within 1 nm of lambda0(0)");
}

double ResonatorGeometry::mu_squared() const noexcept {
    return kappa_sq * group_velocity / (kTwoPi * radius);
}

bool ResonatorGeometry::consistent_with(double tau_c, double rel) const noexcept {
    const double expected = 2.0 / tau_c;
    return std::abs(mu_squared() - expected) <= rel * expected;
}

void check_bias(const ResonatorParams& p, double v) {
    if (!(v >= p.v_range.first && v <= p.v_range.second)) {
        std::ostringstream os;
        os << "bias " << v << " V outside [" << p.v_range.first << ", " << p.v_range.second << "] V";
        throw Error(ErrorCode::OutOfRangeBias, os.str());
    }
}

double resonance_wavelength(const ResonatorParams& p, double v, double d_lambda) {
    check_bias(p, v);
    return d_lambda + p.lambda0_coeffs(v);
}

TauSet tau_at(const ResonatorParams& p, double v) {
    check_bias(p, v);
    const double tc = p.tau_c_coeffs(v);
    const double tl = p.tau_l_coeffs(v);
    if (!(tc > 0.0) || !(tl > 0.0)) {
        std::ostringstream os;
        os << "tau_c=" << tc << " s, tau_l=" << tl << " s at v=" << v << " V";
        throw Error(ErrorCode::NonPhysicalFit, os.str());
    }
    return {tc, tl, 1.0 / (1.0 / tc + 1.0 / tl), std::sqrt(2.0 / tc)};
}

std::complex<double> steady_state_amplitude(const ResonatorParams& p, double v, double d_lambda,
                                            double omega_laser, std::complex<double> e_in) {
    const TauSet t = tau_at(p, v);
    const double w0 = angular_frequency(resonance_wavelength(p, v, d_lambda));
    using namespace std::complex_literals;
    return (-1.0i * t.mu) / (1.0i * (omega_laser - w0) + 1.0 / t.tau) * e_in;
}

double lorentzian_transmission(double detuning, double tau_c, double tau_l) noexcept {
    const double d2 = detuning * detuning;
    const double diff = 1.0 / tau_l - 1.0 / tau_c;
    const double sum = 1.0 / tau_l + 1.0 / tau_c;
    return (d2 + diff * diff) / (d2 + sum * sum);
}

double static_transmission(const ResonatorParams& p, double v, double d_lambda, double lambda_laser) {
    const TauSet t = tau_at(p, v);
    const double w0 = angular_frequency(resonance_wavelength(p, v, d_lambda));
    return lorentzian_transmission(angular_frequency(lambda_laser) - w0, t.tau_c, t.tau_l);
}

QualityMetrics quality_metrics(const ResonatorParams& p, double v) {
    const TauSet t = tau_at(p, v);
    const double w0 = angular_frequency(resonance_wavelength(p, v, 0.0));
    const double q = w0 * t.tau / 2.0;
    return {q, w0 / (kTwoPi * q), 1.0 / (kPi * t.tau)};
}

}  // namespace mdm
