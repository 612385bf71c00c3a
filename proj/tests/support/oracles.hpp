#pragma once

#include "mdm/constants.hpp"
#include "mdm/core_model.hpp"
#include "mdm/stimulus.hpp"

#include "support/golden.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <complex>
#include <random>
#include <vector>

namespace mdm::test {

/// Constant bias and a piecewise-constant laser field: the optical ODE is linear with constant coefficients.
struct LinearCase {
    ResonatorParams rp;
    double bias = 0.0;
    std::vector<double> starts;
    std::vector<std::complex<double>> fields;
    double t_end = 0.0;
    Stimulus stimulus;
};

inline LinearCase random_linear_case(std::mt19937_64& rng, std::size_t segments) {
    std::uniform_real_distribution<double> bias(-0.5, 2.5), ref(-40e-12, 40e-12), dur(2e-12, 30e-12),
        power(0.0, 2e-3), phase(0.0, kTwoPi);
    LinearCase lc;
    lc.rp = golden_resonator();
    lc.rp.lambda_ref += ref(rng);
    lc.bias = bias(rng);
    double t = 0.0;
    for (std::size_t i = 0; i < segments; ++i) {
        lc.starts.push_back(t);
        lc.fields.push_back(std::polar(std::sqrt(power(rng)), phase(rng)));
        t += dur(rng);
    }
    lc.t_end = t;
    lc.stimulus.voltage_drive = PiecewiseLinear(lc.bias);
    lc.stimulus.laser = LaserSource::piecewise(lc.starts, lc.fields);
    return lc;
}

/// Exact solution by the matrix exponential of the augmented real system [a; 1].
class LinearOracle {
public:
    explicit LinearOracle(const LinearCase& lc) : lc_(lc) {
        const TauSet ts = tau_at(lc.rp, lc.bias);
        const double w = angular_frequency(lc.rp.lambda0_coeffs(lc.bias)) - angular_frequency(lc.rp.lambda_ref);
        a_ = Eigen::Matrix2d{{-1.0 / ts.tau, -w}, {w, -1.0 / ts.tau}};
        mu_ = ts.mu;
        const std::complex<double> j{0.0, 1.0};
        std::complex<double> a = j * mu_ * lc.fields.front() / (j * w - 1.0 / ts.tau);
        for (std::size_t i = 0; i < lc.starts.size(); ++i) {
            start_states_.push_back(a);
            const double end = i + 1 < lc.starts.size() ? lc.starts[i + 1] : lc.t_end;
            a = propagate(a, lc.fields[i], end - lc.starts[i]);
        }
    }

    [[nodiscard]] std::complex<double> at(double t) const {
        auto it = std::upper_bound(lc_.starts.begin(), lc_.starts.end(), t);
        const std::size_t i = it == lc_.starts.begin() ? 0 : static_cast<std::size_t>(it - lc_.starts.begin()) - 1;
        return propagate(start_states_[i], lc_.fields[i], t - lc_.starts[i]);
    }

private:
    [[nodiscard]] std::complex<double> propagate(std::complex<double> a, std::complex<double> e, double dt) const {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        m.topLeftCorner<2, 2>() = a_;
        m(0, 2) = mu_ * e.imag();
        m(1, 2) = -mu_ * e.real();
        const Eigen::Matrix3d phi = (m * dt).exp();
        const Eigen::Vector3d y = phi * Eigen::Vector3d(a.real(), a.imag(), 1.0);
        return {y(0), y(1)};
    }

    LinearCase lc_;
    Eigen::Matrix2d a_;
    double mu_ = 0.0;
    std::vector<std::complex<double>> start_states_;
};

}  // namespace mdm::test
