#include "mdm/solver.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

namespace mdm {

using namespace std::complex_literals;

ResonatorState resonator_derivatives(const ResonatorParams& rp, const ResonatorState& st, double v_m,
                                     double d_lambda, FieldSample e_in) {
    const TauSet t = tau_at(rp, v_m);
    const double w0 = angular_frequency(resonance_wavelength(rp, v_m, d_lambda)) - angular_frequency(rp.lambda_ref);
    return {-w0 * st.ay - st.ax / t.tau + t.mu * e_in.imag(), w0 * st.ax - st.ay / t.tau - t.mu * e_in.real()};
}

FieldSample output_field(const ResonatorParams& rp, const ResonatorState& st, double v_m, FieldSample e_in) {
    const double mu = tau_at(rp, v_m).mu;
    return {e_in.real() + mu * st.ay, e_in.imag() - mu * st.ax};
}

ResonatorState steady_state_baseband(const ResonatorParams& rp, double v_m, double d_lambda, FieldSample e_in,
                                     double laser_offset_hz) {
    const TauSet t = tau_at(rp, v_m);
    const double w0 = angular_frequency(resonance_wavelength(rp, v_m, d_lambda)) - angular_frequency(rp.lambda_ref);
    const std::complex<double> a = (-1.0i * t.mu) / (1.0i * (kTwoPi * laser_offset_hz - w0) + 1.0 / t.tau) * e_in;
    return {a.real(), a.imag()};
}

const char* to_string(IntegrationMethod m) noexcept {
    switch (m) {
        case IntegrationMethod::DormandPrince45: return "dp45";
        case IntegrationMethod::Rosenbrock23: return "rosenbrock23";
        case IntegrationMethod::Rosenbrock34: return "rosenbrock34";
        case IntegrationMethod::Rodas4: return "rodas4";
    }
    return "unknown";
}

void SolverConfig::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol_field > 0.0) || !(abs_tol_voltage > 0.0))
        throw Error(ErrorCode::BadArgument, "solver tolerances must be positive");
    if (!(min_step > 0.0) || !(min_step <= max_step))
        throw Error(ErrorCode::BadArgument, "solver requires 0 < min_step <= max_step");
    if (!(t_end >= 0.0)) throw Error(ErrorCode::BadArgument, "t_end must be >= 0");
}

namespace detail {

CoupledSystem::CoupledSystem(const ResonatorParams& rp, const ElectricalParams& ep, const ThermalParams& tp,
                             const Stimulus& drive)
    : rp_(rp), ep_(ep), tp_(tp), drive_(drive), omega_ref_(angular_frequency(rp.lambda_ref)) {}

double CoupledSystem::clamp_bias(double v_m) const {
    return std::isfinite(v_m) ? std::clamp(v_m, rp_.v_range.first, rp_.v_range.second) : rp_.v_range.first;
}

void CoupledSystem::check_state(const StateVector& y) const {
    const double vm = y[4];
    const double slack = 1e-3 * (rp_.v_range.second - rp_.v_range.first);
    if (vm < rp_.v_range.first - slack || vm > rp_.v_range.second + slack || !std::isfinite(vm))
        check_bias(rp_, vm);  // throws with the standard message
    if (!(vm > ep_.forward_limit())) (void)junction_capacitance(ep_, vm);  // throws ForwardBiasLimit
}

CoupledSystem::Coefficients CoupledSystem::coefficients(double v_m, double d_lambda) const {
    const double v = clamp_bias(v_m);
    const double lambda0 = rp_.lambda0_coeffs(v) + d_lambda;
    const double tc = rp_.tau_c_coeffs(v);
    const double tl = rp_.tau_l_coeffs(v);
    if (!(tc > 0.0) || !(tl > 0.0)) throw Error(ErrorCode::NonPhysicalFit, "tau polynomial not positive");
    const double dtc = rp_.tau_c_coeffs.derivative(v);
    const double dtl = rp_.tau_l_coeffs.derivative(v);
    const double mu = std::sqrt(2.0 / tc);
    const double dw_dl = -kTwoPi * kSpeedOfLight / (lambda0 * lambda0);
    return {kTwoPi * kSpeedOfLight / lambda0 - omega_ref_,
            1.0 / tc + 1.0 / tl,
            mu,
            dw_dl * rp_.lambda0_coeffs.derivative(v),
            dw_dl,
            -dtc / (tc * tc) - dtl / (tl * tl),
            -0.5 * mu * dtc / tc};
}

double CoupledSystem::d_lambda(double piece_time, const StateVector& y) const {
    return tp_.dynamic ? y[5] : rp_.gamma * drive_.heater_power(piece_time);
}

StateVector CoupledSystem::derivatives(double t, double piece_time, const StateVector& y) const {
    const InputSample in = drive_.sample(t, piece_time);
    const double vm = y[4];
    const Coefficients c = coefficients(vm, d_lambda(piece_time, y));
    // Trial stages may leave the valid window; accepted states are checked by check_state.
    const double inv_cj = std::pow(1.0 + std::max(vm, ep_.forward_limit()) / ep_.vbi, ep_.mj) / ep_.cj0;
    const double i_sub = (y[2] - y[3]) / ep_.rsi;
    const double i_j = (y[2] - vm) / ep_.rs;
    StateVector f;
    f[0] = -c.w0 * y[1] - c.inv_tau * y[0] + c.mu * in.e_in.imag();
    f[1] = c.w0 * y[0] - c.inv_tau * y[1] - c.mu * in.e_in.real();
    f[2] = ((in.v_src - y[2]) / ep_.z0 - i_sub - i_j) / ep_.cpad;
    f[3] = i_sub / ep_.cox;
    f[4] = i_j * inv_cj;
    f[5] = tp_.dynamic ? (rp_.gamma * in.heater_power - y[5]) / tp_.tau_h : 0.0;
    return f;
}

void CoupledSystem::jacobian(double t, double piece_time, const StateVector& y, Jacobian& jac,
                             StateVector& dfdt) const {
    const InputSample in = drive_.sample(t, piece_time);
    const double vm = y[4];
    const Coefficients c = coefficients(vm, d_lambda(piece_time, y));
    for (auto& row : jac) row.fill(0.0);

    jac[0][0] = -c.inv_tau;
    jac[0][1] = -c.w0;
    jac[0][4] = -c.dw_dvm * y[1] - c.dinv_tau_dvm * y[0] + c.dmu_dvm * in.e_in.imag();
    jac[1][0] = c.w0;
    jac[1][1] = -c.inv_tau;
    jac[1][4] = c.dw_dvm * y[0] - c.dinv_tau_dvm * y[1] - c.dmu_dvm * in.e_in.real();
    if (tp_.dynamic) {
        jac[0][5] = -c.dw_dl * y[1];
        jac[1][5] = c.dw_dl * y[0];
        jac[5][5] = -1.0 / tp_.tau_h;
    }

    const double g_sum = 1.0 / ep_.z0 + 1.0 / ep_.rsi + 1.0 / ep_.rs;
    jac[2][2] = -g_sum / ep_.cpad;
    jac[2][3] = 1.0 / (ep_.rsi * ep_.cpad);
    jac[2][4] = 1.0 / (ep_.rs * ep_.cpad);
    jac[3][2] = 1.0 / (ep_.rsi * ep_.cox);
    jac[3][3] = -jac[3][2];
    const double x = 1.0 + std::max(vm, ep_.forward_limit()) / ep_.vbi;
    const double inv_cj = std::pow(x, ep_.mj) / ep_.cj0;
    const double dinv_cj = ep_.mj / ep_.vbi * std::pow(x, ep_.mj - 1.0) / ep_.cj0;
    jac[4][2] = inv_cj / ep_.rs;
    jac[4][4] = -inv_cj / ep_.rs + (y[2] - vm) / ep_.rs * dinv_cj;

    dfdt.fill(0.0);
    dfdt[0] = c.mu * in.de_in.imag();
    dfdt[1] = -c.mu * in.de_in.real();
    dfdt[2] = in.dv_src / (ep_.z0 * ep_.cpad);
}

TraceSample CoupledSystem::observe(double t, double piece_time, const StateVector& y,
                                   const StateVector& dydt) const {
    const InputSample in = drive_.sample(t, piece_time);
    const Coefficients c = coefficients(y[4], d_lambda(piece_time, y));
    const std::complex<double> a{y[0], y[1]};
    const std::complex<double> da{dydt[0], dydt[1]};
    TraceSample s;
    s.t = t;
    s.resonator = {y[0], y[1]};
    s.electrical = {y[2], y[3], y[4]};
    s.d_lambda = d_lambda(piece_time, y);
    s.e_in = in.e_in;
    s.e_out = in.e_in - 1.0i * c.mu * a;
    s.de_out = in.de_in - 1.0i * (c.dmu_dvm * dydt[4] * a + c.mu * da);
    return s;
}

StateVector CoupledSystem::initial_state(const SolverConfig& cfg) const {
    const InputSample in = drive_.sample(0.0, 0.0);
    StateVector y{};
    y[2] = y[3] = y[4] = in.v_src;
    y[5] = rp_.gamma * in.heater_power;
    ResonatorState a{};
    if (cfg.initial_resonator) {
        a = *cfg.initial_resonator;
    } else if (cfg.initial == InitialCondition::SteadyState) {
        a = steady_state_baseband(rp_, clamp_bias(in.v_src), y[5], in.e_in, drive_.laser.offset(0.0));
    }
    y[0] = a.ax;
    y[1] = a.ay;
    return y;
}

}  // namespace detail

namespace {

using detail::CoupledSystem;
using detail::kStateSize;
using detail::StateVector;
using Vec = Eigen::Matrix<double, kStateSize, 1>;
using Mat = Eigen::Matrix<double, kStateSize, kStateSize>;

Vec to_vec(const StateVector& s) { return Eigen::Map<const Vec>(s.data()); }
StateVector to_array(const Vec& v) {
    StateVector s;
    Eigen::Map<Vec>(s.data()) = v;
    return s;
}

/// Component-wise max norm of err / (atol + rtol * max(|y|, |y_new|)); the two optical
/// components share the magnitude of the complex amplitude.
class ErrorNorm {
public:
    ErrorNorm(const SolverConfig& cfg, double mu_ref)
        : rtol_(cfg.rel_tol), atol_a_(cfg.abs_tol_field / mu_ref), atol_v_(cfg.abs_tol_voltage) {}

    double operator()(const Vec& err, const Vec& y0, const Vec& y1) const {
        const double amag = std::max(std::hypot(y0[0], y0[1]), std::hypot(y1[0], y1[1]));
        const double sa = atol_a_ + rtol_ * amag;
        double m = std::max(std::abs(err[0]), std::abs(err[1])) / sa;
        for (int i = 2; i < 5; ++i) {
            const double s = atol_v_ + rtol_ * std::max(std::abs(y0[i]), std::abs(y1[i]));
            m = std::max(m, std::abs(err[i]) / s);
        }
        const double sl = kAtolLambda + rtol_ * std::max(std::abs(y0[5]), std::abs(y1[5]));
        m = std::max(m, std::abs(err[5]) / sl);
        return std::isfinite(m) ? m : std::numeric_limits<double>::infinity();
    }

private:
    static constexpr double kAtolLambda = 1e-15;  // m
    double rtol_;
    double atol_a_;
    double atol_v_;
};

struct StepResult {
    Vec y_new;
    Vec f_new;
    double err;
};

class DormandPrince {
public:
    static constexpr double kOrder = 5.0;

    DormandPrince(const CoupledSystem& sys, SolverStats& stats) : sys_(sys), stats_(stats) {}

    void prepare(double, double, const Vec&, const Vec&) {}

    StepResult attempt(double t, double piece, double h, const Vec& y, const Vec& k1, const ErrorNorm& norm) {
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                                a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                                a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                                b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                                e6 = 22.0 / 525, e7 = -1.0 / 40;

        const Vec k2 = eval(t + h / 5, piece, y + h * (a21 * k1));
        const Vec k3 = eval(t + 3 * h / 10, piece, y + h * (a31 * k1 + a32 * k2));
        const Vec k4 = eval(t + 4 * h / 5, piece, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Vec k5 = eval(t + 8 * h / 9, piece, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Vec k6 = eval(t + h, piece, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        Vec y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        Vec k7 = eval(t + h, piece, y_new);
        const Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        return {std::move(y_new), std::move(k7), norm(err, y, y_new)};
    }

private:
    Vec eval(double t, double piece, const Vec& y) {
        ++stats_.derivative_evals;
        return to_vec(sys_.derivatives(t, piece, to_array(y)));
    }

    const CoupledSystem& sys_;
    SolverStats& stats_;
};

/// Shampine-Reichelt modified Rosenbrock pair with an exact Jacobian.
class Rosenbrock23 {
public:
    static constexpr double kOrder = 3.0;

    Rosenbrock23(const CoupledSystem& sys, SolverStats& stats) : sys_(sys), stats_(stats) {}

    void prepare(double t, double piece, const Vec& y, const Vec&) {
        detail::Jacobian jac;
        StateVector dfdt;
        sys_.jacobian(t, piece, to_array(y), jac, dfdt);
        ++stats_.jacobian_evals;
        for (std::size_t i = 0; i < kStateSize; ++i)
            for (std::size_t j = 0; j < kStateSize; ++j) jac_(i, j) = jac[i][j];
        dfdt_ = to_vec(dfdt);
    }

    StepResult attempt(double t, double piece, double h, const Vec& y, const Vec& f0, const ErrorNorm& norm) {
        static const double d = 1.0 / (2.0 + std::sqrt(2.0));
        static const double e32 = 6.0 + std::sqrt(2.0);
        const Eigen::PartialPivLU<Mat> w(Mat::Identity() - h * d * jac_);
        const Vec hdt = h * d * dfdt_;
        const Vec k1 = w.solve(f0 + hdt);
        const Vec f1 = eval(t + 0.5 * h, piece, y + 0.5 * h * k1);
        const Vec k2 = w.solve(f1 - k1) + k1;
        Vec y_new = y + h * k2;
        Vec f2 = eval(t + h, piece, y_new);
        const Vec k3 = w.solve(f2 - e32 * (k2 - f1) - 2.0 * (k1 - f0) + hdt);
        const Vec err = (h / 6.0) * (k1 - 2.0 * k2 + k3);
        return {std::move(y_new), std::move(f2), norm(err, y, y_new)};
    }

private:
    Vec eval(double t, double piece, const Vec& y) {
        ++stats_.derivative_evals;
        return to_vec(sys_.derivatives(t, piece, to_array(y)));
    }

    const CoupledSystem& sys_;
    SolverStats& stats_;
    Mat jac_ = Mat::Zero();
    Vec dfdt_ = Vec::Zero();
};

/// Four-stage Rosenbrock 4(3) pair with Shampine's coefficients; three right-hand sides per step.
class Rosenbrock34 {
public:
    static constexpr double kOrder = 4.0;

    Rosenbrock34(const CoupledSystem& sys, SolverStats& stats) : sys_(sys), stats_(stats) {}

    void prepare(double t, double piece, const Vec& y, const Vec&) {
        detail::Jacobian jac;
        StateVector dfdt;
        sys_.jacobian(t, piece, to_array(y), jac, dfdt);
        ++stats_.jacobian_evals;
        for (std::size_t i = 0; i < kStateSize; ++i)
            for (std::size_t j = 0; j < kStateSize; ++j) jac_(i, j) = jac[i][j];
        dfdt_ = to_vec(dfdt);
    }

    StepResult attempt(double t, double piece, double h, const Vec& y, const Vec& f0, const ErrorNorm& norm) {
        static constexpr double gam = 1.0 / 2;
        static constexpr double a21 = 2.0, a31 = 48.0 / 25, a32 = 6.0 / 25;
        static constexpr double c21 = -8.0, c31 = 372.0 / 25, c32 = 12.0 / 5;
        static constexpr double c41 = -112.0 / 125, c42 = -54.0 / 125, c43 = -2.0 / 5;
        static constexpr double b1 = 19.0 / 9, b2 = 1.0 / 2, b3 = 25.0 / 108, b4 = 125.0 / 108;
        static constexpr double e1 = 17.0 / 54, e2 = 7.0 / 36, e4 = 125.0 / 108;
        static constexpr double c1x = 1.0 / 2, c2x = -3.0 / 2, c3x = 121.0 / 50, c4x = 29.0 / 250;
        static constexpr double a2x = 1.0, a3x = 3.0 / 5;

        const Eigen::PartialPivLU<Mat> w(Mat::Identity() / (gam * h) - jac_);
        const Vec g1 = w.solve(f0 + (h * c1x) * dfdt_);
        const Vec f2 = eval(t + a2x * h, piece, y + a21 * g1);
        const Vec g2 = w.solve(f2 + (h * c2x) * dfdt_ + (c21 / h) * g1);
        const Vec f3 = eval(t + a3x * h, piece, y + a31 * g1 + a32 * g2);
        const Vec g3 = w.solve(f3 + (h * c3x) * dfdt_ + (c31 * g1 + c32 * g2) / h);
        const Vec g4 = w.solve(f3 + (h * c4x) * dfdt_ + (c41 * g1 + c42 * g2 + c43 * g3) / h);
        Vec y_new = y + b1 * g1 + b2 * g2 + b3 * g3 + b4 * g4;
        const Vec err = e1 * g1 + e2 * g2 + e4 * g4;
        Vec f_new = eval(t + h, piece, y_new);
        return {std::move(y_new), std::move(f_new), norm(err, y, y_new)};
    }

private:
    Vec eval(double t, double piece, const Vec& y) {
        ++stats_.derivative_evals;
        return to_vec(sys_.derivatives(t, piece, to_array(y)));
    }

    const CoupledSystem& sys_;
    SolverStats& stats_;
    Mat jac_ = Mat::Zero();
    Vec dfdt_ = Vec::Zero();
};

/// Hairer-Wanner RODAS4: stiffly accurate, L-stable Rosenbrock 4(3) pair, six stages.
class Rodas4 {
public:
    static constexpr double kOrder = 4.0;

    Rodas4(const CoupledSystem& sys, SolverStats& stats) : sys_(sys), stats_(stats) {}

    void prepare(double t, double piece, const Vec& y, const Vec&) {
        detail::Jacobian jac;
        StateVector dfdt;
        sys_.jacobian(t, piece, to_array(y), jac, dfdt);
        ++stats_.jacobian_evals;
        for (std::size_t i = 0; i < kStateSize; ++i)
            for (std::size_t j = 0; j < kStateSize; ++j) jac_(i, j) = jac[i][j];
        dfdt_ = to_vec(dfdt);
    }

    StepResult attempt(double t, double piece, double h, const Vec& y, const Vec& f0, const ErrorNorm& norm) {
        static constexpr double gam = 0.25;
        static constexpr double c2 = 0.386, c3 = 0.21, c4 = 0.63;
        static constexpr double d1 = 0.25, d2 = -0.1043, d3 = 0.1035, d4 = -0.0362;
        static constexpr double a21 = 1.544;
        static constexpr double a31 = 0.9466785280815826, a32 = 0.2557011698983284;
        static constexpr double a41 = 3.314825187068521, a42 = 2.896124015972201, a43 = 0.9986419139977817;
        static constexpr double a51 = 1.221224509226641, a52 = 6.019134481288629, a53 = 12.53708332932087,
                                a54 = -0.6878860361058950;
        static constexpr double c21 = -5.6688;
        static constexpr double c31 = -2.430093356833875, c32 = -0.2063599157091915;
        static constexpr double c41 = -0.1073529058151375, c42 = -9.594562251023355, c43 = -20.47028614809616;
        static constexpr double c51 = 7.496443313967647, c52 = -10.24680431464352, c53 = -33.99990352819905,
                                c54 = 11.70890893206160;
        static constexpr double c61 = 8.083246795921522, c62 = -7.981132988064893, c63 = -31.52159432874371,
                                c64 = 16.31930543123136, c65 = -6.058818238834054;

        const Eigen::PartialPivLU<Mat> w(Mat::Identity() / (gam * h) - jac_);
        const Vec k1 = w.solve(f0 + (h * d1) * dfdt_);
        const Vec f2 = eval(t + c2 * h, piece, y + a21 * k1);
        const Vec k2 = w.solve(f2 + (c21 / h) * k1 + (h * d2) * dfdt_);
        const Vec f3 = eval(t + c3 * h, piece, y + a31 * k1 + a32 * k2);
        const Vec k3 = w.solve(f3 + (c31 * k1 + c32 * k2) / h + (h * d3) * dfdt_);
        const Vec f4 = eval(t + c4 * h, piece, y + a41 * k1 + a42 * k2 + a43 * k3);
        const Vec k4 = w.solve(f4 + (c41 * k1 + c42 * k2 + c43 * k3) / h + (h * d4) * dfdt_);
        const Vec y5 = y + a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4;
        const Vec f5 = eval(t + h, piece, y5);
        const Vec k5 = w.solve(f5 + (c51 * k1 + c52 * k2 + c53 * k3 + c54 * k4) / h);
        const Vec y6 = y5 + k5;  // embedded third-order solution
        const Vec f6 = eval(t + h, piece, y6);
        const Vec k6 = w.solve(f6 + (c61 * k1 + c62 * k2 + c63 * k3 + c64 * k4 + c65 * k5) / h);
        Vec y_new = y6 + k6;
        Vec f_new = eval(t + h, piece, y_new);
        return {std::move(y_new), std::move(f_new), norm(k6, y, y_new)};
    }

private:
    Vec eval(double t, double piece, const Vec& y) {
        ++stats_.derivative_evals;
        return to_vec(sys_.derivatives(t, piece, to_array(y)));
    }

    const CoupledSystem& sys_;
    SolverStats& stats_;
    Mat jac_ = Mat::Zero();
    Vec dfdt_ = Vec::Zero();
};

template <class Stepper>
void run(const CoupledSystem& sys, const SolverConfig& cfg, const std::vector<double>& corners, double mu_ref,
         Trace& tr) {
    Stepper stepper(sys, tr.stats);
    const ErrorNorm norm(cfg, mu_ref);
    const double t_end = cfg.t_end;
    const double max_step = std::min(cfg.max_step, t_end);

    double t = 0.0;
    Vec y = to_vec(sys.initial_state(cfg));
    sys.check_state(to_array(y));
    auto corner_it = std::upper_bound(corners.begin(), corners.end(), 0.0);
    double bound = corner_it == corners.end() ? t_end : std::min(*corner_it, t_end);

    Vec f0 = to_vec(sys.derivatives(0.0, 0.5 * bound, to_array(y)));
    ++tr.stats.derivative_evals;
    tr.samples.push_back(sys.observe(0.0, 0.5 * bound, to_array(y), to_array(f0)));

    double h = std::min({max_step, 1e-13, bound});
    double err_prev = 1.0;
    constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 5.0, kBeta = 0.04;
    const double alpha = 1.0 / Stepper::kOrder - 0.75 * kBeta;

    int steps_since_corner = 0;
    // Step size the controller predicted after the first step of the previous piece.
    double h_restart = std::numeric_limits<double>::infinity();
    while (t < t_end) {
        const double remaining = bound - t;
        double h_try = std::min(h, max_step);
        bool clipped = false;
        if (h_try >= remaining * (1.0 - 1e-9)) {
            h_try = remaining;
            clipped = true;
        }
        const double piece = t + 0.5 * remaining;
        stepper.prepare(t, piece, y, f0);

        for (;;) {
            StepResult r = stepper.attempt(t, piece, h_try, y, f0, norm);
            if (r.err <= 1.0) {
                ++tr.stats.accepted_steps;
                ++steps_since_corner;
                const double err = std::max(r.err, 1e-10);
                const double factor =
                    std::clamp(kSafety * std::pow(err, -alpha) * std::pow(err_prev, kBeta), kMinFactor, kMaxFactor);
                err_prev = err;
                const double h_next = h_try * factor;
                if (steps_since_corner == 1) h_restart = h_next;
                h = clipped ? std::max(h_next, h) : h_next;
                t = clipped ? bound : t + h_try;
                y = std::move(r.y_new);
                f0 = std::move(r.f_new);
                sys.check_state(to_array(y));
                tr.samples.push_back(sys.observe(t, piece, to_array(y), to_array(f0)));
                break;
            }
            ++tr.stats.rejected_steps;
            if (h_try <= cfg.min_step) {
                std::ostringstream os;
                os << "required step below min_step " << cfg.min_step << " s at t=" << t << " s";
                throw Error(ErrorCode::StepSizeUnderflow, os.str());
            }
            const double factor = std::max(kMinFactor, kSafety * std::pow(r.err, -1.0 / Stepper::kOrder));
            h_try = std::max(h_try * (std::isfinite(factor) ? factor : kMinFactor), cfg.min_step);
            clipped = false;
            h = h_try;
        }

        if (t >= bound && t < t_end) {
            // Crossed a corner: inputs may jump, so refresh the FSAL derivative for the new piece.
            ++corner_it;
            steps_since_corner = 0;
            bound = corner_it == corners.end() ? t_end : std::min(*corner_it, t_end);
            const double next_piece = t + 0.5 * (bound - t);
            h = std::min(h, h_restart);
            f0 = to_vec(sys.derivatives(t, next_piece, to_array(y)));
            ++tr.stats.derivative_evals;
            TraceSample right = sys.observe(t, next_piece, to_array(y), to_array(f0));
            const TraceSample& left = tr.samples.back();
            if (right.e_out != left.e_out || right.de_out != left.de_out || right.d_lambda != left.d_lambda)
                tr.samples.push_back(right);
        }
    }
}

}  // namespace

Trace integrate_adaptive(const ResonatorParams& rp, const ElectricalParams& ep, const ThermalParams& tp,
                         const SolverConfig& cfg, const Stimulus& drive) {
    cfg.validate();
    rp.validate();
    ep.validate();
    const auto start = std::chrono::steady_clock::now();

    detail::CoupledSystem sys(rp, ep, tp, drive);
    Trace tr;
    tr.has_slopes = true;
    tr.stats.method = to_string(cfg.method);

    if (cfg.t_end <= 0.0) {
        const auto y = sys.initial_state(cfg);
        sys.check_state(y);
        tr.samples.push_back(sys.observe(0.0, 0.0, y, sys.derivatives(0.0, 0.0, y)));
        return tr;
    }

    std::vector<double> corners;
    for (double c : drive.corners()) {
        if (c > 0.0 && c < cfg.t_end) corners.push_back(c);
    }
    const double mu_ref = tau_at(rp, std::clamp(0.0, rp.v_range.first, rp.v_range.second)).mu;

    switch (cfg.method) {
        case IntegrationMethod::DormandPrince45: run<DormandPrince>(sys, cfg, corners, mu_ref, tr); break;
        case IntegrationMethod::Rosenbrock23: run<Rosenbrock23>(sys, cfg, corners, mu_ref, tr); break;
        case IntegrationMethod::Rosenbrock34: run<Rosenbrock34>(sys, cfg, corners, mu_ref, tr); break;
        case IntegrationMethod::Rodas4: run<Rodas4>(sys, cfg, corners, mu_ref, tr); break;
    }
    tr.stats.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return tr;
}

}  // namespace mdm
