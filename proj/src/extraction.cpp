#include "mdm/extraction.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <numeric>
#include <set>
#include <sstream>

namespace mdm {

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

/// Brent's minimizer on [a, b]: golden-section steps with parabolic refinement.
double brent_minimize(const std::function<double(double)>& f, double a, double b, double tol) {
    constexpr double kGolden = 0.3819660112501051;
    double x = a + kGolden * (b - a);
    double w = x, v = x;
    double fx = f(x), fw = fx, fv = fx;
    double d = 0.0, e = 0.0;
    for (int iter = 0; iter < 500; ++iter) {
        const double m = 0.5 * (a + b);
        const double tol1 = tol * std::abs(x) + 1e-300;
        const double tol2 = 2.0 * tol1;
        if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
        bool golden = true;
        if (std::abs(e) > tol1) {
            double r = (x - w) * (fx - fv);
            double q = (x - v) * (fx - fw);
            double p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if (q > 0.0) p = -p;
            q = std::abs(q);
            const double e_prev = e;
            e = d;
            if (std::abs(p) < std::abs(0.5 * q * e_prev) && p > q * (a - x) && p < q * (b - x)) {
                d = p / q;
                const double u = x + d;
                if (u - a < tol2 || b - u < tol2) d = x < m ? tol1 : -tol1;
                golden = false;
            }
        }
        if (golden) {
            e = (x < m ? b : a) - x;
            d = kGolden * e;
        }
        const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
        const double fu = f(u);
        if (fu <= fx) {
            (u < x ? b : a) = x;
            v = w; fv = fw;
            w = x; fw = fx;
            x = u; fx = fu;
        } else {
            (u < x ? a : b) = u;
            if (fu <= fw || w == x) {
                v = w; fv = fw;
                w = u; fw = fu;
            } else if (fu <= fv || v == x || v == w) {
                v = u; fv = fu;
            }
        }
    }
    return x;
}

std::size_t argmin_transmission(const TransmissionSweep& s) {
    return static_cast<std::size_t>(
        std::min_element(s.points.begin(), s.points.end(),
                         [](const SpectrumPoint& a, const SpectrumPoint& b) { return a.transmission < b.transmission; }) -
        s.points.begin());
}

/// Half-level crossing distance on each side of `imin`, interpolated; returns (left, right) wavelengths.
std::pair<double, double> half_level_crossings(const TransmissionSweep& s, std::size_t imin, double level) {
    const auto& p = s.points;
    double left = p.front().wavelength;
    double right = p.back().wavelength;
    for (std::size_t i = imin; i-- > 0;) {
        if (p[i].transmission >= level) {
            const double f = (level - p[i + 1].transmission) / (p[i].transmission - p[i + 1].transmission);
            left = p[i + 1].wavelength + f * (p[i].wavelength - p[i + 1].wavelength);
            break;
        }
    }
    for (std::size_t i = imin + 1; i < p.size(); ++i) {
        if (p[i].transmission >= level) {
            const double f = (level - p[i - 1].transmission) / (p[i].transmission - p[i - 1].transmission);
            right = p[i - 1].wavelength + f * (p[i].wavelength - p[i - 1].wavelength);
            break;
        }
    }
    return {left, right};
}

double coupling_rate_ratio(double t0, CouplingBranch branch) {
    // (1/tau_c) / (1/tau_l) for the chosen branch.
    return branch == CouplingBranch::CouplingDominant ? (1.0 + t0) / (1.0 - t0) : (1.0 - t0) / (1.0 + t0);
}

}  // namespace

void TransmissionSweep::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].transmission > 0.0) || !std::isfinite(points[i].transmission))
            throw Error(ErrorCode::BadArgument, "transmission values must be positive");
        if (i > 0 && !(points[i].wavelength > points[i - 1].wavelength))
            throw Error(ErrorCode::BadArgument, "sweep wavelengths must be strictly increasing");
    }
}

TransmissionSweep synthesize_sweep(const ResonatorParams& p, double bias, double heater_power, double lambda_start,
                                   double lambda_stop, std::size_t n) {
    TransmissionSweep s;
    s.bias = bias;
    s.heater_power = heater_power;
    s.points.reserve(n);
    const double d_lambda = p.gamma * heater_power;
    for (std::size_t i = 0; i < n; ++i) {
        const double lam = lambda_start + (lambda_stop - lambda_start) * static_cast<double>(i) /
                                              static_cast<double>(std::max<std::size_t>(n - 1, 1));
        s.points.push_back({lam, static_transmission(p, bias, d_lambda, lam)});
    }
    return s;
}

Resonance find_resonance(const TransmissionSweep& sweep) {
    const auto& p = sweep.points;
    if (p.size() < 3) throw Error(ErrorCode::NoResonanceFound, "sweep has fewer than 3 points");
    const std::size_t i = argmin_transmission(sweep);
    std::vector<double> tr(p.size());
    std::transform(p.begin(), p.end(), tr.begin(), [](const SpectrumPoint& s) { return s.transmission; });
    if (!(p[i].transmission < 0.9 * median(tr)))
        throw Error(ErrorCode::NoResonanceFound, "no transmission dip below 90% of the median level");
    if (i == 0 || i + 1 == p.size()) throw Error(ErrorCode::NoResonanceFound, "minimum sits at the sweep edge");

    const double x0 = p[i - 1].wavelength, x1 = p[i].wavelength, x2 = p[i + 1].wavelength;
    const double y0 = p[i - 1].transmission, y1 = p[i].transmission, y2 = p[i + 1].transmission;
    // Vertex of the parabola through the three points (non-uniform spacing allowed).
    const double d01 = (y1 - y0) / (x1 - x0);
    const double d12 = (y2 - y1) / (x2 - x1);
    const double curv = (d12 - d01) / (x2 - x0);
    double lam0 = x1;
    double tmin = y1;
    if (curv > 0.0) {
        const double slope1 = d01 + curv * (x1 - x0);  // derivative at x1
        lam0 = x1 - slope1 / (2.0 * curv);
        lam0 = std::clamp(lam0, x0, x2);
        tmin = y1 + slope1 * (lam0 - x1) + curv * (lam0 - x1) * (lam0 - x1);
    }
    return {lam0, std::sqrt(std::max(tmin, 0.0))};
}

namespace {

struct ScalarTauFit {
    double tau_l;
    double cost;
};

class LorentzianResidual {
public:
    LorentzianResidual(const TransmissionSweep& sweep, const Resonance& res) : sweep_(sweep), res_(res) {
        const auto& p = sweep.points;
        const double w0 = angular_frequency(res.lambda0);
        detuning_.resize(p.size());
        target_.resize(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            detuning_[i] = angular_frequency(p[i].wavelength) - w0;
            target_[i] = std::sqrt(std::max(p[i].transmission, 0.0));
        }
        imin_ = argmin_transmission(sweep);
    }

    [[nodiscard]] std::size_t size() const { return target_.size(); }

    // Least squares over tau_l with the coupling ratio pinned by t0.
    [[nodiscard]] ScalarTauFit fit(double t0, CouplingBranch branch) const {
        const double ratio = coupling_rate_ratio(t0, branch);
        // Linewidth guess: the half-depth crossing of a Lorentzian sits at |w - w0| = 1/tau.
        const auto [left, right] = half_level_crossings(sweep_, imin_, 0.5 * (1.0 + t0 * t0));
        const double half_width_m = 0.5 * std::max(right - left, 1e-15);
        const double inv_tau_guess = kTwoPi * kSpeedOfLight * half_width_m / (res_.lambda0 * res_.lambda0);
        const double lg = std::log((1.0 + ratio) / inv_tau_guess);
        auto cost = [&](double log_tau_l) { return this->cost(std::exp(log_tau_l), ratio); };
        const double best = brent_minimize(cost, lg - std::log(8.0), lg + std::log(8.0), 1e-13);
        return {std::exp(best), cost(best)};
    }

private:
    [[nodiscard]] double cost(double tl, double ratio) const {
        const double tc = tl / ratio;
        double acc = 0.0;
        for (std::size_t i = 0; i < target_.size(); ++i) {
            const double r = std::sqrt(lorentzian_transmission(detuning_[i], tc, tl)) - target_[i];
            acc += r * r;
        }
        return acc;
    }

    const TransmissionSweep& sweep_;
    Resonance res_;
    std::vector<double> detuning_;
    std::vector<double> target_;
    std::size_t imin_ = 0;
};

void check_tau_inputs(const TransmissionSweep& sweep, const Resonance& res) {
    if (!(res.t0 >= 0.0)) throw Error(ErrorCode::BadArgument, "T0 must be >= 0");
    if (res.t0 >= 0.999) throw Error(ErrorCode::DegenerateT0, "resonance depth too shallow (T0 >= 0.999)");
    if (sweep.points.size() < 3) throw Error(ErrorCode::InsufficientPoints, "sweep has fewer than 3 points");
}

TauFit finish_tau_fit(double tau_l, double t0, double cost, std::size_t n, CouplingBranch branch) {
    const double rms = std::sqrt(cost / static_cast<double>(n));
    if (!(rms <= 0.05)) {
        std::ostringstream os;
        os << "Lorentzian fit residual RMS " << rms << " exceeds 0.05";
        throw Error(ErrorCode::FitDiverged, os.str());
    }
    return {tau_l, tau_l / coupling_rate_ratio(t0, branch), rms, t0};
}

// Scalar fit only; the de-embedding loop calls this many times per sweep.
TauFit fit_tau_fixed_t0(const TransmissionSweep& sweep, const Resonance& res, CouplingBranch branch) {
    check_tau_inputs(sweep, res);
    const LorentzianResidual lr(sweep, res);
    const ScalarTauFit f = lr.fit(res.t0, branch);
    return finish_tau_fit(f.tau_l, res.t0, f.cost, lr.size(), branch);
}

}  // namespace

TauFit fit_tau(const TransmissionSweep& sweep, const Resonance& res, CouplingBranch branch) {
    check_tau_inputs(sweep, res);
    const LorentzianResidual lr(sweep, res);
    const ScalarTauFit start = lr.fit(res.t0, branch);

    // The three-point T0 carries the noise of single samples; refine it against the whole curve.
    const double span = std::max(0.05, 10.0 * std::sqrt(start.cost / static_cast<double>(lr.size())));
    const double lo = std::max(0.0, res.t0 - span);
    const double hi = std::min(0.998, res.t0 + span);
    // Offset by one so the relative tolerance stays meaningful near critical coupling.
    const double t0 = brent_minimize([&](double u) { return lr.fit(u - 1.0, branch).cost; }, lo + 1.0, hi + 1.0, 1e-9) - 1.0;
    const ScalarTauFit refined = lr.fit(t0, branch);
    if (refined.cost < start.cost) return finish_tau_fit(refined.tau_l, t0, refined.cost, lr.size(), branch);
    return finish_tau_fit(start.tau_l, res.t0, start.cost, lr.size(), branch);
}

TransmissionSweep deembed(const TransmissionSweep& sweep) {
    sweep.validate();
    const auto& p = sweep.points;
    if (p.size() < 20) throw Error(ErrorCode::InsufficientPoints, "de-embedding needs at least 20 points");

    std::vector<double> tr(p.size());
    std::transform(p.begin(), p.end(), tr.begin(), [](const SpectrumPoint& s) { return s.transmission; });
    const double med = median(tr);
    const std::size_t imin = argmin_transmission(sweep);
    if (!(tr[imin] < 0.9 * med)) throw Error(ErrorCode::NoResonanceFound, "no resonance dip to de-embed");

    const auto [left, right] = half_level_crossings(sweep, imin, 0.5 * (med + tr[imin]));
    const double fwhm = std::max(right - left, p[1].wavelength - p[0].wavelength);
    const double lam_min = p[imin].wavelength;

    std::vector<std::size_t> off;
    bool has_left = false, has_right = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::abs(p[i].wavelength - lam_min) > 5.0 * fwhm) {
            off.push_back(i);
            (p[i].wavelength < lam_min ? has_left : has_right) = true;
        }
    }
    if (off.empty()) throw Error(ErrorCode::NoResonanceFound, "sweep has no off-resonance region for the baseline");
    const int degree = (has_left && has_right) ? static_cast<int>(std::min<std::size_t>(2, off.size() - 1)) : 0;

    const double centre = 0.5 * (p.front().wavelength + p.back().wavelength);
    const double scale = 0.5 * (p.back().wavelength - p.front().wavelength);
    std::vector<double> x_off(off.size());
    for (std::size_t k = 0; k < off.size(); ++k) x_off[k] = (p[off[k]].wavelength - centre) / scale;

    std::vector<double> model(p.size(), 1.0);
    std::vector<double> baseline(p.size(), 1.0);
    TransmissionSweep out = sweep;
    for (int iter = 0; iter < 60; ++iter) {
        std::vector<double> y_off(off.size());
        for (std::size_t k = 0; k < off.size(); ++k) y_off[k] = tr[off[k]] / model[off[k]];
        const Polynomial bl = polyfit(x_off, y_off, degree);

        double change = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double b = bl((p[i].wavelength - centre) / scale);
            change = std::max(change, std::abs(b - baseline[i]) / std::abs(b));
            baseline[i] = b;
            out.points[i].transmission = tr[i] / b;
        }
        if (change < 1e-14) break;

        // Refine the resonance model so its residual tail does not bias the next baseline.
        try {
            const Resonance res = find_resonance(out);
            const TauFit tf = fit_tau_fixed_t0(out, res, CouplingBranch::CouplingDominant);
            const double w0 = angular_frequency(res.lambda0);
            for (std::size_t i = 0; i < p.size(); ++i)
                model[i] = lorentzian_transmission(angular_frequency(p[i].wavelength) - w0, tf.tau_c, tf.tau_l);
        } catch (const Error&) {
            break;
        }
    }
    return out;
}

Polynomial polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
    if (degree < 0 || x.size() != y.size()) throw Error(ErrorCode::BadArgument, "polyfit: bad arguments");
    const std::set<double> distinct(x.begin(), x.end());
    if (distinct.size() < static_cast<std::size_t>(degree + 1)) {
        std::ostringstream os;
        os << "degree-" << degree << " fit needs " << degree + 1 << " distinct points, got " << distinct.size();
        throw Error(ErrorCode::InsufficientPoints, os.str());
    }
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd a(n, degree + 1);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double pw = 1.0;
        for (int k = 0; k <= degree; ++k, pw *= x[static_cast<std::size_t>(i)]) a(i, k) = pw;
        b(i) = y[static_cast<std::size_t>(i)];
    }
    // Column scaling keeps the QR well conditioned when y spans many decades (e.g. metres).
    const Eigen::VectorXd col = a.colwise().norm().transpose();
    for (Eigen::Index k = 0; k <= degree; ++k) a.col(k) /= col(k);
    const Eigen::VectorXd c = a.colPivHouseholderQr().solve(b);
    Polynomial poly;
    for (int k = 0; k <= degree; ++k) poly.coeffs.push_back(c(k) / col(k));
    return poly;
}

VoltagePolyFit fit_voltage_polys(const std::vector<BiasPoint>& points, int lambda0_degree) {
    if (lambda0_degree < 1 || lambda0_degree > 2) throw Error(ErrorCode::BadArgument, "lambda0 degree must be 1 or 2");
    std::vector<double> v, l0, tc, tl;
    for (const auto& pt : points) {
        v.push_back(pt.v);
        l0.push_back(pt.lambda0);
        tc.push_back(pt.tau_c);
        tl.push_back(pt.tau_l);
    }
    VoltagePolyFit fit;
    fit.lambda0 = polyfit(v, l0, lambda0_degree);
    fit.tau_c = polyfit(v, tc, 2);
    fit.tau_l = polyfit(v, tl, 2);
    for (std::size_t i = 0; i < v.size(); ++i) {
        fit.lambda0_residuals.push_back(l0[i] - fit.lambda0(v[i]));
        fit.tau_c_residuals.push_back(tc[i] - fit.tau_c(v[i]));
        fit.tau_l_residuals.push_back(tl[i] - fit.tau_l(v[i]));
    }
    return fit;
}

double fit_gamma(const std::vector<std::pair<double, double>>& power_lambda0) {
    if (power_lambda0.size() < 2) throw Error(ErrorCode::InsufficientPoints, "gamma fit needs >= 2 heater powers");
    auto ref = std::find_if(power_lambda0.begin(), power_lambda0.end(), [](const auto& p) { return p.first == 0.0; });
    if (ref == power_lambda0.end())
        throw Error(ErrorCode::InsufficientPoints, "gamma fit needs a zero-power reference sweep");
    double num = 0.0, den = 0.0;
    for (const auto& [ph, lam] : power_lambda0) {
        num += ph * (lam - ref->second);
        den += ph * ph;
    }
    if (!(den > 0.0)) throw Error(ErrorCode::InsufficientPoints, "gamma fit needs a nonzero heater power");
    return num / den;
}

CvFit fit_cv(const std::vector<std::pair<double, double>>& v_cj) {
    std::set<double> distinct;
    double v_min = std::numeric_limits<double>::infinity();
    for (const auto& [v, c] : v_cj) {
        if (!(c > 0.0)) throw Error(ErrorCode::BadArgument, "capacitance values must be positive");
        distinct.insert(v);
        v_min = std::min(v_min, v);
    }
    if (distinct.size() < 3) throw Error(ErrorCode::InsufficientPoints, "C-V fit needs >= 3 distinct voltages");

    constexpr double kVbiMax = 3.0, kMjMin = 0.2, kMjMax = 0.9;
    const double vbi_min = std::max(0.3, -v_min + 1e-6);
    if (vbi_min >= kVbiMax) throw Error(ErrorCode::BadDomain, "C-V points lie below -Vbi for every allowed Vbi");

    const std::size_t n = v_cj.size();
    auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r) {
        r.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto [v, c] = v_cj[i];
            r(static_cast<Eigen::Index>(i)) = q(0) - q(2) * std::log1p(v / q(1)) - std::log(c);
        }
        return r.squaredNorm();
    };
    auto clamp_q = [&](Eigen::Vector3d q) {
        q(1) = std::clamp(q(1), vbi_min, kVbiMax);
        q(2) = std::clamp(q(2), kMjMin, kMjMax);
        return q;
    };

    // Coarse grid over (Vbi, mj) with log Cj0 solved in closed form, then Levenberg-Marquardt.
    Eigen::Vector3d best(0.0, vbi_min, kMjMin);
    double best_cost = std::numeric_limits<double>::infinity();
    Eigen::VectorXd r;
    for (int a = 0; a <= 24; ++a) {
        for (int b = 0; b <= 14; ++b) {
            const double vbi = vbi_min + (kVbiMax - vbi_min) * a / 24.0;
            const double mj = kMjMin + (kMjMax - kMjMin) * b / 14.0;
            double mean = 0.0;
            for (const auto& [v, c] : v_cj) mean += std::log(c) + mj * std::log1p(v / vbi);
            Eigen::Vector3d q(mean / static_cast<double>(n), vbi, mj);
            const double cst = residuals(q, r);
            if (cst < best_cost) {
                best_cost = cst;
                best = q;
            }
        }
    }

    Eigen::Vector3d q = best;
    double cost = best_cost;
    double lambda = 1e-3;
    for (int iter = 0; iter < 500 && cost > 1e-30; ++iter) {
        residuals(q, r);
        Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), 3);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = v_cj[i].first;
            const auto row = static_cast<Eigen::Index>(i);
            jac(row, 0) = 1.0;
            jac(row, 1) = q(2) * v / (q(1) * q(1) * (1.0 + v / q(1)));
            jac(row, 2) = -std::log1p(v / q(1));
        }
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d g = jac.transpose() * r;
        bool improved = false;
        for (int inner = 0; inner < 30; ++inner) {
            Eigen::Matrix3d a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
            const Eigen::Vector3d step = a.ldlt().solve(-g);
            const Eigen::Vector3d trial = clamp_q(q + step);
            Eigen::VectorXd rt;
            const double ct = residuals(trial, rt);
            if (ct < cost) {
                const double rel = (cost - ct) / std::max(cost, 1e-300);
                q = trial;
                cost = ct;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 4.0;
        }
        if (!improved) break;
    }
    const double rms = std::sqrt(cost / static_cast<double>(n));
    if (!(rms <= 0.05)) {
        std::ostringstream os;
        os << "C-V fit residual RMS " << rms << " (log domain) exceeds 0.05";
        throw Error(ErrorCode::FitDiverged, os.str());
    }
    return {std::exp(q(0)), q(1), q(2), rms};
}

namespace {

// Fixed parameters keep their exact initial values rather than a log/exp round trip.
ElectricalParams with_log_params(ElectricalParams ep, const Eigen::Matrix<double, 5, 1>& lp, const S11Mask& free) {
    double* fields[5] = {&ep.cj0, &ep.rs, &ep.cox, &ep.rsi, &ep.cpad};
    for (int k = 0; k < 5; ++k)
        if (free[static_cast<std::size_t>(k)]) *fields[k] = std::exp(lp(k));
    return ep;
}

}  // namespace

S11Fit fit_s11(const std::vector<S11Point>& measured, const ElectricalParams& init, const S11Mask& free,
               double v_bias) {
    init.validate();
    if (measured.size() < 50) throw Error(ErrorCode::InsufficientPoints, "S11 fit needs >= 50 frequency points");
    double f_lo = std::numeric_limits<double>::infinity(), f_hi = 0.0;
    for (const auto& m : measured) {
        f_lo = std::min(f_lo, m.f_hz);
        f_hi = std::max(f_hi, m.f_hz);
    }
    if (!(f_lo > 0.0) || f_hi < 10.0 * f_lo)
        throw Error(ErrorCode::InsufficientPoints, "S11 data must span at least one decade of positive frequency");

    using Vec5 = Eigen::Matrix<double, 5, 1>;
    const auto n = static_cast<Eigen::Index>(measured.size());
    auto residuals = [&](const Vec5& lp, Eigen::VectorXd& r) {
        const ElectricalParams ep = with_log_params(init, lp, free);
        r.resize(2 * n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& m = measured[static_cast<std::size_t>(i)];
            const auto d = s11(ep, v_bias, m.f_hz) - m.s11;
            r(2 * i) = d.real();
            r(2 * i + 1) = d.imag();
        }
        return r.squaredNorm();
    };
    auto jacobian = [&](const Vec5& lp, Eigen::MatrixXd& jac) {
        jac.resize(2 * n, 5);
        Eigen::VectorXd rp, rm;
        for (int k = 0; k < 5; ++k) {
            constexpr double h = 1e-6;
            Vec5 a = lp, b = lp;
            a(k) += h;
            b(k) -= h;
            residuals(a, rp);
            residuals(b, rm);
            jac.col(k) = (rp - rm) / (2.0 * h);
        }
    };

    std::vector<int> idx;
    for (int k = 0; k < 5; ++k)
        if (free[static_cast<std::size_t>(k)]) idx.push_back(k);
    const auto nf = static_cast<Eigen::Index>(idx.size());

    Vec5 lp;
    lp << std::log(init.cj0), std::log(init.rs), std::log(init.cox), std::log(init.rsi), std::log(init.cpad);
    Eigen::VectorXd r;
    double cost = residuals(lp, r);
    double lambda = 1e-3;
    int iterations = 0;
    bool converged = cost < 1e-28 || nf == 0;
    Eigen::MatrixXd jac;
    constexpr int kMaxIterations = 500;
    while (!converged && iterations < kMaxIterations) {
        ++iterations;
        jacobian(lp, jac);
        Eigen::MatrixXd jf(2 * n, nf);
        for (Eigen::Index c = 0; c < nf; ++c) jf.col(c) = jac.col(idx[static_cast<std::size_t>(c)]);
        const Eigen::MatrixXd jtj = jf.transpose() * jf;
        const Eigen::VectorXd g = jf.transpose() * r;
        bool accepted = false;
        for (int inner = 0; inner < 40; ++inner) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
            const Eigen::VectorXd step = a.ldlt().solve(-g);
            Vec5 trial = lp;
            for (Eigen::Index c = 0; c < nf; ++c)
                trial(idx[static_cast<std::size_t>(c)]) += std::clamp(step(c), -1.0, 1.0);
            Eigen::VectorXd rt;
            const double ct = residuals(trial, rt);
            if (ct < cost) {
                const double rel = (cost - ct) / cost;
                lp = trial;
                cost = ct;
                r = std::move(rt);
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (rel < 1e-12 || cost < 1e-28 || step.norm() < 1e-12) converged = true;
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) converged = true;  // no downhill direction left at this damping
    }

    S11Fit fit;
    fit.params = with_log_params(init, lp, free);
    fit.residual_rms = std::sqrt(cost / static_cast<double>(n));
    fit.iterations = iterations;
    jacobian(lp, jac);
    for (int k = 0; k < 5; ++k) fit.sensitivities[static_cast<std::size_t>(k)] = jac.col(k).squaredNorm();
    if (!converged || !(fit.residual_rms <= 0.05)) {
        std::ostringstream os;
        os << "S11 fit " << (converged ? "residual RMS too large" : "hit the iteration cap")
           << " (rms=" << fit.residual_rms << ", iterations=" << iterations << ")";
        throw Error(ErrorCode::FitDiverged, os.str());
    }
    return fit;
}

namespace {

BiasFitEntry fit_one(const TransmissionSweep& sweep, const ExtractionOptions& opts) {
    const TransmissionSweep s = opts.deembed ? deembed(sweep) : sweep;
    const Resonance res = find_resonance(s);
    const TauFit tf = fit_tau(s, res, opts.branch);
    return {sweep.bias, sweep.heater_power, res.lambda0, tf.t0, tf.tau_l, tf.tau_c, tf.residual_rms};
}

std::vector<BiasFitEntry> fit_all(const std::vector<TransmissionSweep>& sweeps, const ExtractionOptions& opts) {
    std::vector<std::future<BiasFitEntry>> jobs;
    jobs.reserve(sweeps.size());
    for (const auto& s : sweeps) jobs.push_back(std::async(std::launch::async, fit_one, std::cref(s), std::cref(opts)));
    std::vector<BiasFitEntry> out;
    out.reserve(sweeps.size());
    for (auto& j : jobs) out.push_back(j.get());  // rethrows the first failing fit in input order
    return out;
}

}  // namespace

ExtractionResult extract_all(const MeasurementSet& data, const ExtractionOptions& opts) {
    ExtractionResult result;
    if (data.bias_sweeps.empty()) throw Error(ErrorCode::InsufficientPoints, "no bias sweeps supplied");

    result.bias_fits = fit_all(data.bias_sweeps, opts);
    std::vector<BiasPoint> pts;
    for (const auto& e : result.bias_fits) pts.push_back({e.v, e.lambda0, e.tau_c, e.tau_l});
    result.polys = fit_voltage_polys(pts, opts.lambda0_degree);

    auto& card = result.card;
    card.lambda0_coeffs = result.polys->lambda0;
    card.tau_c_coeffs = result.polys->tau_c;
    card.tau_l_coeffs = result.polys->tau_l;
    const auto [vmin, vmax] = std::minmax_element(pts.begin(), pts.end(),
                                                  [](const BiasPoint& a, const BiasPoint& b) { return a.v < b.v; });
    card.v_range = {vmin->v, vmax->v};
    card.lambda_ref = card.lambda0_coeffs(0.0);
    card.gamma = 0.0;

    if (!data.heater_sweeps.empty()) {
        result.heater_fits = fit_all(data.heater_sweeps, opts);
        std::vector<std::pair<double, double>> pl;
        for (const auto& e : result.heater_fits) pl.emplace_back(e.heater_power, e.lambda0);
        card.gamma = fit_gamma(pl);
        result.has_gamma = true;
    } else {
        result.warnings.emplace_back("no heater sweeps supplied; model card emitted without gamma");
    }

    ElectricalParams ep = data.electrical_init;
    bool have_electrical = false;
    if (!data.cv.empty()) {
        result.cv = fit_cv(data.cv);
        ep.cj0 = result.cv->cj0;
        ep.vbi = result.cv->vbi;
        ep.mj = result.cv->mj;
        have_electrical = true;
    } else {
        result.warnings.emplace_back("no C-V data supplied; Vbi and mj taken from the initial guess");
    }
    if (!data.s11.empty()) {
        result.s11 = fit_s11(data.s11, ep, {true, true, true, true, true}, data.s11_bias);
        ep = result.s11->params;
        have_electrical = true;
    } else {
        result.warnings.emplace_back("no S11 data supplied; parasitic network not fitted");
    }
    if (have_electrical) result.electrical = ep;

    card.validate();
    return result;
}

}  // namespace mdm
