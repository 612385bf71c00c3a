#include "mdm/trace.hpp"

#include "mdm/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace mdm {

std::size_t Trace::locate(double t) const {
    // Index i with samples[i].t <= t < samples[i+1].t, clamped to a valid interval.
    auto it = std::upper_bound(samples.begin(), samples.end(), t,
                               [](double x, const TraceSample& s) { return x < s.t; });
    std::size_t i = it == samples.begin() ? 0 : static_cast<std::size_t>(it - samples.begin()) - 1;
    return std::min(i, samples.size() - 2);
}

FieldSample Trace::e_out_at(double t) const {
    if (samples.empty()) throw Error(ErrorCode::TraceTooShort, "empty trace");
    if (samples.size() == 1 || t <= samples.front().t) return samples.front().e_out;
    if (t >= samples.back().t) return samples.back().e_out;
    const std::size_t i = locate(t);
    const auto& a = samples[i];
    const auto& b = samples[i + 1];
    const double h = b.t - a.t;
    if (h <= 0.0) return b.e_out;
    const double s = (t - a.t) / h;
    if (!has_slopes) return a.e_out + s * (b.e_out - a.e_out);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1;
    const double h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2;
    const double h11 = s3 - s2;
    return h00 * a.e_out + h10 * h * a.de_out + h01 * b.e_out + h11 * h * b.de_out;
}

double Trace::p_out_linear(double t) const {
    if (samples.empty()) throw Error(ErrorCode::TraceTooShort, "empty trace");
    if (samples.size() == 1 || t <= samples.front().t) return samples.front().p_out();
    if (t >= samples.back().t) return samples.back().p_out();
    const std::size_t i = locate(t);
    const auto& a = samples[i];
    const auto& b = samples[i + 1];
    const double h = b.t - a.t;
    if (h <= 0.0) return b.p_out();
    const double s = (t - a.t) / h;
    return a.p_out() + s * (b.p_out() - a.p_out());
}

double Trace::v_m_at(double t) const {
    if (samples.empty()) throw Error(ErrorCode::TraceTooShort, "empty trace");
    if (samples.size() == 1 || t <= samples.front().t) return samples.front().electrical.v_m;
    if (t >= samples.back().t) return samples.back().electrical.v_m;
    const std::size_t i = locate(t);
    const auto& a = samples[i];
    const auto& b = samples[i + 1];
    const double h = b.t - a.t;
    if (h <= 0.0) return b.electrical.v_m;
    return a.electrical.v_m + (t - a.t) / h * (b.electrical.v_m - a.electrical.v_m);
}

std::vector<double> Trace::resample_power(double t0, double dt, std::size_t n, bool linear) const {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        out[k] = linear ? p_out_linear(t) : p_out_at(t);
    }
    return out;
}

double Trace::peak_power() const noexcept {
    double m = 0.0;
    for (const auto& s : samples) m = std::max(m, s.p_out());
    return m;
}

void Trace::write_csv(std::ostream& os, std::size_t decimation) const {
    decimation = std::max<std::size_t>(decimation, 1);
    os << "t_s,v_m_V,ein_x,ein_y,eout_x,eout_y,p_out_W,dlambda_m\n";
    char buf[512];
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i % decimation != 0 && i + 1 != samples.size()) continue;
        const auto& s = samples[i];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, s.electrical.v_m,
                      s.e_in.real(), s.e_in.imag(), s.e_out.real(), s.e_out.imag(), s.p_out(), s.d_lambda);
        os << buf;
    }
}

Trace Trace::read_csv(std::istream& is, const std::string& source_name) {
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorCode::Schema, source_name + ": missing header");
    if (line.rfind("t_s,v_m_V,ein_x,ein_y,eout_x,eout_y,p_out_W", 0) != 0)
        throw Error(ErrorCode::Schema, source_name + ": unexpected trace header '" + line + "'");
    Trace tr;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        double v[8] = {};
        std::size_t k = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (k < 8 && p <= end) {
            const char* comma = std::find(p, end, ',');
            auto [ptr, ec] = std::from_chars(p, comma, v[k]);
            if (ec != std::errc() || ptr != comma) break;
            ++k;
            p = comma + 1;
        }
        if (k < 7) {
            std::ostringstream os;
            os << source_name << ": malformed row " << row;
            throw Error(ErrorCode::Schema, os.str());
        }
        TraceSample s;
        s.t = v[0];
        s.electrical.v_m = v[1];
        s.e_in = {v[2], v[3]};
        s.e_out = {v[4], v[5]};
        s.d_lambda = k > 7 ? v[7] : 0.0;
        if (!tr.samples.empty() && s.t < tr.samples.back().t) {
            std::ostringstream os;
            os << source_name << ": time decreases at row " << row;
            throw Error(ErrorCode::Schema, os.str());
        }
        tr.samples.push_back(s);
    }
    return tr;
}

}  // namespace mdm
