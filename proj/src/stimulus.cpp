#include "mdm/stimulus.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mdm {

namespace {

std::vector<int> prbs_taps(int order) {
    switch (order) {
        case 7: return {7, 6};
        case 9: return {9, 5};
        case 13: return {13, 12, 2, 1};
        case 15: return {15, 14};
        case 31: return {31, 28};
        default: break;
    }
    throw Error(ErrorCode::BadArgument, "unsupported PRBS order " + std::to_string(order));
}

void check_offset(double f) {
    if (!(std::abs(f) <= kMaxBasebandOffset)) {
        std::ostringstream os;
        os << "baseband offset " << f * 1e-9 << " GHz exceeds " << kMaxBasebandOffset * 1e-9 << " GHz";
        throw Error(ErrorCode::OffsetTooLarge, os.str());
    }
}

}  // namespace

Bits prbs_bits(int order, std::uint64_t seed, std::size_t n) {
    const auto taps = prbs_taps(order);
    const std::uint64_t mask = (std::uint64_t{1} << order) - 1;
    std::uint64_t state = seed & mask;
    if (state == 0) throw Error(ErrorCode::BadSeed, "PRBS seed must have a nonzero low-order bit");
    Bits out(n);
    for (auto& b : out) {
        std::uint64_t fb = 0;
        for (int t : taps) fb ^= (state >> (t - 1)) & 1u;
        state = ((state << 1) | fb) & mask;
        b = static_cast<std::uint8_t>(fb);
    }
    return out;
}

PiecewiseLinear::PiecewiseLinear(double constant) : times_{0.0}, values_{constant} {}

PiecewiseLinear::PiecewiseLinear(std::vector<double> times, std::vector<double> values)
    : times_(std::move(times)), values_(std::move(values)) {
    if (times_.empty() || times_.size() != values_.size())
        throw Error(ErrorCode::BadArgument, "piecewise-linear knots must be non-empty and paired");
    if (!std::is_sorted(times_.begin(), times_.end()))
        throw Error(ErrorCode::BadArgument, "piecewise-linear knot times must be sorted");
}

std::size_t PiecewiseLinear::segment(double t) const noexcept {
    // Index i such that times_[i] <= t < times_[i+1].
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
}

double PiecewiseLinear::operator()(double t) const noexcept {
    if (t <= times_.front()) return values_.front();
    if (t >= times_.back()) return values_.back();
    const std::size_t i = segment(t);
    const double span = times_[i + 1] - times_[i];
    if (span <= 0.0) return values_[i + 1];
    const double frac = (t - times_[i]) / span;
    return values_[i] + frac * (values_[i + 1] - values_[i]);
}

double PiecewiseLinear::slope(double piece_time) const noexcept {
    if (piece_time < times_.front() || piece_time >= times_.back()) return 0.0;
    const std::size_t i = segment(piece_time);
    const double span = times_[i + 1] - times_[i];
    return span > 0.0 ? (values_[i + 1] - values_[i]) / span : 0.0;
}

double PiecewiseLinear::max_abs_slope() const noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < times_.size(); ++i) {
        const double span = times_[i + 1] - times_[i];
        if (span > 0.0) m = std::max(m, std::abs(values_[i + 1] - values_[i]) / span);
    }
    return m;
}

PiecewiseConstant::PiecewiseConstant(std::vector<double> start_times, std::vector<double> values)
    : times_(std::move(start_times)), values_(std::move(values)) {
    if (times_.empty() || times_.size() != values_.size())
        throw Error(ErrorCode::BadArgument, "piecewise-constant steps must be non-empty and paired");
    if (!std::is_sorted(times_.begin(), times_.end()))
        throw Error(ErrorCode::BadArgument, "piecewise-constant step times must be sorted");
}

double PiecewiseConstant::operator()(double piece_time) const noexcept {
    auto it = std::upper_bound(times_.begin(), times_.end(), piece_time);
    return it == times_.begin() ? values_.front() : values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

namespace {

PiecewiseLinear levels_waveform(const std::vector<double>& levels, double ui, double t_edge) {
    if (!(ui > 0.0)) throw Error(ErrorCode::BadArgument, "unit interval must be positive");
    if (!(t_edge >= 0.0)) throw Error(ErrorCode::BadArgument, "edge time must be >= 0");
    if (t_edge >= ui) throw Error(ErrorCode::EdgeTooSlow, "edge time must be shorter than the unit interval");
    if (levels.empty()) return PiecewiseLinear(0.0);

    std::vector<double> t{0.0};
    std::vector<double> v{levels.front()};
    const double half = 0.5 * t_edge;
    for (std::size_t k = 1; k < levels.size(); ++k) {
        if (levels[k] == levels[k - 1]) continue;
        const double tb = static_cast<double>(k) * ui;
        t.push_back(tb - half);
        v.push_back(levels[k - 1]);
        t.push_back(tb + half);
        v.push_back(levels[k]);
    }
    t.push_back(static_cast<double>(levels.size()) * ui);
    v.push_back(levels.back());
    return PiecewiseLinear(std::move(t), std::move(v));
}

}  // namespace

PiecewiseLinear nrz_waveform(const Bits& bits, double ui, double v_low, double v_high, double t_edge) {
    std::vector<double> levels;
    levels.reserve(bits.size());
    for (auto b : bits) levels.push_back(b ? v_high : v_low);
    return levels_waveform(levels, ui, t_edge);
}

std::array<double, 4> default_pam4_levels(double vpp, double v_bias) {
    const double lo = v_bias - 0.5 * vpp;
    const double step = vpp / 3.0;
    return {lo, lo + step, lo + 2.0 * step, lo + vpp};
}

std::vector<int> pam4_symbols(const Bits& bits, bool gray) {
    static constexpr int kGray[4] = {0, 1, 3, 2};  // index = 2*b0 + b1
    std::vector<int> out;
    out.reserve(bits.size() / 2);
    for (std::size_t i = 0; i + 1 < bits.size(); i += 2) {
        const int code = 2 * (bits[i] & 1) + (bits[i + 1] & 1);
        out.push_back(gray ? kGray[code] : code);
    }
    return out;
}

PiecewiseLinear pam4_waveform(const Bits& bits, double ui, const std::array<double, 4>& levels, double t_edge,
                              bool gray) {
    for (int i = 0; i < 3; ++i) {
        if (!(levels[i] < levels[i + 1])) throw Error(ErrorCode::BadArgument, "PAM4 levels must increase");
    }
    std::vector<double> v;
    for (int s : pam4_symbols(bits, gray)) v.push_back(levels[static_cast<std::size_t>(s)]);
    return levels_waveform(v, ui, t_edge);
}

LaserSource LaserSource::cw(double power_w, double lambda_laser, double lambda_ref) {
    return cw_offset(power_w, offset_frequency(lambda_laser, lambda_ref));
}

LaserSource LaserSource::cw_offset(double power_w, double offset_hz) {
    if (!(power_w >= 0.0)) throw Error(ErrorCode::BadArgument, "laser power must be >= 0");
    check_offset(offset_hz);
    LaserSource s;
    s.kind_ = Kind::Cw;
    s.power_ = power_w;
    s.f_start_ = s.f_stop_ = offset_hz;
    return s;
}

LaserSource LaserSource::chirp(double power_w, double f_start, double f_stop, double duration) {
    if (!(power_w >= 0.0)) throw Error(ErrorCode::BadArgument, "laser power must be >= 0");
    if (!(duration > 0.0)) throw Error(ErrorCode::BadArgument, "chirp duration must be positive");
    check_offset(f_start);
    check_offset(f_stop);
    LaserSource s;
    s.kind_ = Kind::Chirp;
    s.power_ = power_w;
    s.f_start_ = f_start;
    s.f_stop_ = f_stop;
    s.duration_ = duration;
    return s;
}

LaserSource LaserSource::piecewise(std::vector<double> start_times, std::vector<std::complex<double>> fields) {
    if (start_times.empty() || start_times.size() != fields.size())
        throw Error(ErrorCode::BadArgument, "piecewise laser needs paired, non-empty segments");
    if (!std::is_sorted(start_times.begin(), start_times.end()))
        throw Error(ErrorCode::BadArgument, "piecewise laser times must be sorted");
    LaserSource s;
    s.kind_ = Kind::Piecewise;
    for (const auto& f : fields) s.power_ = std::max(s.power_, std::norm(f));
    s.piece_times_ = std::move(start_times);
    s.piece_fields_ = std::move(fields);
    return s;
}

double LaserSource::offset(double t) const noexcept {
    if (kind_ != Kind::Chirp) return f_start_;
    if (t <= 0.0) return f_start_;
    if (t >= duration_) return f_stop_;
    return f_start_ + (f_stop_ - f_start_) * t / duration_;
}

double LaserSource::phase(double t) const noexcept {
    if (kind_ == Kind::Cw) return kTwoPi * f_start_ * t;
    if (kind_ == Kind::Piecewise) return 0.0;
    if (t <= 0.0) return kTwoPi * f_start_ * t;
    if (t <= duration_) return kTwoPi * (f_start_ * t + 0.5 * (f_stop_ - f_start_) * t * t / duration_);
    return kTwoPi * (0.5 * (f_start_ + f_stop_) * duration_ + f_stop_ * (t - duration_));
}

std::complex<double> LaserSource::field(double t, double piece_time) const noexcept {
    if (kind_ == Kind::Piecewise) {
        auto it = std::upper_bound(piece_times_.begin(), piece_times_.end(), piece_time);
        return it == piece_times_.begin() ? piece_fields_.front()
                                          : piece_fields_[static_cast<std::size_t>(it - piece_times_.begin()) - 1];
    }
    return std::polar(std::sqrt(power_), phase(t));
}

std::complex<double> LaserSource::field_rate(double t, double piece_time) const noexcept {
    if (kind_ == Kind::Piecewise) return {0.0, 0.0};
    using namespace std::complex_literals;
    return 1.0i * kTwoPi * offset(t) * field(t, piece_time);
}

std::vector<double> LaserSource::corners() const {
    if (kind_ == Kind::Chirp) return {0.0, duration_};
    if (kind_ == Kind::Piecewise) return piece_times_;
    return {};
}

InputSample Stimulus::sample(double t, double piece_time) const noexcept {
    return {voltage_drive(t), voltage_drive.slope(piece_time), laser.field(t, piece_time),
            laser.field_rate(t, piece_time), heater_power(piece_time)};
}

std::vector<double> Stimulus::corners() const {
    std::vector<double> c = voltage_drive.times();
    const auto lc = laser.corners();
    c.insert(c.end(), lc.begin(), lc.end());
    c.insert(c.end(), heater_power.times().begin(), heater_power.times().end());
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

}  // namespace mdm
