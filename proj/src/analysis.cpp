#include "mdm/analysis.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mdm {

namespace {

/// Mean power over the centre-20% window around `t`.
double window_mean(const Trace& trace, double t, double ui) {
    constexpr int kPoints = 9;
    double acc = 0.0;
    for (int i = 0; i < kPoints; ++i) acc += trace.p_out_at(t - 0.1 * ui + 0.2 * ui * i / (kPoints - 1));
    return acc / kPoints;
}

/// Number of symbols whose sampling window (up to two UI after the symbol start) lies inside the trace.
std::size_t usable_symbols(const Trace& trace, std::size_t n_symbols, const PatternTiming& timing) {
    if (trace.empty()) return 0;
    const double span = trace.t_end() - timing.t_first;
    if (span <= 2.0 * timing.ui) return 0;
    const auto fit = static_cast<std::size_t>(std::floor(span / timing.ui - 2.0)) + 1;
    return std::min(n_symbols, fit);
}

constexpr std::size_t kPhaseSteps = 128;  // sampling phases searched over [0, 2 UI)

/// Centre of the run of phases around `best` whose opening is within 2% of the best one.
std::size_t plateau_centre(const std::vector<double>& open, std::size_t best) {
    const double floor = open[best] - 0.02 * std::abs(open[best]);
    const std::size_t n = open.size();
    std::size_t left = 0, right = 0;
    while (left + 1 < n && open[(best + n - left - 1) % n] >= floor) ++left;
    while (right + 1 < n && open[(best + right + 1) % n] >= floor) ++right;
    if (left + right + 1 >= n) return best;
    return (best + n + (right - left) / 2) % n;
}

}  // namespace

std::uint64_t EyeDiagram::total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

EyeDiagram fold_eye(const Trace& trace, double ui, const EyeOptions& opts) {
    if (!(ui > 0.0) || opts.n_t == 0 || opts.n_p == 0 || opts.points_per_ui == 0)
        throw Error(ErrorCode::BadArgument, "eye folding needs positive ui and grid sizes");
    if (trace.empty() || !(trace.t_end() - trace.t_begin() > (static_cast<double>(opts.skip) + 10.0) * ui)) {
        std::ostringstream os;
        os << "trace must be longer than " << opts.skip + 10 << " unit intervals";
        throw Error(ErrorCode::TraceTooShort, os.str());
    }
    const double dt = ui / static_cast<double>(opts.points_per_ui);
    const double t0 = trace.t_begin() + static_cast<double>(opts.skip) * ui;
    const auto n = static_cast<std::size_t>(std::floor((trace.t_end() - t0) / dt + 1e-9)) + 1;
    const std::vector<double> p = trace.resample_power(t0, dt, n, opts.linear);

    EyeDiagram eye;
    eye.n_t = opts.n_t;
    eye.n_p = opts.n_p;
    eye.ui = ui;
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    eye.p_min = *lo;
    eye.p_max = *hi;
    eye.counts.assign(opts.n_t * opts.n_p, 0);
    const std::size_t period = 2 * opts.points_per_ui;
    const double span = eye.p_max - eye.p_min;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t it = (i % period) * opts.n_t / period;
        std::size_t ip = 0;
        if (span > 0.0) {
            ip = static_cast<std::size_t>((p[i] - eye.p_min) / span * static_cast<double>(opts.n_p));
            ip = std::min(ip, opts.n_p - 1);
        }
        ++eye.counts[it * opts.n_p + ip];
    }
    return eye;
}

EyeMetrics eye_metrics(const Trace& trace, const Bits& bits, const PatternTiming& timing) {
    if (!(timing.ui > 0.0)) throw Error(ErrorCode::BadArgument, "eye metrics need a positive ui");
    const double ui = timing.ui;
    const std::size_t n = usable_symbols(trace, bits.size(), timing);
    if (n < timing.skip + 4) throw Error(ErrorCode::InsufficientTransitions, "too few symbols inside the trace");
    auto bit_start = [&](std::size_t k) { return timing.t_first + static_cast<double>(k) * ui; };

    // Most open sampling phase; the class with the larger mean power is the optical high level.
    std::vector<double> opens(kPhaseSteps);
    std::vector<char> high_is_one_at(kPhaseSteps);
    std::size_t best = 0;
    std::size_t open_phases = 0;
    for (std::size_t j = 0; j < kPhaseSteps; ++j) {
        const double phase = 2.0 * ui * static_cast<double>(j) / kPhaseSteps;
        double sum1 = 0.0, sum0 = 0.0, min1 = INFINITY, max1 = -INFINITY, min0 = INFINITY, max0 = -INFINITY;
        std::size_t c1 = 0, c0 = 0;
        for (std::size_t k = timing.skip; k < n; ++k) {
            const double pw = trace.p_out_at(bit_start(k) + phase);
            if (bits[k]) {
                sum1 += pw; ++c1; min1 = std::min(min1, pw); max1 = std::max(max1, pw);
            } else {
                sum0 += pw; ++c0; min0 = std::min(min0, pw); max0 = std::max(max0, pw);
            }
        }
        if (c1 == 0 || c0 == 0) throw Error(ErrorCode::InsufficientTransitions, "pattern never changes level");
        const bool high_is_one = sum1 / static_cast<double>(c1) >= sum0 / static_cast<double>(c0);
        const double open = high_is_one ? min1 - max0 : min0 - max1;
        if (open > 0.0) ++open_phases;
        opens[j] = open;
        high_is_one_at[j] = high_is_one;
        if (open > opens[best]) best = j;
    }
    const double best_open = opens[best];
    const std::size_t centre = plateau_centre(opens, best);
    const double best_phase = 2.0 * ui * static_cast<double>(centre) / kPhaseSteps;
    const bool best_high_is_one = high_is_one_at[centre] != 0;

    EyeMetrics m;
    m.sample_phase = best_phase;
    m.eye_height = best_open;
    m.eye_width = static_cast<double>(open_phases) * 2.0 * ui / kPhaseSteps;

    double sum_hi = 0.0, sum_lo = 0.0;
    std::size_t n_hi = 0, n_lo = 0;
    for (std::size_t k = timing.skip + 1; k < n; ++k) {
        if (bits[k] != bits[k - 1]) continue;
        const double pw = window_mean(trace, bit_start(k) + best_phase, ui);
        if (static_cast<bool>(bits[k]) == best_high_is_one) {
            sum_hi += pw; ++n_hi;
        } else {
            sum_lo += pw; ++n_lo;
        }
    }
    if (n_hi == 0 || n_lo == 0) throw Error(ErrorCode::InsufficientTransitions, "no steady bits of both levels");
    m.p_high = sum_hi / static_cast<double>(n_hi);
    m.p_low = sum_lo / static_cast<double>(n_lo);
    m.extinction_ratio_db = m.p_low > 0.0 ? 10.0 * std::log10(m.p_high / m.p_low)
                                          : std::numeric_limits<double>::infinity();

    if (!(m.p_high > m.p_low)) return m;  // no swing: edge times are undefined

    const double p20 = m.p_low + 0.2 * (m.p_high - m.p_low);
    const double p80 = m.p_low + 0.8 * (m.p_high - m.p_low);
    constexpr std::size_t kDense = 512;
    double rise_sum = 0.0, fall_sum = 0.0;
    std::vector<double> tt(kDense + 1), pp(kDense + 1);
    auto crossing = [&](std::size_t i, double level) {
        const double f = (level - pp[i - 1]) / (pp[i] - pp[i - 1]);
        return tt[i - 1] + f * (tt[i] - tt[i - 1]);
    };
    for (std::size_t k = timing.skip + 2; k + 1 < n; ++k) {
        if (!(bits[k - 2] == bits[k - 1] && bits[k - 1] != bits[k] && bits[k] == bits[k + 1])) continue;
        const bool optical_rise = static_cast<bool>(bits[k]) == best_high_is_one;
        const double ta = bit_start(k - 1) + best_phase;
        for (std::size_t i = 0; i <= kDense; ++i) {
            tt[i] = ta + ui * static_cast<double>(i) / kDense;
            pp[i] = trace.p_out_at(tt[i]);
        }
        const double first_level = optical_rise ? p80 : p20;
        const double back_level = optical_rise ? p20 : p80;
        std::size_t i_first = 0;
        for (std::size_t i = 1; i <= kDense && i_first == 0; ++i)
            if (optical_rise ? pp[i] >= first_level : pp[i] <= first_level) i_first = i;
        if (i_first == 0) continue;
        std::size_t i_back = 0;
        for (std::size_t i = i_first; i >= 1 && i_back == 0; --i)
            if (optical_rise ? pp[i - 1] < back_level : pp[i - 1] > back_level) i_back = i;
        if (i_back == 0) continue;
        const double dt = crossing(i_first, first_level) - crossing(i_back, back_level);
        if (optical_rise) {
            rise_sum += dt; ++m.rise_count;
        } else {
            fall_sum += dt; ++m.fall_count;
        }
    }
    if (m.rise_count == 0 || m.fall_count == 0)
        throw Error(ErrorCode::InsufficientTransitions, "need isolated rising and falling transitions");
    m.rise_20_80 = rise_sum / static_cast<double>(m.rise_count);
    m.fall_80_20 = fall_sum / static_cast<double>(m.fall_count);
    return m;
}

Pam4Levels pam4_levels(const Trace& trace, const std::vector<int>& symbols, const PatternTiming& timing) {
    if (!(timing.ui > 0.0)) throw Error(ErrorCode::BadArgument, "PAM4 levels need a positive ui");
    const double ui = timing.ui;
    const std::size_t n = usable_symbols(trace, symbols.size(), timing);
    if (n < timing.skip + 16) throw Error(ErrorCode::InsufficientTransitions, "too few PAM4 symbols inside the trace");
    for (std::size_t k = 0; k < n; ++k)
        if (symbols[k] < 0 || symbols[k] > 3) throw Error(ErrorCode::BadArgument, "PAM4 symbols must be 0..3");
    auto sym_start = [&](std::size_t k) { return timing.t_first + static_cast<double>(k) * ui; };

    // Phase where the worst adjacent-level separation is largest.
    std::vector<double> opens(kPhaseSteps);
    std::size_t best = 0;
    for (std::size_t j = 0; j < kPhaseSteps; ++j) {
        const double phase = 2.0 * ui * static_cast<double>(j) / kPhaseSteps;
        std::array<double, 4> sum{}, lo, hi;
        std::array<std::size_t, 4> cnt{};
        lo.fill(INFINITY);
        hi.fill(-INFINITY);
        for (std::size_t k = timing.skip; k < n; ++k) {
            const auto s = static_cast<std::size_t>(symbols[k]);
            const double pw = trace.p_out_at(sym_start(k) + phase);
            sum[s] += pw;
            ++cnt[s];
            lo[s] = std::min(lo[s], pw);
            hi[s] = std::max(hi[s], pw);
        }
        std::array<std::size_t, 4> order{0, 1, 2, 3};
        if (std::any_of(cnt.begin(), cnt.end(), [](std::size_t c) { return c == 0; }))
            throw Error(ErrorCode::InsufficientTransitions, "not every PAM4 symbol occurs");
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return sum[a] / static_cast<double>(cnt[a]) < sum[b] / static_cast<double>(cnt[b]);
        });
        double open = INFINITY;
        for (std::size_t i = 1; i < 4; ++i) open = std::min(open, lo[order[i]] - hi[order[i - 1]]);
        opens[j] = open;
        if (open > opens[best]) best = j;
    }
    const double best_phase = 2.0 * ui * static_cast<double>(plateau_centre(opens, best)) / kPhaseSteps;

    Pam4Levels out;
    out.sample_phase = best_phase;
    std::array<double, 4> sum{}, sum2{};
    std::array<std::size_t, 4> cnt{};
    std::vector<double> steady;
    for (std::size_t k = timing.skip + 1; k < n; ++k) {
        if (symbols[k] != symbols[k - 1]) continue;
        const auto s = static_cast<std::size_t>(symbols[k]);
        const double pw = window_mean(trace, sym_start(k) + best_phase, ui);
        sum[s] += pw;
        sum2[s] += pw * pw;
        ++cnt[s];
        steady.push_back(pw);
    }
    for (std::size_t s = 0; s < 4; ++s) {
        if (cnt[s] == 0) throw Error(ErrorCode::InsufficientTransitions, "a PAM4 level never repeats");
        const double c = static_cast<double>(cnt[s]);
        out.mean[s] = sum[s] / c;
        out.stddev[s] = std::sqrt(std::max(sum2[s] / c - out.mean[s] * out.mean[s], 0.0));
    }
    out.sorted.assign(out.mean.begin(), out.mean.end());
    std::sort(out.sorted.begin(), out.sorted.end());
    double gmin = INFINITY, gmax = 0.0;
    for (std::size_t i = 1; i < 4; ++i) {
        const double g = out.sorted[i] - out.sorted[i - 1];
        gmin = std::min(gmin, g);
        gmax = std::max(gmax, g);
    }
    out.gap_ratio = gmin > 0.0 ? gmax / gmin : std::numeric_limits<double>::infinity();
    out.histogram_modes = count_histogram_modes(steady);
    return out;
}

std::size_t count_histogram_modes(const std::vector<double>& values, std::size_t bins, double min_fraction) {
    if (values.empty()) return 0;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (!(*hi > *lo)) return 1;
    bins = std::max<std::size_t>(bins, 3);
    std::vector<double> h(bins + 2, 0.0);  // one empty guard bin on each side
    for (double v : values) {
        auto b = static_cast<std::size_t>((v - *lo) / (*hi - *lo) * static_cast<double>(bins));
        ++h[1 + std::min(b, bins - 1)];
    }
    std::vector<double> s(bins + 2, 0.0);
    for (std::size_t i = 1; i <= bins; ++i) s[i] = 0.25 * h[i - 1] + 0.5 * h[i] + 0.25 * h[i + 1];
    const double peak = *std::max_element(s.begin(), s.end());
    // Neighbouring maxima separated by a shallow valley belong to the same mode.
    std::vector<std::size_t> modes;
    for (std::size_t i = 1; i <= bins; ++i) {
        if (!(s[i] > s[i - 1] && s[i] >= s[i + 1] && s[i] >= min_fraction * peak)) continue;
        if (!modes.empty()) {
            const std::size_t prev = modes.back();
            const double valley = *std::min_element(s.begin() + static_cast<std::ptrdiff_t>(prev),
                                                    s.begin() + static_cast<std::ptrdiff_t>(i));
            if (valley > 0.5 * std::min(s[prev], s[i])) {
                if (s[i] > s[prev]) modes.back() = i;
                continue;
            }
        }
        modes.push_back(i);
    }
    return modes.size();
}

double max_tau(const ResonatorParams& p) {
    constexpr int kGrid = 257;
    double best = 0.0;
    for (int i = 0; i < kGrid; ++i) {
        const double v = p.v_range.first + (p.v_range.second - p.v_range.first) * i / (kGrid - 1);
        best = std::max(best, tau_at(p, v).tau);
    }
    return best;
}

double fcm_duration(const ResonatorParams& p, double span_hz, double dwell_factor) {
    // Linewidth 1/(pi tau) must take dwell_factor * tau to sweep: rate <= 1 / (pi * factor * tau^2).
    const double tau = max_tau(p);
    return std::abs(span_hz) * kPi * dwell_factor * tau * tau;
}

FcmResult fcm_spectrum(const Trace& trace, const ChirpSpec& chirp, double lambda_ref, double laser_power,
                       const ResonatorParams* card, std::size_t n_points, double dwell_factor) {
    if (trace.empty()) throw Error(ErrorCode::TraceTooShort, "empty trace");
    if (!(laser_power > 0.0)) throw Error(ErrorCode::BadArgument, "laser power must be positive");
    FcmResult out;
    const double span = chirp.f_stop - chirp.f_start;
    if (span == 0.0 || !(chirp.duration > 0.0)) {
        const double t = trace.t_end();
        out.sweep.points.push_back(
            {wavelength_from_offset(chirp.f_stop, lambda_ref), std::norm(trace.e_out_at(t)) / laser_power});
        return out;
    }
    if (trace.t_end() < chirp.duration * (1.0 - 1e-12))
        throw Error(ErrorCode::TraceTooShort, "trace ends before the chirp does");

    if (card != nullptr) {
        const double tau = max_tau(*card);
        const double dwell = (1.0 / (kPi * tau)) / (std::abs(span) / chirp.duration);
        out.dwell_ratio = dwell / tau;
        if (out.dwell_ratio < dwell_factor * (1.0 - 1e-9)) {
            out.chirp_too_fast = true;
            std::ostringstream os;
            os << "chirp too fast: dwell per linewidth is " << out.dwell_ratio << " tau_max, below " << dwell_factor;
            out.warnings.push_back(os.str());
        }
    }

    n_points = std::max<std::size_t>(n_points, 2);
    out.sweep.points.reserve(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        const double t = std::max(chirp.duration * static_cast<double>(i) / static_cast<double>(n_points - 1),
                                  trace.t_begin());
        const double f = chirp.f_start + span * t / chirp.duration;
        out.sweep.points.push_back({wavelength_from_offset(f, lambda_ref), std::norm(trace.e_out_at(t)) / laser_power});
    }
    std::sort(out.sweep.points.begin(), out.sweep.points.end(),
              [](const SpectrumPoint& a, const SpectrumPoint& b) { return a.wavelength < b.wavelength; });
    auto last = std::unique(out.sweep.points.begin(), out.sweep.points.end(),
                            [](const SpectrumPoint& a, const SpectrumPoint& b) { return a.wavelength == b.wavelength; });
    out.sweep.points.erase(last, out.sweep.points.end());
    return out;
}

double SolverComparison::cost_ratio() const noexcept {
    const double ca = static_cast<double>(a.cost());
    return ca > 0.0 ? static_cast<double>(b.cost()) / ca : 0.0;
}

SolverComparison compare_solvers(const Trace& a, const Trace& b, std::size_t n_points) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::MisalignedTraces, "cannot compare an empty trace");
    const double dur = std::max(a.t_end() - a.t_begin(), b.t_end() - b.t_begin());
    const double tol = 1e-6 * dur + 1e-18;
    if (std::abs(a.t_begin() - b.t_begin()) > tol || std::abs(a.t_end() - b.t_end()) > tol) {
        std::ostringstream os;
        os << "traces cover different intervals: [" << a.t_begin() << ", " << a.t_end() << "] vs [" << b.t_begin()
           << ", " << b.t_end() << "]";
        throw Error(ErrorCode::MisalignedTraces, os.str());
    }
    SolverComparison c;
    c.a = a.stats;
    c.b = b.stats;
    const double t0 = std::max(a.t_begin(), b.t_begin());
    const double t1 = std::min(a.t_end(), b.t_end());
    n_points = t1 > t0 ? std::max<std::size_t>(n_points, 2) : 1;
    const double dt = n_points > 1 ? (t1 - t0) / static_cast<double>(n_points - 1) : 0.0;
    const std::vector<double> pa = a.resample_power(t0, dt, n_points);
    const std::vector<double> pb = b.resample_power(t0, dt, n_points);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_points; ++i) {
        const double d = pa[i] - pb[i];
        acc += d * d;
        c.max_diff = std::max(c.max_diff, std::abs(d));
        c.peak_power = std::max({c.peak_power, pa[i], pb[i]});
    }
    c.rms_power_diff = std::sqrt(acc / static_cast<double>(n_points));
    c.grid_points = n_points;
    return c;
}

}  // namespace mdm
