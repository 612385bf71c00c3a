#include "mdm/cli.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace mdm::cli {

namespace {

/// Card resonator with the analytic frame moved to `lambda_ref`.
ResonatorParams reframed(const io::ModelCard& card, double lambda_ref) {
    ResonatorParams rp = card.resonator;
    rp.lambda_ref = lambda_ref;
    rp.validate();
    return rp;
}

IntegrationMethod parse_method(const std::string& m) {
    if (m == "dp45") return IntegrationMethod::DormandPrince45;
    if (m == "rosenbrock23") return IntegrationMethod::Rosenbrock23;
    if (m == "rosenbrock34") return IntegrationMethod::Rosenbrock34;
    if (m == "rodas4") return IntegrationMethod::Rodas4;
    throw Error(ErrorCode::BadArgument, "unknown integration method '" + m + "'");
}

}  // namespace

SolverConfig solver_config_for(const io::Scenario& s, const io::BuiltScenario& b) {
    SolverConfig cfg;
    cfg.method = parse_method(s.method);
    cfg.rel_tol = s.rel_tol;
    cfg.t_end = b.t_end;
    if (s.max_step_ui > 0.0) cfg.max_step = s.max_step_ui * b.ui;
    return cfg;
}

SimulationRun simulate(const io::Scenario& s, const io::ModelCard& card) {
    SimulationRun run;
    run.built = io::build_scenario(s, card);
    const ResonatorParams rp = reframed(card, run.built.lambda_ref);
    run.trace = integrate_adaptive(rp, card.electrical_or_default(), card.thermal_or_default(),
                                   solver_config_for(s, run.built), run.built.stimulus);
    return run;
}

FcmSweepSpec fcm_spec_from_json(const io::Json& j, const std::string& source) {
    auto fail = [&](const std::string& field, const std::string& what) {
        throw Error(ErrorCode::Schema, source + "." + field + ": " + what);
    };
    if (!j.is_object()) throw Error(ErrorCode::Schema, source + ": expected an object");
    static const std::vector<std::string> known{"schema_version", "bias_V",      "heater_mW", "heater_bias_V",
                                                "f_start_GHz",    "f_stop_GHz",  "dwell_factor", "duration_s",
                                                "power_mW",       "lambda_ref_nm", "points",  "method",
                                                "rel_tol"};
    for (const auto& item : j.items())
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) fail(item.key(), "unknown field");
    if (j.contains("schema_version") && j.at("schema_version") != io::kSchemaVersion)
        fail("schema_version", "unsupported version");
    auto num = [&](const char* key, double fallback) {
        if (!j.contains(key)) return fallback;
        if (!j.at(key).is_number()) fail(key, "expected a number");
        return j.at(key).get<double>();
    };
    auto list = [&](const char* key, double scale) {
        std::vector<double> out;
        if (!j.contains(key)) return out;
        const auto& a = j.at(key);
        if (!a.is_array()) fail(key, "expected an array of numbers");
        for (const auto& v : a) {
            if (!v.is_number()) fail(key, "expected an array of numbers");
            out.push_back(v.get<double>() * scale);
        }
        return out;
    };
    FcmSweepSpec s;
    const bool has_bias = j.contains("bias_V");
    const bool has_heater = j.contains("heater_mW");
    if (has_bias == has_heater) fail("bias_V", "give exactly one of bias_V or heater_mW");
    s.biases = list("bias_V", 1.0);
    s.heater_powers = list("heater_mW", 1e-3);
    if (has_bias && s.biases.empty()) fail("bias_V", "list is empty");
    if (has_heater && s.heater_powers.empty()) fail("heater_mW", "list is empty");
    for (double p : s.heater_powers)
        if (p < 0.0) fail("heater_mW", "heater powers must be >= 0");
    s.heater_bias = num("heater_bias_V", s.heater_bias);
    s.f_start = num("f_start_GHz", s.f_start * 1e-9) * 1e9;
    s.f_stop = num("f_stop_GHz", s.f_stop * 1e-9) * 1e9;
    if (std::abs(s.f_start) > kMaxBasebandOffset || std::abs(s.f_stop) > kMaxBasebandOffset)
        fail("f_start_GHz", "chirp offsets must stay within +/-100 GHz of lambda_ref");
    s.dwell_factor = num("dwell_factor", s.dwell_factor);
    if (!(s.dwell_factor > 0.0)) fail("dwell_factor", "must be positive");
    if (j.contains("duration_s")) {
        s.duration = num("duration_s", 0.0);
        if (!(*s.duration > 0.0)) fail("duration_s", "must be positive");
    }
    s.laser_power = num("power_mW", s.laser_power * 1e3) * 1e-3;
    if (!(s.laser_power > 0.0)) fail("power_mW", "must be positive");
    if (j.contains("lambda_ref_nm")) s.lambda_ref = num("lambda_ref_nm", 0.0) * 1e-9;
    const double pts = num("points", static_cast<double>(s.points));
    if (!(pts >= 2.0) || pts != std::floor(pts)) fail("points", "expected an integer >= 2");
    s.points = static_cast<std::size_t>(pts);
    if (j.contains("method")) {
        if (!j.at("method").is_string()) fail("method", "expected a string");
        s.method = j.at("method").get<std::string>();
        if (s.method != "dp45" && s.method != "rosenbrock23" && s.method != "rosenbrock34" && s.method != "rodas4") fail("method", "expected dp45, rosenbrock23, rosenbrock34 or rodas4");
    }
    s.rel_tol = num("rel_tol", s.rel_tol);
    if (!(s.rel_tol > 0.0 && s.rel_tol < 1.0)) fail("rel_tol", "must lie in (0, 1)");
    return s;
}

FcmPoint run_fcm_point(const io::ModelCard& card, const FcmSweepSpec& spec, double bias, double heater_power) {
    const double lambda_ref = spec.lambda_ref.value_or(card.resonator.lambda_ref);
    const ResonatorParams rp = reframed(card, lambda_ref);
    const double span = spec.f_stop - spec.f_start;
    const double duration = spec.duration.value_or(fcm_duration(rp, span, spec.dwell_factor));

    Stimulus st;
    st.voltage_drive = PiecewiseLinear(bias);
    st.laser = span == 0.0 ? LaserSource::cw_offset(spec.laser_power, spec.f_start)
                           : LaserSource::chirp(spec.laser_power, spec.f_start, spec.f_stop, duration);
    st.heater_power = PiecewiseConstant(heater_power);

    SolverConfig cfg;
    cfg.method = parse_method(spec.method);
    cfg.rel_tol = spec.rel_tol;
    cfg.t_end = duration;
    FcmPoint pt;
    pt.bias = bias;
    pt.heater_power = heater_power;
    const Trace tr = integrate_adaptive(rp, card.electrical_or_default(), card.thermal_or_default(), cfg, st);
    pt.stats = tr.stats;
    pt.result = fcm_spectrum(tr, {spec.f_start, spec.f_stop, duration}, lambda_ref, spec.laser_power, &rp,
                             spec.points, spec.dwell_factor);
    pt.result.sweep.bias = bias;
    pt.result.sweep.heater_power = heater_power;
    return pt;
}

BenchResult bench(const io::Scenario& s, const io::ModelCard& card, const BenchOptions& opts) {
    const io::BuiltScenario b = io::build_scenario(s, card);
    const ResonatorParams rp = reframed(card, b.lambda_ref);
    const ElectricalParams ep = card.electrical_or_default();
    const ThermalParams tp = card.thermal_or_default();
    const SolverConfig cfg = solver_config_for(s, b);
    const Trace adaptive = integrate_adaptive(rp, ep, tp, cfg, b.stimulus);

    Trace other;
    if (opts.compare_adaptive_to_itself) {
        other = integrate_adaptive(rp, ep, tp, cfg, b.stimulus);
    } else {
        BaselineConfig bc;
        bc.dt = opts.baseline_dt;
        bc.t_end = b.t_end;
        bc.nonlinear_cj = opts.baseline_nonlinear_cj;
        other = integrate_fixed_baseline(rp, ep, tp, bc, b.stimulus);
    }
    // 64 comparison points per unit interval.
    const auto grid = static_cast<std::size_t>(std::ceil(b.t_end / b.ui * 64.0)) + 1;

    BenchResult r;
    r.adaptive_vs_baseline = compare_solvers(adaptive, other, grid);
    r.step_ratio = r.adaptive_vs_baseline.cost_ratio();
    if (opts.reference_dt > 0.0 && b.t_end > 0.0) {
        BaselineConfig rc;
        rc.dt = opts.reference_dt;
        rc.t_end = b.t_end;
        rc.nonlinear_cj = true;
        rc.record_stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(100e-15 / rc.dt)));
        const Trace reference = integrate_fixed_baseline(rp, ep, tp, rc, b.stimulus);
        r.adaptive_vs_reference = compare_solvers(adaptive, reference, grid);
        r.baseline_vs_reference = compare_solvers(other, reference, grid);
    }
    return r;
}

namespace {

io::Json stats_json(const SolverStats& s) {
    return io::Json{{"method", s.method},
                    {"accepted_steps", s.accepted_steps},
                    {"rejected_steps", s.rejected_steps},
                    {"derivative_evals", s.derivative_evals},
                    {"jacobian_evals", s.jacobian_evals},
                    {"ticks", s.ticks},
                    {"cost", s.cost()},
                    {"wall_clock_s", s.wall_clock_s}};
}

io::Json accuracy_json(const SolverComparison& c) {
    return io::Json{{"rms_power_diff_W", c.rms_power_diff},
                    {"max_diff_W", c.max_diff},
                    {"peak_power_W", c.peak_power},
                    {"rms_over_peak", c.peak_power > 0.0 ? c.rms_power_diff / c.peak_power : 0.0},
                    {"grid_points", c.grid_points}};
}

}  // namespace

io::Json to_json(const BenchResult& r) {
    io::Json j{{"schema_version", io::kSchemaVersion},
               {"adaptive", stats_json(r.adaptive_vs_baseline.a)},
               {"baseline", stats_json(r.adaptive_vs_baseline.b)},
               {"step_ratio", r.step_ratio},
               {"adaptive_vs_baseline", accuracy_json(r.adaptive_vs_baseline)}};
    if (r.adaptive_vs_reference) {
        j["reference"] = stats_json(r.adaptive_vs_reference->b);
        j["adaptive_vs_reference"] = accuracy_json(*r.adaptive_vs_reference);
        j["baseline_vs_reference"] = accuracy_json(*r.baseline_vs_reference);
    }
    return j;
}

namespace {

struct CommonOptions {
    std::string config;
    std::string model;
    std::string out_dir = "out";
    unsigned jobs = 1;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
};

io::ModelCard load_card(const std::string& path) {
    if (path.empty()) throw Error(ErrorCode::BadArgument, "--model is required");
    return io::model_card_from_json(io::read_json_file(path), path);
}

io::Scenario load_scenario(const CommonOptions& o) {
    if (o.config.empty()) throw Error(ErrorCode::BadArgument, "--config is required");
    io::Scenario s = io::scenario_from_json(io::read_json_file(o.config), o.config);
    if (o.seed) s.seed = *o.seed;
    return s;
}

std::string dump(const io::Json& j) { return j.dump(2) + "\n"; }

std::filesystem::path out_path(const CommonOptions& o, const std::string& name) {
    return std::filesystem::path(o.out_dir) / name;
}

/// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure in index order.
template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned count = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < count; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

io::Json eye_metrics_json(const EyeMetrics& m) {
    return io::Json{{"extinction_ratio_dB", m.extinction_ratio_db},
                    {"eye_height_W", m.eye_height},
                    {"eye_width_s", m.eye_width},
                    {"rise_20_80_s", m.rise_20_80},
                    {"fall_80_20_s", m.fall_80_20},
                    {"p_high_W", m.p_high},
                    {"p_low_W", m.p_low},
                    {"sample_phase_s", m.sample_phase},
                    {"rise_count", m.rise_count},
                    {"fall_count", m.fall_count}};
}

io::Json pam4_json(const Pam4Levels& l) {
    return io::Json{{"level_mean_W", l.mean},
                    {"level_stddev_W", l.stddev},
                    {"sorted_levels_W", l.sorted},
                    {"gap_ratio", l.gap_ratio},
                    {"histogram_modes", l.histogram_modes},
                    {"sample_phase_s", l.sample_phase}};
}

/// Pattern metrics for a trace of `s`; failures become warnings.
io::Json pattern_metrics(const Trace& tr, const io::Scenario& s, const Bits& bits, const std::vector<int>& symbols,
                         double ui, std::vector<std::string>& warnings) {
    const PatternTiming timing{ui, 0.0, s.eye_skip};
    try {
        if (s.format == "pam4") return pam4_json(pam4_levels(tr, symbols, timing));
        return eye_metrics_json(eye_metrics(tr, bits, timing));
    } catch (const Error& e) {
        warnings.emplace_back(std::string("pattern metrics skipped: ") + e.what());
        return nullptr;
    }
}

int cmd_simulate(const CommonOptions& o, std::size_t decimation, std::ostream& out, std::ostream& err) {
    const io::Scenario s = load_scenario(o);
    const io::ModelCard card = load_card(o.model);
    const io::BuiltScenario b = io::build_scenario(s, card);
    reframed(card, b.lambda_ref);
    if (o.dry_run) {
        out << "simulate: inputs valid (" << b.t_end << " s, " << s.format << ")\n";
        return kOk;
    }
    std::vector<std::string> warnings;
    if (b.t_end <= 0.0) {
        warnings.emplace_back("t_end is 0; the trace holds only the initial sample");
        err << "warning: " << warnings.back() << "\n";
    }
    const SimulationRun run = simulate(s, card);
    const Trace& tr = run.trace;

    std::ostringstream csv;
    tr.write_csv(csv, decimation);
    io::write_file_atomic(out_path(o, "trace.csv"), csv.str());

    double sum_p = 0.0;
    for (const auto& smp : tr.samples) sum_p += smp.p_out();
    const auto& last = tr.samples.back();
    io::Json summary{{"schema_version", io::kSchemaVersion},
                     {"command", "simulate"},
                     {"scenario", io::to_json(s)},
                     {"stats", stats_json(tr.stats)},
                     {"samples", tr.size()},
                     {"final", {{"t_s", last.t},
                                {"eout_x", last.e_out.real()},
                                {"eout_y", last.e_out.imag()},
                                {"p_out_W", last.p_out()},
                                {"v_m_V", last.electrical.v_m}}},
                     {"checksum_sum_p_out", sum_p}};
    if (b.t_end > 0.0 && b.t_end >= static_cast<double>(s.eye_skip + 10) * b.ui)
        summary["metrics"] = pattern_metrics(tr, s, b.bits, b.symbols, b.ui, warnings);
    summary["warnings"] = warnings;
    io::write_file_atomic(out_path(o, "summary.json"), dump(summary));
    out << "simulate: " << tr.size() << " samples, " << tr.stats.cost() << " evaluations -> " << o.out_dir << "\n";
    return kOk;
}

std::string spectrum_name(const FcmPoint& p, bool heater) {
    char buf[64];
    if (heater)
        std::snprintf(buf, sizeof buf, "spectrum_heater_%.4fmW.csv", p.heater_power * 1e3);
    else
        std::snprintf(buf, sizeof buf, "spectrum_bias_%+.4fV.csv", p.bias);
    return buf;
}

int cmd_sweep_fcm(const CommonOptions& o, std::ostream& out, std::ostream& err) {
    if (o.config.empty()) throw Error(ErrorCode::BadArgument, "--config is required");
    const FcmSweepSpec spec = fcm_spec_from_json(io::read_json_file(o.config), o.config);
    const io::ModelCard card = load_card(o.model);
    const bool heater = spec.biases.empty();
    const std::size_t n = heater ? spec.heater_powers.size() : spec.biases.size();
    const double lambda_ref = spec.lambda_ref.value_or(card.resonator.lambda_ref);
    const ResonatorParams rp = reframed(card, lambda_ref);
    for (double v : spec.biases) check_bias(rp, v);
    if (heater) check_bias(rp, spec.heater_bias);
    if (o.dry_run) {
        out << "sweep-fcm: inputs valid (" << n << " spectra)\n";
        return kOk;
    }

    std::vector<FcmPoint> points(n);
    parallel_for(n, o.jobs, [&](std::size_t i) {
        points[i] = heater ? run_fcm_point(card, spec, spec.heater_bias, spec.heater_powers[i])
                           : run_fcm_point(card, spec, spec.biases[i], 0.0);
    });

    io::Json list = io::Json::array();
    for (const auto& p : points) {
        const std::string name = spectrum_name(p, heater);
        std::ostringstream csv;
        io::write_transmission_csv(csv, p.result.sweep);
        io::write_file_atomic(out_path(o, name), csv.str());
        io::Json entry{{"file", name},
                       {"bias_V", p.bias},
                       {"heater_mW", p.heater_power * 1e3},
                       {"dwell_ratio", p.result.dwell_ratio},
                       {"chirp_too_fast", p.result.chirp_too_fast},
                       {"warnings", p.result.warnings},
                       {"stats", stats_json(p.stats)}};
        try {
            const Resonance res = find_resonance(p.result.sweep);
            entry["lambda0_m"] = res.lambda0;
            entry["t0"] = res.t0;
        } catch (const Error& e) {
            entry["lambda0_m"] = nullptr;
            entry["warnings"].push_back(e.what());
        }
        for (const auto& w : p.result.warnings) err << "warning: " << name << ": " << w << "\n";
        list.push_back(entry);
    }
    io::Json summary{{"schema_version", io::kSchemaVersion},
                     {"command", "sweep-fcm"},
                     {"lambda_ref_m", lambda_ref},
                     {"f_start_Hz", spec.f_start},
                     {"f_stop_Hz", spec.f_stop},
                     {"spectra", list}};
    io::write_file_atomic(out_path(o, "sweep_summary.json"), dump(summary));
    out << "sweep-fcm: " << n << " spectra -> " << o.out_dir << "\n";
    return kOk;
}

int cmd_fit(const CommonOptions& o, std::ostream& out, std::ostream& err) {
    if (o.config.empty()) throw Error(ErrorCode::BadArgument, "--config is required");
    const std::filesystem::path manifest = o.config;
    ExtractionOptions opts;
    const MeasurementSet data =
        io::load_manifest(io::read_json_file(manifest), manifest.parent_path(), opts, manifest.string());
    if (o.dry_run) {
        out << "fit: inputs valid (" << data.bias_sweeps.size() << " bias sweeps, " << data.heater_sweeps.size()
            << " heater sweeps)\n";
        return kOk;
    }
    const ExtractionResult r = extract_all(data, opts);
    io::ModelCard card;
    card.resonator = r.card;
    card.has_gamma = r.has_gamma;
    card.electrical = r.electrical;
    io::write_file_atomic(out_path(o, "model_card.json"), dump(io::to_json(card)));
    io::write_file_atomic(out_path(o, "fit_report.json"), dump(io::fit_report(r)));
    for (const auto& w : r.warnings) err << "warning: " << w << "\n";
    out << "fit: model card written to " << out_path(o, "model_card.json").string() << "\n";
    return kOk;
}

int cmd_eye(const CommonOptions& o, std::ostream& out) {
    if (o.config.empty()) throw Error(ErrorCode::BadArgument, "--config is required");
    const std::filesystem::path spec_path = o.config;
    const io::Json j = io::read_json_file(spec_path);
    const std::string src = spec_path.string();
    if (!j.is_object()) throw Error(ErrorCode::Schema, src + ": expected an object");
    for (const auto& item : j.items()) {
        static const std::vector<std::string> known{"schema_version", "trace", "scenario", "data_rate",
                                                    "skip_ui",        "n_t",   "n_p",      "points_per_ui"};
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw Error(ErrorCode::Schema, src + "." + item.key() + ": unknown field");
    }
    auto path_field = [&](const char* key) {
        if (!j.at(key).is_string()) throw Error(ErrorCode::Schema, src + "." + key + ": expected a path string");
        std::filesystem::path p = j.at(key).get<std::string>();
        return p.is_absolute() ? p : spec_path.parent_path() / p;
    };
    auto count_field = [&](const char* key, std::size_t fallback) -> std::size_t {
        if (!j.contains(key)) return fallback;
        if (!j.at(key).is_number_unsigned()) throw Error(ErrorCode::Schema, src + "." + key + ": expected a count");
        return j.at(key).get<std::size_t>();
    };
    if (!j.contains("trace")) throw Error(ErrorCode::Schema, src + ".trace: missing required field");
    const auto trace_path = path_field("trace");

    std::optional<io::Scenario> scenario;
    if (j.contains("scenario")) {
        const auto sp = path_field("scenario");
        scenario = io::scenario_from_json(io::read_json_file(sp), sp.string());
        if (o.seed) scenario->seed = *o.seed;
    }
    double rate = 0.0;
    if (j.contains("data_rate")) {
        if (!j.at("data_rate").is_number()) throw Error(ErrorCode::Schema, src + ".data_rate: expected a number");
        rate = j.at("data_rate").get<double>() * 1e9;
    } else if (scenario) {
        rate = scenario->data_rate;
    }
    if (!(rate > 0.0)) throw Error(ErrorCode::Schema, src + ".data_rate: required when no scenario is given");

    EyeOptions eo;
    eo.skip = count_field("skip_ui", scenario ? scenario->eye_skip : eo.skip);
    eo.n_t = count_field("n_t", eo.n_t);
    eo.n_p = count_field("n_p", eo.n_p);
    eo.points_per_ui = count_field("points_per_ui", eo.points_per_ui);

    std::ifstream in(trace_path);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + trace_path.string() + "'");
    const Trace tr = Trace::read_csv(in, trace_path.string());
    if (o.dry_run) {
        out << "eye: inputs valid (" << tr.size() << " samples)\n";
        return kOk;
    }
    const double ui = 1.0 / rate;
    EyeDiagram eye = fold_eye(tr, ui, eo);

    std::ostringstream csv;
    csv << "t_s,p_W,count\n";
    const double dt_bin = 2.0 * ui / static_cast<double>(eye.n_t);
    const double dp_bin = (eye.p_max - eye.p_min) / static_cast<double>(eye.n_p);
    char buf[96];
    for (std::size_t it = 0; it < eye.n_t; ++it) {
        for (std::size_t ip = 0; ip < eye.n_p; ++ip) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%llu\n", (static_cast<double>(it) + 0.5) * dt_bin,
                          eye.p_min + (static_cast<double>(ip) + 0.5) * dp_bin,
                          static_cast<unsigned long long>(eye.at(it, ip)));
            csv << buf;
        }
    }
    io::write_file_atomic(out_path(o, "eye.csv"), csv.str());

    std::vector<std::string> warnings;
    io::Json metrics{{"schema_version", io::kSchemaVersion},
                     {"ui_s", ui},
                     {"n_t", eye.n_t},
                     {"n_p", eye.n_p},
                     {"p_min_W", eye.p_min},
                     {"p_max_W", eye.p_max},
                     {"total_count", eye.total()}};
    if (scenario) {
        const std::size_t n_sym = static_cast<std::size_t>(std::ceil((tr.t_end() - tr.t_begin()) / ui)) + 2;
        const bool pam4 = scenario->format == "pam4";
        const Bits bits = prbs_bits(scenario->prbs_order, scenario->seed, pam4 ? 2 * n_sym : n_sym);
        const std::vector<int> symbols = pam4 ? pam4_symbols(bits, scenario->gray) : std::vector<int>{};
        io::Scenario s = *scenario;
        s.eye_skip = eo.skip;
        metrics["metrics"] = pattern_metrics(tr, s, bits, symbols, ui, warnings);
    } else {
        warnings.emplace_back("no scenario given; level and edge metrics need the bit pattern");
    }
    metrics["warnings"] = warnings;
    io::write_file_atomic(out_path(o, "metrics.json"), dump(metrics));
    out << "eye: " << eye.total() << " samples folded -> " << o.out_dir << "\n";
    return kOk;
}

int cmd_bench(const CommonOptions& o, const BenchOptions& bo, std::ostream& out) {
    const io::Scenario s = load_scenario(o);
    const io::ModelCard card = load_card(o.model);
    const io::BuiltScenario b = io::build_scenario(s, card);
    reframed(card, b.lambda_ref);
    if (!(bo.baseline_dt > 0.0) || bo.reference_dt < 0.0)
        throw Error(ErrorCode::BadArgument, "baseline and reference steps must be positive");
    if (o.dry_run) {
        out << "bench: inputs valid (" << b.t_end << " s)\n";
        return kOk;
    }
    const BenchResult r = bench(s, card, bo);
    io::Json j = to_json(r);
    j["scenario"] = io::to_json(s);
    io::write_file_atomic(out_path(o, "benchmark.json"), dump(j));
    out << "bench: step ratio " << r.step_ratio << " -> " << o.out_dir << "\n";
    return kOk;
}

void add_common(CLI::App* sub, CommonOptions& o, bool needs_model) {
    sub->add_option("--config", o.config, "Command configuration (JSON)");
    if (needs_model) sub->add_option("--model", o.model, "Model card (JSON)");
    sub->add_option("--out", o.out_dir, "Output directory");
    sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::Range(1u, 1024u));
    sub->add_option("--seed", o.seed, "Override the PRBS seed");
    sub->add_flag("--dry-run", o.dry_run, "Validate inputs without computing");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Microdisk modulator simulation, extraction and analysis"};
    app.require_subcommand(1);
    CommonOptions o;
    std::size_t decimation = 1;
    BenchOptions bo;
    double baseline_fs = bo.baseline_dt * 1e15;
    double reference_fs = bo.reference_dt * 1e15;
    bool constant_cj = false;

    auto* sim = app.add_subcommand("simulate", "Transient run of a scenario");
    add_common(sim, o, true);
    sim->add_option("--decimate", decimation, "Write every n-th trace sample")->check(CLI::PositiveNumber);
    auto* fcm = app.add_subcommand("sweep-fcm", "Static spectra by slow frequency chirp");
    add_common(fcm, o, true);
    auto* fit = app.add_subcommand("fit", "Extract a model card from measurements");
    add_common(fit, o, false);
    auto* eye = app.add_subcommand("eye", "Fold a trace into an eye diagram");
    add_common(eye, o, false);
    auto* bch = app.add_subcommand("bench", "Adaptive solver against the fixed-step baseline");
    add_common(bch, o, true);
    bch->add_option("--baseline-dt-fs", baseline_fs, "Baseline clock period (fs)");
    bch->add_option("--reference-dt-fs", reference_fs, "Reference clock period (fs), 0 to skip");
    bch->add_flag("--baseline-constant-cj", constant_cj, "Freeze the baseline junction capacitance at Cj0");
    bch->add_flag("--self-compare", bo.compare_adaptive_to_itself, "Compare the adaptive solver with itself");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }

    try {
        if (sim->parsed()) return cmd_simulate(o, decimation, out, err);
        if (fcm->parsed()) return cmd_sweep_fcm(o, out, err);
        if (fit->parsed()) return cmd_fit(o, out, err);
        if (eye->parsed()) return cmd_eye(o, out);
        bo.baseline_dt = baseline_fs * 1e-15;
        bo.reference_dt = reference_fs * 1e-15;
        bo.baseline_nonlinear_cj = !constant_cj;
        return cmd_bench(o, bo, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return is_input_error(e.code()) ? kInputError : kNumericalError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternalError;
    }
}

int run_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace mdm::cli
