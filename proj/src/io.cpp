#include "mdm/io.hpp"

#include "mdm/constants.hpp"
#include "mdm/errors.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <unistd.h>

namespace mdm::io {

namespace {

[[noreturn]] void schema_error(const std::string& context, const std::string& what) {
    throw Error(ErrorCode::Schema, context + ": " + what);
}

void reject_unknown_keys(const Json& j, const std::string& context, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) schema_error(context, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items())
        if (!ok.count(item.key())) schema_error(context + "." + item.key(), "unknown field");
}

double number(const Json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) schema_error(context + "." + key, "missing required field");
    const Json& v = j.at(key);
    if (!v.is_number()) schema_error(context + "." + key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) schema_error(context + "." + key, "must be finite");
    return d;
}

double number_or(const Json& j, const std::string& key, const std::string& context, double fallback) {
    return j.contains(key) ? number(j, key, context) : fallback;
}

std::uint64_t unsigned_or(const Json& j, const std::string& key, const std::string& context, std::uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const Json& v = j.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned()))
        schema_error(context + "." + key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
}

Polynomial coeffs(const Json& j, const std::string& key, const std::string& context) {
    if (!j.contains(key)) schema_error(context + "." + key, "missing required field");
    const Json& v = j.at(key);
    if (!v.is_array() || v.empty() || v.size() > 3) schema_error(context + "." + key, "expected 1 to 3 numbers");
    Polynomial p;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) schema_error(context + "." + key + "[" + std::to_string(i) + "]", "expected a number");
        p.coeffs.push_back(v[i].get<double>());
    }
    return p;
}

void check_schema_version(const Json& j, const std::string& context) {
    if (!j.contains("schema_version")) return;
    const Json& v = j.at("schema_version");
    if (!v.is_number_integer() || v.get<int>() != kSchemaVersion)
        schema_error(context + ".schema_version", "unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
}

/// Re-labels validation failures of a parsed section as schema errors.
template <typename F>
void validate_as_schema(const std::string& context, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        schema_error(context, e.what());
    }
}

}  // namespace

ThermalParams ModelCard::thermal_or_default() const {
    ThermalParams tp = thermal.value_or(ThermalParams{});
    if (resonator.gamma > 0.0) tp.gamma = resonator.gamma;
    if (electrical) tp.rh = electrical->rh;
    return tp;
}

Json to_json(const ElectricalParams& ep) {
    return Json{{"cj0", ep.cj0}, {"vbi", ep.vbi}, {"mj", ep.mj},   {"rs", ep.rs}, {"cox", ep.cox},
                {"rsi", ep.rsi}, {"cpad", ep.cpad}, {"z0", ep.z0}, {"rh", ep.rh}};
}

ElectricalParams electrical_from_json(const Json& j, const std::string& context) {
    reject_unknown_keys(j, context, {"cj0", "vbi", "mj", "rs", "cox", "rsi", "cpad", "z0", "rh"});
    ElectricalParams ep;
    ep.cj0 = number_or(j, "cj0", context, ep.cj0);
    ep.vbi = number_or(j, "vbi", context, ep.vbi);
    ep.mj = number_or(j, "mj", context, ep.mj);
    ep.rs = number_or(j, "rs", context, ep.rs);
    ep.cox = number_or(j, "cox", context, ep.cox);
    ep.rsi = number_or(j, "rsi", context, ep.rsi);
    ep.cpad = number_or(j, "cpad", context, ep.cpad);
    ep.z0 = number_or(j, "z0", context, ep.z0);
    ep.rh = number_or(j, "rh", context, ep.rh);
    validate_as_schema(context, [&] { ep.validate(); });
    return ep;
}

Json to_json(const ModelCard& card) {
    const auto& r = card.resonator;
    Json j{{"schema_version", kSchemaVersion},
           {"lambda_ref", r.lambda_ref},
           {"lambda0_coeffs", r.lambda0_coeffs.coeffs},
           {"tau_c_coeffs", r.tau_c_coeffs.coeffs},
           {"tau_l_coeffs", r.tau_l_coeffs.coeffs},
           {"v_range", {r.v_range.first, r.v_range.second}}};
    if (card.has_gamma) j["gamma"] = r.gamma;
    if (card.electrical) j["electrical"] = to_json(*card.electrical);
    if (card.thermal)
        j["thermal"] = Json{{"tau_h", card.thermal->tau_h}, {"dynamic", card.thermal->dynamic}};
    return j;
}

ModelCard model_card_from_json(const Json& j, const std::string& source) {
    reject_unknown_keys(j, source, {"schema_version", "lambda_ref", "lambda0_coeffs", "tau_c_coeffs", "tau_l_coeffs",
                                    "v_range", "gamma", "electrical", "thermal"});
    check_schema_version(j, source);
    ModelCard card;
    auto& r = card.resonator;
    r.lambda_ref = number(j, "lambda_ref", source);
    r.lambda0_coeffs = coeffs(j, "lambda0_coeffs", source);
    r.tau_c_coeffs = coeffs(j, "tau_c_coeffs", source);
    r.tau_l_coeffs = coeffs(j, "tau_l_coeffs", source);
    if (!j.contains("v_range")) schema_error(source + ".v_range", "missing required field");
    const Json& vr = j.at("v_range");
    if (!vr.is_array() || vr.size() != 2 || !vr[0].is_number() || !vr[1].is_number())
        schema_error(source + ".v_range", "expected [v_min, v_max]");
    r.v_range = {vr[0].get<double>(), vr[1].get<double>()};
    card.has_gamma = j.contains("gamma");
    r.gamma = card.has_gamma ? number(j, "gamma", source) : 0.0;
    validate_as_schema(source, [&] { r.validate(); });
    if (j.contains("electrical")) card.electrical = electrical_from_json(j.at("electrical"), source + ".electrical");
    if (j.contains("thermal")) {
        const std::string ctx = source + ".thermal";
        const Json& t = j.at("thermal");
        reject_unknown_keys(t, ctx, {"tau_h", "dynamic"});
        ThermalParams tp;
        tp.tau_h = number_or(t, "tau_h", ctx, tp.tau_h);
        if (t.contains("dynamic")) {
            if (!t.at("dynamic").is_boolean()) schema_error(ctx + ".dynamic", "expected a boolean");
            tp.dynamic = t.at("dynamic").get<bool>();
        }
        if (!(tp.tau_h > 0.0)) schema_error(ctx + ".tau_h", "must be positive");
        card.thermal = tp;
    }
    return card;
}

Scenario scenario_from_json(const Json& j, const std::string& source) {
    reject_unknown_keys(j, source, {"schema_version", "data_rate", "format", "vpp", "v_bias", "prbs_order", "seed",
                                    "t_edge_ui", "gray", "laser", "heater", "n_ui", "t_end_s", "solver", "eye_skip_ui"});
    check_schema_version(j, source);
    Scenario s;
    s.data_rate = number(j, "data_rate", source) * 1e9;
    if (!(s.data_rate > 0.0)) schema_error(source + ".data_rate", "must be positive");
    if (j.contains("format")) {
        if (!j.at("format").is_string()) schema_error(source + ".format", "expected \"nrz\" or \"pam4\"");
        s.format = j.at("format").get<std::string>();
        if (s.format != "nrz" && s.format != "pam4") schema_error(source + ".format", "expected \"nrz\" or \"pam4\"");
    }
    s.vpp = number_or(j, "vpp", source, s.vpp);
    if (s.vpp < 0.0) schema_error(source + ".vpp", "must be >= 0");
    s.v_bias = number_or(j, "v_bias", source, s.v_bias);
    s.prbs_order = static_cast<int>(unsigned_or(j, "prbs_order", source, 13));
    s.seed = unsigned_or(j, "seed", source, s.seed);
    s.t_edge_ui = number_or(j, "t_edge_ui", source, s.t_edge_ui);
    if (!(s.t_edge_ui > 0.0 && s.t_edge_ui < 1.0)) schema_error(source + ".t_edge_ui", "must lie in (0, 1)");
    if (j.contains("gray")) {
        if (!j.at("gray").is_boolean()) schema_error(source + ".gray", "expected a boolean");
        s.gray = j.at("gray").get<bool>();
    }
    if (!j.contains("laser")) schema_error(source + ".laser", "missing required field");
    {
        const std::string ctx = source + ".laser";
        const Json& l = j.at("laser");
        reject_unknown_keys(l, ctx, {"power_mW", "lambda_L_nm", "lambda_ref_nm"});
        s.laser_power = number_or(l, "power_mW", ctx, 1.0) * 1e-3;
        if (!(s.laser_power > 0.0)) schema_error(ctx + ".power_mW", "must be positive");
        s.lambda_laser = number(l, "lambda_L_nm", ctx) * 1e-9;
        if (!(s.lambda_laser > 0.0)) schema_error(ctx + ".lambda_L_nm", "must be positive");
        if (l.contains("lambda_ref_nm")) s.lambda_ref = number(l, "lambda_ref_nm", ctx) * 1e-9;
    }
    if (j.contains("heater")) {
        const std::string ctx = source + ".heater";
        const Json& h = j.at("heater");
        reject_unknown_keys(h, ctx, {"v", "mW"});
        if (h.contains("v") && h.contains("mW")) schema_error(ctx, "give either v or mW, not both");
        if (h.contains("v")) s.heater_voltage = number(h, "v", ctx);
        s.heater_power = number_or(h, "mW", ctx, 0.0) * 1e-3;
        if (s.heater_power < 0.0) schema_error(ctx + ".mW", "must be >= 0");
    }
    s.n_ui = unsigned_or(j, "n_ui", source, s.n_ui);
    if (j.contains("t_end_s")) {
        s.t_end = number(j, "t_end_s", source);
        if (*s.t_end < 0.0) schema_error(source + ".t_end_s", "must be >= 0");
    }
    if (j.contains("solver")) {
        const std::string ctx = source + ".solver";
        const Json& sv = j.at("solver");
        reject_unknown_keys(sv, ctx, {"method", "rel_tol", "max_step_ui"});
        if (sv.contains("method")) {
            if (!sv.at("method").is_string()) schema_error(ctx + ".method", "expected a string");
            s.method = sv.at("method").get<std::string>();
            if (s.method != "dp45" && s.method != "rosenbrock23" && s.method != "rosenbrock34" && s.method != "rodas4")
                schema_error(ctx + ".method", "expected dp45, rosenbrock23, rosenbrock34 or rodas4");
        }
        s.rel_tol = number_or(sv, "rel_tol", ctx, s.rel_tol);
        if (!(s.rel_tol > 0.0 && s.rel_tol < 1.0)) schema_error(ctx + ".rel_tol", "must lie in (0, 1)");
        s.max_step_ui = number_or(sv, "max_step_ui", ctx, s.max_step_ui);
        if (s.max_step_ui < 0.0) schema_error(ctx + ".max_step_ui", "must be >= 0");
    }
    s.eye_skip = unsigned_or(j, "eye_skip_ui", source, s.eye_skip);
    return s;
}

Json to_json(const Scenario& s) {
    Json laser{{"power_mW", s.laser_power * 1e3}, {"lambda_L_nm", s.lambda_laser * 1e9}};
    if (s.lambda_ref) laser["lambda_ref_nm"] = *s.lambda_ref * 1e9;
    Json j{{"schema_version", kSchemaVersion},
           {"data_rate", s.data_rate * 1e-9},
           {"format", s.format},
           {"vpp", s.vpp},
           {"v_bias", s.v_bias},
           {"prbs_order", s.prbs_order},
           {"seed", s.seed},
           {"t_edge_ui", s.t_edge_ui},
           {"gray", s.gray},
           {"laser", laser},
           {"n_ui", s.n_ui},
           {"solver", {{"method", s.method}, {"rel_tol", s.rel_tol}, {"max_step_ui", s.max_step_ui}}},
           {"eye_skip_ui", s.eye_skip}};
    if (s.heater_voltage)
        j["heater"] = Json{{"v", *s.heater_voltage}};
    else
        j["heater"] = Json{{"mW", s.heater_power * 1e3}};
    if (s.t_end) j["t_end_s"] = *s.t_end;
    return j;
}

BuiltScenario build_scenario(const Scenario& s, const ModelCard& card) {
    BuiltScenario b;
    b.ui = 1.0 / s.data_rate;
    b.t_end = s.t_end.value_or(static_cast<double>(s.n_ui) * b.ui);
    b.lambda_ref = s.lambda_ref.value_or(card.resonator.lambda_ref);

    // Two spare symbols so the drive extends past the last sampled instant.
    const std::size_t n_sym = static_cast<std::size_t>(std::ceil(b.t_end / b.ui)) + 2;
    const double t_edge = s.t_edge_ui * b.ui;
    if (s.format == "pam4") {
        b.bits = prbs_bits(s.prbs_order, s.seed, 2 * n_sym);
        b.symbols = pam4_symbols(b.bits, s.gray);
        b.stimulus.voltage_drive =
            pam4_waveform(b.bits, b.ui, default_pam4_levels(s.vpp, s.v_bias), t_edge, s.gray);
    } else {
        b.bits = prbs_bits(s.prbs_order, s.seed, n_sym);
        b.stimulus.voltage_drive =
            nrz_waveform(b.bits, b.ui, s.v_bias - 0.5 * s.vpp, s.v_bias + 0.5 * s.vpp, t_edge);
    }
    b.stimulus.laser = LaserSource::cw(s.laser_power, s.lambda_laser, b.lambda_ref);
    double ph = s.heater_power;
    if (s.heater_voltage) ph = heater_power(card.thermal_or_default(), *s.heater_voltage).ph;
    b.stimulus.heater_power = PiecewiseConstant(ph);
    return b;
}

namespace {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> line_numbers;
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// Numeric CSV with one header line; '#' lines and blank lines are skipped.
CsvTable read_numeric_csv(std::istream& is, const std::string& source, std::size_t columns) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        auto cells = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            if (t.header.size() != columns) {
                std::ostringstream os;
                os << source << ": row " << line_no << ": expected " << columns << " header columns, got "
                   << t.header.size();
                throw Error(ErrorCode::Schema, os.str());
            }
            continue;
        }
        if (cells.size() != columns) {
            std::ostringstream os;
            os << source << ": row " << line_no << ": expected " << columns << " columns, got " << cells.size();
            throw Error(ErrorCode::Schema, os.str());
        }
        std::vector<double> row(columns);
        for (std::size_t c = 0; c < columns; ++c) {
            char* end = nullptr;
            errno = 0;
            row[c] = std::strtod(cells[c].c_str(), &end);
            if (cells[c].empty() || *end != '\0' || errno == ERANGE || !std::isfinite(row[c])) {
                std::ostringstream os;
                os << source << ": row " << line_no << ": column '" << t.header[c] << "' is not a finite number";
                throw Error(ErrorCode::Schema, os.str());
            }
        }
        t.rows.push_back(std::move(row));
        t.line_numbers.push_back(line_no);
    }
    if (t.header.empty()) throw Error(ErrorCode::Schema, source + ": missing header row");
    return t;
}

void expect_header(const CsvTable& t, const std::string& source, std::initializer_list<const char*> names) {
    std::size_t i = 0;
    for (const char* n : names) {
        if (t.header[i] != n)
            throw Error(ErrorCode::Schema,
                        source + ": header column " + std::to_string(i + 1) + " must be '" + n + "', got '" +
                            t.header[i] + "'");
        ++i;
    }
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

TransmissionSweep read_transmission_csv(std::istream& is, const std::string& source) {
    const CsvTable t = read_numeric_csv(is, source, 2);
    if (t.header[0] != "lambda_nm") throw Error(ErrorCode::Schema, source + ": first header column must be 'lambda_nm'");
    bool db = false;
    if (t.header[1] == "transmission_dB")
        db = true;
    else if (t.header[1] != "transmission_linear" && t.header[1] != "transmission")
        throw Error(ErrorCode::Schema,
                    source + ": second header column must be 'transmission_linear' or 'transmission_dB'");
    TransmissionSweep s;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double lam = t.rows[i][0] * 1e-9;
        const double tr = db ? std::pow(10.0, t.rows[i][1] / 10.0) : t.rows[i][1];
        if (!(lam > 0.0) || !(tr > 0.0))
            throw Error(ErrorCode::Schema, source + ": row " + std::to_string(t.line_numbers[i]) +
                                               ": wavelength and transmission must be positive");
        if (!s.points.empty() && !(lam > s.points.back().wavelength))
            throw Error(ErrorCode::Schema, source + ": row " + std::to_string(t.line_numbers[i]) +
                                               ": wavelengths must be strictly increasing");
        s.points.push_back({lam, tr});
    }
    return s;
}

void write_transmission_csv(std::ostream& os, const TransmissionSweep& sweep) {
    os << "lambda_nm,transmission_linear\n";
    for (const auto& p : sweep.points) os << format_g17(p.wavelength * 1e9) << ',' << format_g17(p.transmission) << '\n';
}

std::vector<S11Point> read_s11_csv(std::istream& is, const std::string& source) {
    const CsvTable t = read_numeric_csv(is, source, 3);
    expect_header(t, source, {"f_Hz", "re_s11", "im_s11"});
    std::vector<S11Point> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (!(t.rows[i][0] > 0.0))
            throw Error(ErrorCode::Schema, source + ": row " + std::to_string(t.line_numbers[i]) +
                                               ": frequency must be positive");
        out.push_back({t.rows[i][0], {t.rows[i][1], t.rows[i][2]}});
    }
    return out;
}

void write_s11_csv(std::ostream& os, const std::vector<S11Point>& pts) {
    os << "f_Hz,re_s11,im_s11\n";
    for (const auto& p : pts)
        os << format_g17(p.f_hz) << ',' << format_g17(p.s11.real()) << ',' << format_g17(p.s11.imag()) << '\n';
}

std::vector<std::pair<double, double>> read_cv_csv(std::istream& is, const std::string& source) {
    const CsvTable t = read_numeric_csv(is, source, 2);
    expect_header(t, source, {"v_V", "cj_F"});
    std::vector<std::pair<double, double>> out;
    for (const auto& r : t.rows) out.emplace_back(r[0], r[1]);
    return out;
}

void write_cv_csv(std::ostream& os, const std::vector<std::pair<double, double>>& pts) {
    os << "v_V,cj_F\n";
    for (const auto& [v, c] : pts) os << format_g17(v) << ',' << format_g17(c) << '\n';
}

namespace {

std::filesystem::path entry_path(const Json& e, const std::filesystem::path& base_dir, const std::string& ctx) {
    if (!e.contains("file") || !e.at("file").is_string()) schema_error(ctx + ".file", "expected a file path string");
    std::filesystem::path p = e.at("file").get<std::string>();
    return p.is_absolute() ? p : base_dir / p;
}

std::ifstream open_input(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + p.string() + "'");
    return in;
}

std::vector<TransmissionSweep> load_sweeps(const Json& j, const std::string& key, const std::filesystem::path& base,
                                           const std::string& source, bool heater) {
    std::vector<TransmissionSweep> out;
    if (!j.contains(key)) return out;
    const Json& arr = j.at(key);
    if (!arr.is_array()) schema_error(source + "." + key, "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string ctx = source + "." + key + "[" + std::to_string(i) + "]";
        reject_unknown_keys(arr[i], ctx, {"file", "bias_V", "heater_mW"});
        const auto path = entry_path(arr[i], base, ctx);
        auto in = open_input(path);
        TransmissionSweep s = read_transmission_csv(in, path.string());
        s.bias = heater ? number_or(arr[i], "bias_V", ctx, 0.0) : number(arr[i], "bias_V", ctx);
        s.heater_power = (heater ? number(arr[i], "heater_mW", ctx) : number_or(arr[i], "heater_mW", ctx, 0.0)) * 1e-3;
        out.push_back(std::move(s));
    }
    return out;
}

Json poly_json(const Polynomial& p) { return Json(p.coeffs); }

Json fit_entries(const std::vector<BiasFitEntry>& v) {
    Json arr = Json::array();
    for (const auto& e : v)
        arr.push_back({{"bias_V", e.v},
                       {"heater_W", e.heater_power},
                       {"lambda0_m", e.lambda0},
                       {"t0", e.t0},
                       {"tau_l_s", e.tau_l},
                       {"tau_c_s", e.tau_c},
                       {"residual_rms", e.residual_rms}});
    return arr;
}

}  // namespace

MeasurementSet load_manifest(const Json& j, const std::filesystem::path& base_dir, ExtractionOptions& opts,
                             const std::string& source) {
    reject_unknown_keys(j, source, {"schema_version", "bias_sweeps", "heater_sweeps", "s11", "cv", "electrical_init",
                                    "lambda0_degree", "branch", "deembed"});
    check_schema_version(j, source);
    MeasurementSet m;
    m.bias_sweeps = load_sweeps(j, "bias_sweeps", base_dir, source, false);
    m.heater_sweeps = load_sweeps(j, "heater_sweeps", base_dir, source, true);
    if (j.contains("s11")) {
        const std::string ctx = source + ".s11";
        reject_unknown_keys(j.at("s11"), ctx, {"file", "bias_V"});
        const auto path = entry_path(j.at("s11"), base_dir, ctx);
        auto in = open_input(path);
        m.s11 = read_s11_csv(in, path.string());
        m.s11_bias = number_or(j.at("s11"), "bias_V", ctx, 0.0);
    }
    if (j.contains("cv")) {
        const std::string ctx = source + ".cv";
        reject_unknown_keys(j.at("cv"), ctx, {"file"});
        const auto path = entry_path(j.at("cv"), base_dir, ctx);
        auto in = open_input(path);
        m.cv = read_cv_csv(in, path.string());
    }
    if (j.contains("electrical_init"))
        m.electrical_init = electrical_from_json(j.at("electrical_init"), source + ".electrical_init");
    if (j.contains("lambda0_degree")) {
        const auto d = unsigned_or(j, "lambda0_degree", source, 2);
        if (d < 1 || d > 2) schema_error(source + ".lambda0_degree", "must be 1 or 2");
        opts.lambda0_degree = static_cast<int>(d);
    }
    if (j.contains("branch")) {
        const Json& b = j.at("branch");
        if (b == "coupling_dominant")
            opts.branch = CouplingBranch::CouplingDominant;
        else if (b == "loss_dominant")
            opts.branch = CouplingBranch::LossDominant;
        else
            schema_error(source + ".branch", "expected \"coupling_dominant\" or \"loss_dominant\"");
    }
    if (j.contains("deembed")) {
        if (!j.at("deembed").is_boolean()) schema_error(source + ".deembed", "expected a boolean");
        opts.deembed = j.at("deembed").get<bool>();
    }
    return m;
}

Json fit_report(const ExtractionResult& r) {
    Json j{{"schema_version", kSchemaVersion},
           {"bias_fits", fit_entries(r.bias_fits)},
           {"heater_fits", fit_entries(r.heater_fits)},
           {"has_gamma", r.has_gamma},
           {"warnings", r.warnings}};
    if (r.has_gamma) j["gamma_m_per_W"] = r.card.gamma;
    if (r.polys) {
        j["polynomials"] = {{"lambda0", poly_json(r.polys->lambda0)},
                            {"tau_c", poly_json(r.polys->tau_c)},
                            {"tau_l", poly_json(r.polys->tau_l)},
                            {"lambda0_residuals", r.polys->lambda0_residuals},
                            {"tau_c_residuals", r.polys->tau_c_residuals},
                            {"tau_l_residuals", r.polys->tau_l_residuals}};
    }
    if (r.cv) j["cv"] = {{"cj0", r.cv->cj0}, {"vbi", r.cv->vbi}, {"mj", r.cv->mj}, {"residual_rms", r.cv->residual_rms}};
    if (r.s11) {
        Json sens;
        for (std::size_t k = 0; k < kS11ParamNames.size(); ++k) sens[kS11ParamNames[k]] = r.s11->sensitivities[k];
        j["s11"] = {{"params", to_json(r.s11->params)},
                    {"residual_rms", r.s11->residual_rms},
                    {"iterations", r.s11->iterations},
                    {"sensitivities", sens}};
    }
    return j;
}

std::string read_text_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Schema, path.string() + ": invalid JSON: " + e.what());
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::Io, "cannot move output into place at '" + path.string() + "'");
    }
}

}  // namespace mdm::io
