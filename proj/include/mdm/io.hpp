#pragma once

#include "mdm/core_model.hpp"
#include "mdm/electrical.hpp"
#include "mdm/extraction.hpp"
#include "mdm/stimulus.hpp"
#include "mdm/thermal.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mdm::io {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Resonator card plus the optional electrical and thermal sections.
struct ModelCard {
    ResonatorParams resonator;
    bool has_gamma = true;
    std::optional<ElectricalParams> electrical;
    std::optional<ThermalParams> thermal;

    /// Network values, falling back to the measured defaults when the card has none.
    [[nodiscard]] ElectricalParams electrical_or_default() const { return electrical.value_or(ElectricalParams{}); }
    /// Thermal section with gamma taken from the resonator card.
    [[nodiscard]] ThermalParams thermal_or_default() const;
};

[[nodiscard]] Json to_json(const ModelCard& card);
/// Throws Schema naming the offending field; `source` prefixes the message.
[[nodiscard]] ModelCard model_card_from_json(const Json& j, const std::string& source = "model card");

[[nodiscard]] Json to_json(const ElectricalParams& ep);
[[nodiscard]] ElectricalParams electrical_from_json(const Json& j, const std::string& context);

/// Drive and laser description of one transient run.
struct Scenario {
    double data_rate = 25e9;  // symbols/s
    std::string format = "nrz";
    double vpp = 2.0;
    double v_bias = 0.5;
    int prbs_order = 13;
    std::uint64_t seed = 1;
    double t_edge_ui = 0.25;
    bool gray = true;
    double laser_power = 1e-3;           // W
    double lambda_laser = 1566.65e-9;    // m
    std::optional<double> lambda_ref;    // m; the model card's reference when absent
    std::optional<double> heater_voltage;  // V
    double heater_power = 0.0;           // W, used when no heater voltage is given
    std::size_t n_ui = 100;
    std::optional<double> t_end;         // s; overrides n_ui / data_rate
    std::string method = "rodas4";
    double rel_tol = 1e-6;
    double max_step_ui = 0.0;            // 0 = unlimited
    std::size_t eye_skip = 2;
};

[[nodiscard]] Scenario scenario_from_json(const Json& j, const std::string& source = "scenario");
[[nodiscard]] Json to_json(const Scenario& s);

/// Stimulus and pattern bookkeeping derived from a scenario.
struct BuiltScenario {
    Stimulus stimulus;
    Bits bits;
    std::vector<int> symbols;  // PAM4 only
    double ui = 0.0;
    double t_end = 0.0;
    double lambda_ref = 0.0;
};

[[nodiscard]] BuiltScenario build_scenario(const Scenario& s, const ModelCard& card);

/// Header `lambda_nm,transmission_linear` or `lambda_nm,transmission_dB`.
[[nodiscard]] TransmissionSweep read_transmission_csv(std::istream& is, const std::string& source);
void write_transmission_csv(std::ostream& os, const TransmissionSweep& sweep);

/// Header `f_Hz,re_s11,im_s11`.
[[nodiscard]] std::vector<S11Point> read_s11_csv(std::istream& is, const std::string& source);
void write_s11_csv(std::ostream& os, const std::vector<S11Point>& pts);

/// Header `v_V,cj_F`.
[[nodiscard]] std::vector<std::pair<double, double>> read_cv_csv(std::istream& is, const std::string& source);
void write_cv_csv(std::ostream& os, const std::vector<std::pair<double, double>>& pts);

/// Parses a fit manifest; file entries are resolved against `base_dir`.
[[nodiscard]] MeasurementSet load_manifest(const Json& j, const std::filesystem::path& base_dir,
                                           ExtractionOptions& opts, const std::string& source = "manifest");

[[nodiscard]] Json fit_report(const ExtractionResult& r);

[[nodiscard]] Json read_json_file(const std::filesystem::path& path);
[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary sibling file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace mdm::io
