#pragma once

#include "mdm/cli.hpp"
#include "mdm/io.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mdm::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        std::ostringstream name;
        name << "mdm_test_" << std::hex << rd() << rd();
        path_ = std::filesystem::temp_directory_path() / name.str();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

inline void write_json(const std::filesystem::path& p, const io::Json& j) { write_text(p, j.dump(2)); }

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliResult r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

/// Writes every measurement of `m` as CSV next to a manifest; returns the manifest path.
inline std::filesystem::path write_bundle(const std::filesystem::path& dir, const MeasurementSet& m) {
    io::Json manifest{{"schema_version", io::kSchemaVersion}};
    auto sweeps = [&](const std::vector<TransmissionSweep>& list, const char* prefix) {
        io::Json arr = io::Json::array();
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string name = prefix + std::to_string(i) + ".csv";
            std::ofstream os(dir / name);
            io::write_transmission_csv(os, list[i]);
            arr.push_back({{"file", name}, {"bias_V", list[i].bias}, {"heater_mW", list[i].heater_power * 1e3}});
        }
        return arr;
    };
    if (!m.bias_sweeps.empty()) manifest["bias_sweeps"] = sweeps(m.bias_sweeps, "bias_");
    if (!m.heater_sweeps.empty()) manifest["heater_sweeps"] = sweeps(m.heater_sweeps, "heater_");
    if (!m.s11.empty()) {
        std::ofstream os(dir / "s11.csv");
        io::write_s11_csv(os, m.s11);
        manifest["s11"] = {{"file", "s11.csv"}, {"bias_V", m.s11_bias}};
    }
    if (!m.cv.empty()) {
        std::ofstream os(dir / "cv.csv");
        io::write_cv_csv(os, m.cv);
        manifest["cv"] = {{"file", "cv.csv"}};
    }
    manifest["electrical_init"] = io::to_json(m.electrical_init);
    const auto path = dir / "manifest.json";
    write_json(path, manifest);
    return path;
}

}  // namespace mdm::test
