#pragma once

#include "mdm/analysis.hpp"
#include "mdm/io.hpp"
#include "mdm/solver.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mdm::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int { kOk = 0, kInputError = 2, kNumericalError = 3, kInternalError = 4 };

/// Parses `args` (without the program name) and runs one subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_main(int argc, char** argv);

[[nodiscard]] SolverConfig solver_config_for(const io::Scenario& s, const io::BuiltScenario& b);

struct SimulationRun {
    io::BuiltScenario built;
    Trace trace;
};

[[nodiscard]] SimulationRun simulate(const io::Scenario& s, const io::ModelCard& card);

/// One spectrum sweep: a list of biases or a list of heater powers, each traced by a slow chirp.
struct FcmSweepSpec {
    std::vector<double> biases;         // V
    std::vector<double> heater_powers;  // W; used when `biases` is empty
    double heater_bias = 0.0;           // V, drive during heater sweeps
    double f_start = -50e9;             // Hz offset from lambda_ref
    double f_stop = 50e9;
    double dwell_factor = kFcmDwellFactor;
    std::optional<double> duration;     // s; derived from the dwell factor when absent
    double laser_power = 1e-3;          // W
    std::optional<double> lambda_ref;   // m
    std::size_t points = 2001;
    std::string method = "rodas4";
    double rel_tol = 1e-7;
};

[[nodiscard]] FcmSweepSpec fcm_spec_from_json(const io::Json& j, const std::string& source = "sweep");

struct FcmPoint {
    double bias = 0.0;
    double heater_power = 0.0;
    FcmResult result;
    SolverStats stats;
};

[[nodiscard]] FcmPoint run_fcm_point(const io::ModelCard& card, const FcmSweepSpec& spec, double bias,
                                     double heater_power);

struct BenchOptions {
    double baseline_dt = 100e-15;
    bool baseline_nonlinear_cj = true;
    double reference_dt = 1e-15;  // 0 disables the reference run
    bool compare_adaptive_to_itself = false;
};

struct BenchResult {
    SolverComparison adaptive_vs_baseline;
    std::optional<SolverComparison> adaptive_vs_reference;
    std::optional<SolverComparison> baseline_vs_reference;
    double step_ratio = 0.0;  // baseline ticks per adaptive evaluation
};

[[nodiscard]] BenchResult bench(const io::Scenario& s, const io::ModelCard& card, const BenchOptions& opts);
[[nodiscard]] io::Json to_json(const BenchResult& r);

}  // namespace mdm::cli
