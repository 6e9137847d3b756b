#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecdd/calibration.hpp"
#include "ecdd/detector.hpp"
#include "ecdd/error.hpp"
#include "ecdd/harness.hpp"

namespace ecdd::cli {

/// Process exit codes. Library failures map through `exit_code_for`.
enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kConfig = 3,
    kIo = 4,
    kParse = 5,
    kSearch = 6,
    kFit = 7,
    kLookup = 8,
    kInput = 9,
    kInternal = 70,
};

int exit_code_for(const Error& error) noexcept;

/// Seed from `requested`, or a fresh one announced on `log` when absent.
std::uint64_t resolve_seed(std::optional<std::uint64_t> requested, std::ostream& log);

// ---------------------------------------------------------------- calibrate

struct CalibrateOptions {
    std::vector<double> lambdas{0.2};
    std::vector<double> arl0s{100.0, 400.0, 1000.0};
    double grid_min = 0.05;
    double grid_max = 0.50;
    double grid_step = 0.01;
    /// "full" (0..7) or "odd" (0,1,3,5,7); anything else is a config error.
    std::string basis = "full";
    long reps = 10000;
    /// Replications of the round-trip check; 0 skips it.
    long verify_reps = 50000;
    double tol_rel = 0.10;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out = "calibration.json";
};

struct RoundTripPoint {
    double lambda = 0.0;
    double arl0 = 0.0;
    double p0 = 0.0;
    double limit = 0.0;
    double arl = 0.0;
    double rel_error = 0.0;
};

std::vector<double> make_grid(double lo, double hi, double step);

/// Fits every (lambda, ARL0) pair. Progress goes to `log`.
CalibrationTable calibrate(const CalibrateOptions& options, std::uint64_t seed, std::ostream& log);

/// Re-simulates each entry at the check points inside its range.
std::vector<RoundTripPoint> round_trip(const CalibrationTable& table,
                                       const std::vector<double>& p0s, long reps,
                                       std::uint64_t seed);

int cmd_calibrate(const CalibrateOptions& options, std::ostream& out, std::ostream& log);

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
    /// "gauss", "sine" or "bits".
    std::string kind = "gauss";
    long length = 400;
    std::optional<long> change_point;
    std::optional<DriftRamp> ramp;
    /// For "bits": consecutive segments of (error rate, count).
    std::vector<std::pair<double, long>> segments;
    std::optional<std::uint64_t> seed;
};

/// Parses "0.1:200,0.9:100".
std::vector<std::pair<double, long>> parse_segments(const std::string& text);

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& log);

// ---------------------------------------------------------------- bench

/// An experiment plus the table it runs against.
struct BenchConfig {
    ExperimentSpec experiment;
    std::optional<std::filesystem::path> table;
    std::string label;
};

/// Reads an experiment config; relative paths resolve against `base_dir`.
BenchConfig bench_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
BenchConfig load_bench_config(const std::filesystem::path& path);

/// presets/<name>.json under `preset_dir`.
std::filesystem::path preset_path(const std::filesystem::path& preset_dir, const std::string& name);
std::vector<std::string> list_presets(const std::filesystem::path& preset_dir);

/// Table named in the config, or the built-in paper table when none is given.
CalibrationTable table_for(const BenchConfig& config);

struct BenchOptions {
    std::optional<std::string> preset;
    std::optional<std::filesystem::path> config;
    std::filesystem::path preset_dir;
    std::optional<std::filesystem::path> table;
    std::optional<long> reps;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::filesystem::path> json_out;
    std::optional<std::filesystem::path> trace_out;
    bool list = false;
};

int cmd_bench(const BenchOptions& options, std::ostream& out, std::ostream& log);

// ---------------------------------------------------------------- monitor

struct MonitorOptions {
    DetectorConfig detector;
    std::optional<std::filesystem::path> table;
    /// Reset after a detection and keep reading; otherwise stop at the first one.
    bool auto_reset = true;
};

/// Status-line loop over one 0/1 per line. Returns the number of detections.
/// Throws ParseError (naming the line) on malformed input.
long run_monitor(const CalibrationTable& table, const MonitorOptions& options, std::istream& in,
                 std::ostream& out);

int cmd_monitor(const MonitorOptions& options, std::istream& in, std::ostream& out,
                std::ostream& log);

/// Parses a single status line `t status z p_hat limit`.
struct StatusLine {
    long t = 0;
    Status status = Status::InControl;
    double z = 0.0;
    double p_hat = 0.0;
    double limit = 0.0;
};
std::optional<StatusLine> parse_status_line(const std::string& line);

/// Whole program; argv[0] is the program name.
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace ecdd::cli
