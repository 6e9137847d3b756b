#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ecdd/cli/commands.hpp"

namespace ecdd::cli {

namespace {

std::filesystem::path default_preset_dir() {
    if (const char* env = std::getenv("ECDD_PRESET_DIR")) return env;
#ifdef ECDD_DEFAULT_PRESET_DIR
    return ECDD_DEFAULT_PRESET_DIR;
#else
    return "presets";
#endif
}

std::optional<std::filesystem::path> default_table() {
    if (const char* env = std::getenv("ECDD_TABLE")) return std::filesystem::path(env);
#ifdef ECDD_DEFAULT_TABLE
    if (std::filesystem::exists(ECDD_DEFAULT_TABLE)) return std::filesystem::path(ECDD_DEFAULT_TABLE);
#endif
    return std::nullopt;
}

// Detector and table settings from a monitor config file: {"detector": {...}, "table": "..."}.
void apply_monitor_file(const std::filesystem::path& path, MonitorOptions& options) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    try {
        for (const auto& [key, value] : doc.items()) {
            (void)value;
            if (key != "detector" && key != "table" && key != "auto_reset")
                throw ConfigError("unknown key '" + key + "' in monitor config");
        }
        if (doc.contains("detector")) {
            const auto& d = doc["detector"];
            auto& c = options.detector;
            c.lambda = d.value("lambda", c.lambda);
            c.target_arl0 = d.value("arl0", c.target_arl0);
            c.warning_fraction = d.value("warning_fraction", c.warning_fraction);
            c.min_observations = d.value("min_observations", c.min_observations);
            if (d.contains("warning_buffer_cap"))
                c.warning_buffer_cap = d["warning_buffer_cap"].get<std::size_t>();
        }
        if (doc.contains("table")) {
            std::filesystem::path t = doc["table"].get<std::string>();
            options.table = t.is_absolute() ? t : path.parent_path() / t;
        }
        options.auto_reset = doc.value("auto_reset", options.auto_reset);
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("monitor config: ") + ex.what());
    }
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"EWMA concept drift detection: calibration, benchmarks and monitoring"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "0.1.0");

    // calibrate
    CalibrateOptions cal;
    std::uint64_t cal_seed = 0;
    auto* calibrate = app.add_subcommand("calibrate", "Fit control-limit curves and write a table file");
    calibrate->add_option("--lambda", cal.lambdas, "EWMA weights")->capture_default_str()->delimiter(',');
    calibrate->add_option("--arl0", cal.arl0s, "Target in-control run lengths (> 1)")
        ->capture_default_str()
        ->delimiter(',');
    calibrate->add_option("--grid-min", cal.grid_min, "Smallest p0 on the grid")->capture_default_str();
    calibrate->add_option("--grid-max", cal.grid_max, "Largest p0 on the grid")->capture_default_str();
    calibrate->add_option("--grid-step", cal.grid_step, "Grid spacing")->capture_default_str();
    calibrate->add_option("--basis", cal.basis, "Polynomial basis: full (0..7) or odd (0,1,3,5,7)")
        ->capture_default_str();
    calibrate->add_option("--reps", cal.reps, "Monte Carlo replications per limit search")
        ->capture_default_str();
    calibrate->add_option("--verify-reps", cal.verify_reps, "Replications of the round-trip check (0 skips)")
        ->capture_default_str();
    calibrate->add_option("--tol", cal.tol_rel, "Relative ARL tolerance of each limit search")
        ->capture_default_str();
    auto* cal_seed_opt = calibrate->add_option("--seed", cal_seed, "Random seed (generated when absent)");
    calibrate->add_option("-o,--out", cal.out, "Output table file")->capture_default_str();

    // simulate
    SimulateOptions sim;
    std::uint64_t sim_seed = 0;
    long ramp_start = 0, ramp_end = 0;
    long change_point = 0;
    std::string segments;
    std::filesystem::path sim_out;
    auto* simulate = app.add_subcommand("simulate", "Write a synthetic stream or error-bit stream");
    simulate->add_option("--kind", sim.kind, "gauss, sine or bits")->capture_default_str();
    simulate->add_option("--length", sim.length, "Samples (gauss/sine)")->capture_default_str();
    auto* cp_opt = simulate->add_option("--change-point", change_point, "Labels reverse after this t");
    auto* rs_opt = simulate->add_option("--ramp-start", ramp_start, "Start of a gradual label switch");
    auto* re_opt = simulate->add_option("--ramp-end", ramp_end, "End of a gradual label switch");
    simulate->add_option("--segments", segments, "bits: rate:count[,rate:count...]");
    auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Random seed (generated when absent)");
    simulate->add_option("-o,--out", sim_out, "Output file (default stdout)");

    // bench
    BenchOptions bench;
    bench.preset_dir = default_preset_dir();
    std::uint64_t bench_seed = 0;
    long bench_reps = 0;
    unsigned bench_threads = 0;
    auto* bench_cmd = app.add_subcommand("bench", "Run a replicated prequential experiment");
    bench_cmd->add_option("--preset", bench.preset, "Bundled experiment name (see --list)");
    bench_cmd->add_option("--config", bench.config, "Experiment config file (JSON)");
    bench_cmd->add_option("--preset-dir", bench.preset_dir, "Preset directory")->capture_default_str();
    bench_cmd->add_option("--table", bench.table, "Calibration table (overrides the config)");
    auto* bench_reps_opt = bench_cmd->add_option("--reps", bench_reps, "Replications");
    auto* bench_seed_opt = bench_cmd->add_option("--seed", bench_seed, "Base seed");
    auto* bench_threads_opt = bench_cmd->add_option("--threads", bench_threads, "Worker threads");
    bench_cmd->add_option("--json", bench.json_out, "Write the report as JSON");
    bench_cmd->add_option("--trace", bench.trace_out, "Write replication 0's window accuracy as CSV");
    bench_cmd->add_flag("--list", bench.list, "List bundled presets");

    // monitor
    MonitorOptions mon;
    std::filesystem::path mon_config;
    std::filesystem::path mon_table;
    double mon_lambda = 0, mon_arl0 = 0, mon_wf = 0;
    long mon_min_obs = 0;
    bool no_reset = false;
    auto* monitor = app.add_subcommand(
        "monitor", "Read error bits (one 0/1 per line) from stdin and print `t status z p_hat limit`");
    auto* mon_config_opt = monitor->add_option("--config", mon_config, "Monitor config file (JSON)");
    auto* mon_table_opt = monitor->add_option("--table", mon_table, "Calibration table file");
    auto* lambda_opt = monitor->add_option("--lambda", mon_lambda, "EWMA weight (default 0.2)");
    auto* arl_opt = monitor->add_option("--arl0", mon_arl0, "Target in-control run length (default 100)");
    auto* wf_opt = monitor->add_option("--warning-fraction", mon_wf, "W_t / L_t (default 0.5)");
    auto* mo_opt = monitor->add_option("--min-observations", mon_min_obs,
                                       "Observations before drift may be flagged (default 30)");
    monitor->add_flag("--no-auto-reset", no_reset, "Stop at the first detection");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (calibrate->parsed()) {
            if (cal_seed_opt->count()) cal.seed = cal_seed;
            return cmd_calibrate(cal, out, err);
        }
        if (simulate->parsed()) {
            if (cp_opt->count()) sim.change_point = change_point;
            if (rs_opt->count() != re_opt->count())
                throw UsageError("--ramp-start and --ramp-end go together");
            if (rs_opt->count()) sim.ramp = DriftRamp{ramp_start, ramp_end};
            if (!segments.empty()) sim.segments = parse_segments(segments);
            if (sim_seed_opt->count()) sim.seed = sim_seed;
            if (sim_out.empty()) return cmd_simulate(sim, out, err);
            std::ofstream f(sim_out);
            if (!f) throw IoError("cannot open " + sim_out.string() + " for writing");
            return cmd_simulate(sim, f, err);
        }
        if (bench_cmd->parsed()) {
            if (bench_reps_opt->count()) bench.reps = bench_reps;
            if (bench_seed_opt->count()) bench.seed = bench_seed;
            if (bench_threads_opt->count()) bench.threads = bench_threads;
            return cmd_bench(bench, out, err);
        }
        if (monitor->parsed()) {
            if (mon_config_opt->count()) apply_monitor_file(mon_config, mon);
            if (mon_table_opt->count()) mon.table = mon_table;
            if (!mon.table) mon.table = default_table();
            if (lambda_opt->count()) mon.detector.lambda = mon_lambda;
            if (arl_opt->count()) mon.detector.target_arl0 = mon_arl0;
            if (wf_opt->count()) mon.detector.warning_fraction = mon_wf;
            if (mo_opt->count()) mon.detector.min_observations = mon_min_obs;
            if (no_reset) mon.auto_reset = false;
            return cmd_monitor(mon, in, out, err);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kInternal;
    }
    return kUsage;
}

}  // namespace ecdd::cli
