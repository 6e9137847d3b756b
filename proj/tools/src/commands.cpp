#include "ecdd/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "ecdd/random.hpp"
#include "ecdd/streams.hpp"

namespace ecdd::cli {

int exit_code_for(const Error& error) noexcept {
    switch (error.kind()) {
        case Error::Kind::Config: return kConfig;
        case Error::Kind::Input: return kInput;
        case Error::Kind::Usage: return kUsage;
        case Error::Kind::Io: return kIo;
        case Error::Kind::Parse: return kParse;
        case Error::Kind::Search: return kSearch;
        case Error::Kind::Fit: return kFit;
        case Error::Kind::Lookup: return kLookup;
    }
    return kInternal;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> requested, std::ostream& log) {
    if (requested) return *requested;
    std::random_device device;
    const std::uint64_t seed = (static_cast<std::uint64_t>(device()) << 32) ^ device();
    log << "seed: " << seed << " (generated; pass --seed " << seed << " to reproduce)\n";
    return seed;
}

namespace {

std::string fmt6(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
    (void)ec;
    return std::string(buf, ptr);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("write to " + path.string() + " failed");
}

const std::vector<double>& check_points() {
    static const std::vector<double> points{0.05, 0.1, 0.2, 0.3};
    return points;
}

}  // namespace

// ---------------------------------------------------------------- calibrate

std::vector<double> make_grid(double lo, double hi, double step) {
    if (!(step > 0.0)) throw ConfigError("grid step must be positive");
    if (!(lo <= hi)) throw ConfigError("grid minimum exceeds maximum");
    std::vector<double> grid;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) grid.push_back(std::round((lo + i * step) * 1e10) / 1e10);
    return grid;
}

CalibrationTable calibrate(const CalibrateOptions& options, std::uint64_t seed, std::ostream& log) {
    const std::vector<int>* basis = nullptr;
    if (options.basis == "full")
        basis = &default_basis_powers();
    else if (options.basis == "odd")
        basis = &odd_basis_powers();
    else
        throw ConfigError("basis must be 'full' or 'odd', got '" + options.basis + "'");
    if (options.reps < 1) throw ConfigError("reps must be positive");
    for (double a : options.arl0s)
        if (!(a > 1.0)) throw ConfigError("target ARL0 must exceed 1, got " + fmt6(a));
    for (double l : options.lambdas)
        if (!(l > 0.0 && l < 1.0)) throw ConfigError("lambda must lie in (0,1), got " + fmt6(l));

    const auto grid = make_grid(options.grid_min, options.grid_max, options.grid_step);
    CalibrationTable table;
    std::uint64_t index = 0;
    for (double lambda : options.lambdas) {
        for (double arl0 : options.arl0s) {
            auto entry = fit_table(lambda, arl0, grid, *basis, options.reps, derive_seed(seed, index++),
                                   options.tol_rel);
            log << "lambda=" << fmt6(lambda) << " arl0=" << fmt6(arl0)
                << ": max residual " << fmt6(entry.provenance.max_abs_residual) << " ("
                << entry.provenance.note << ")\n";
            table.insert(std::move(entry));
        }
    }
    return table;
}

std::vector<RoundTripPoint> round_trip(const CalibrationTable& table, const std::vector<double>& p0s,
                                       long reps, std::uint64_t seed) {
    std::vector<RoundTripPoint> out;
    std::uint64_t index = 0;
    for (const auto& e : table.entries()) {
        for (double p : p0s) {
            if (p < e.p0_min || p > e.p0_max) continue;
            RoundTripPoint r{e.lambda, e.arl0, p, e.evaluate(p), 0.0, 0.0};
            const auto est = estimate_arl0(p, e.lambda, r.limit, reps,
                                           static_cast<long>(std::ceil(100.0 * e.arl0)),
                                           derive_seed(seed, index++));
            r.arl = est.mean;
            r.rel_error = est.mean / e.arl0 - 1.0;
            out.push_back(r);
        }
    }
    return out;
}

int cmd_calibrate(const CalibrateOptions& options, std::ostream& out, std::ostream& log) {
    const std::uint64_t seed = resolve_seed(options.seed, log);
    const auto table = calibrate(options, seed, log);
    save_table(table, options.out);
    out << "wrote " << table.entries().size() << " entries to " << options.out.string() << "\n";
    if (options.verify_reps > 0) {
        out << "round trip (" << options.verify_reps << " reps):\n";
        out << "  lambda    arl0     p0       L       ARL     error\n";
        for (const auto& r : round_trip(table, check_points(), options.verify_reps,
                                        derive_seed(seed, 0xC0FFEE))) {
            out << "  " << std::left << std::setw(8) << fmt6(r.lambda) << std::setw(8)
                << fmt6(r.arl0) << std::setw(8) << fmt6(r.p0) << std::setw(8) << fmt6(r.limit)
                << std::setw(10) << fmt6(r.arl) << std::right << std::showpos << std::fixed
                << std::setprecision(1) << 100.0 * r.rel_error << "%" << std::noshowpos
                << std::defaultfloat << (std::abs(r.rel_error) <= 0.15 ? "" : "  outside 15%")
                << "\n";
        }
    }
    return kOk;
}

// ---------------------------------------------------------------- simulate

std::vector<std::pair<double, long>> parse_segments(const std::string& text) {
    std::vector<std::pair<double, long>> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("segment '" + item + "' is not of the form rate:count");
        double rate = 0.0;
        long count = 0;
        const auto r = item.substr(0, colon);
        const auto c = item.substr(colon + 1);
        auto [p1, e1] = std::from_chars(r.data(), r.data() + r.size(), rate);
        auto [p2, e2] = std::from_chars(c.data(), c.data() + c.size(), count);
        if (e1 != std::errc{} || p1 != r.data() + r.size() || e2 != std::errc{} ||
            p2 != c.data() + c.size())
            throw ConfigError("segment '" + item + "' is not of the form rate:count");
        if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("segment rate must lie in [0,1]");
        if (count < 1) throw ConfigError("segment count must be positive");
        out.emplace_back(rate, count);
    }
    if (out.empty()) throw ConfigError("no segments given");
    return out;
}

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& log) {
    const std::uint64_t seed = resolve_seed(options.seed, log);
    out << "# seed " << seed << "\n";
    if (options.kind == "bits") {
        if (options.segments.empty()) throw ConfigError("bits simulation needs --segments");
        Rng rng(derive_seed(seed, 0));
        for (const auto& [rate, count] : options.segments)
            for (long i = 0; i < count; ++i) out << (bernoulli(rng, rate) ? '1' : '0') << '\n';
        return kOk;
    }

    StreamSpec spec;
    if (options.kind == "gauss")
        spec.generator = GaussGenerator{};
    else if (options.kind == "sine")
        spec.generator = SineGenerator{};
    else
        throw ConfigError("unknown simulation kind '" + options.kind + "'");
    spec.length = options.length;
    spec.change_point = options.change_point;
    spec.drift_ramp = options.ramp;
    spec.seed = seed;
    auto stream = open_stream(spec);
    out << "x1,x2,label\n";
    while (auto s = stream->next())
        out << fmt6(s->features[0]) << ',' << fmt6(s->features[1]) << ',' << s->label << '\n';
    return kOk;
}

// ---------------------------------------------------------------- bench

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const char* where) {
    if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
            throw ConfigError(std::string("unknown key '") + key + "' in " + where);
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

StreamSpec stream_from_json(const json& j, const std::filesystem::path& base) {
    reject_unknown(j, {"generator", "change_point", "length", "drift_ramp", "path", "features",
                       "label_column", "has_header", "label_map"},
                   "stream");
    StreamSpec s;
    const auto gen = j.at("generator").get<std::string>();
    if (gen == "gauss") {
        s.generator = GaussGenerator{};
    } else if (gen == "sine") {
        s.generator = SineGenerator{};
    } else if (gen == "electricity" || gen == "csv") {
        const auto path = resolve(base, j.at("path").get<std::string>());
        CsvGenerator csv = gen == "electricity" ? electricity_preset(path) : CsvGenerator{};
        csv.path = path;
        if (j.contains("features")) csv.feature_columns = j["features"].get<std::vector<std::string>>();
        if (j.contains("label_column")) csv.label_column = j["label_column"].get<std::string>();
        if (j.contains("has_header")) csv.has_header = j["has_header"].get<bool>();
        if (j.contains("label_map")) csv.label_map = j["label_map"].get<std::map<std::string, int>>();
        s.generator = std::move(csv);
        s.length = 0;
    } else {
        throw ConfigError("unknown generator '" + gen + "'");
    }
    if (j.contains("length")) s.length = j["length"].get<long>();
    if (j.contains("change_point")) s.change_point = j["change_point"].get<long>();
    if (j.contains("drift_ramp")) {
        const auto r = j["drift_ramp"].get<std::vector<long>>();
        if (r.size() != 2) throw ConfigError("drift_ramp must be [start, end]");
        s.drift_ramp = DriftRamp{r[0], r[1]};
    }
    return s;
}

ClassifierSpec classifier_from_json(const json& j) {
    reject_unknown(j, {"kind", "k", "history_cap"}, "classifier");
    ClassifierSpec c;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "lda")
        c.kind = ClassifierSpec::Kind::Lda;
    else if (kind == "knn")
        c.kind = ClassifierSpec::Kind::Knn;
    else
        throw ConfigError("unknown classifier '" + kind + "'");
    if (j.contains("k")) c.k = j["k"].get<std::size_t>();
    if (j.contains("history_cap")) c.knn_history_cap = j["history_cap"].get<std::size_t>();
    return c;
}

void detector_config_from_json(const json& j, DetectorConfig& c) {
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("arl0")) c.target_arl0 = j["arl0"].get<double>();
    if (j.contains("warning_fraction")) c.warning_fraction = j["warning_fraction"].get<double>();
    if (j.contains("min_observations")) c.min_observations = j["min_observations"].get<long>();
    if (j.contains("warning_buffer_cap"))
        c.warning_buffer_cap = j["warning_buffer_cap"].get<std::size_t>();
}

DetectorSpec detector_from_json(const json& j) {
    reject_unknown(j, {"mode", "lambda", "arl0", "warning_fraction", "min_observations",
                       "warning_buffer_cap"},
                   "detector");
    DetectorSpec d;
    const auto mode = j.value("mode", std::string("ecdd"));
    if (mode == "none")
        d.mode = DetectorSpec::Mode::None;
    else if (mode == "ecdd")
        d.mode = DetectorSpec::Mode::Ecdd;
    else if (mode == "ecdd-wt")
        d.mode = DetectorSpec::Mode::EcddWt;
    else
        throw ConfigError("unknown detector mode '" + mode + "'");
    detector_config_from_json(j, d.config);
    return d;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::parse_error& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
}

}  // namespace

BenchConfig bench_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
    try {
        reject_unknown(doc, {"label", "stream", "classifier", "detector", "replications", "seed",
                             "threads", "trace_window", "table", "reference"},
                       "experiment config");
        BenchConfig c;
        auto& e = c.experiment;
        e.stream = stream_from_json(doc.at("stream"), base_dir);
        e.classifier = classifier_from_json(doc.at("classifier"));
        if (doc.contains("detector")) e.detector = detector_from_json(doc["detector"]);
        if (doc.contains("replications")) e.replications = doc["replications"].get<long>();
        if (doc.contains("seed")) e.base_seed = doc["seed"].get<std::uint64_t>();
        if (doc.contains("threads")) e.threads = doc["threads"].get<unsigned>();
        if (doc.contains("trace_window")) e.trace_window = doc["trace_window"].get<long>();
        if (doc.contains("table")) c.table = resolve(base_dir, doc["table"].get<std::string>());
        c.label = doc.value("label", std::string("experiment"));
        return c;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("experiment config: ") + ex.what());
    }
}

BenchConfig load_bench_config(const std::filesystem::path& path) {
    auto config = bench_config_from_json(read_json_file(path), path.parent_path());
    if (config.label == "experiment") config.label = path.stem().string();
    return config;
}

std::filesystem::path preset_path(const std::filesystem::path& preset_dir, const std::string& name) {
    auto path = preset_dir / (name + ".json");
    if (!std::filesystem::exists(path))
        throw ConfigError("no preset named '" + name + "' in " + preset_dir.string());
    return path;
}

std::vector<std::string> list_presets(const std::filesystem::path& preset_dir) {
    std::vector<std::string> names;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(preset_dir, ec))
        if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
    if (ec) throw IoError("cannot list presets in " + preset_dir.string());
    std::sort(names.begin(), names.end());
    return names;
}

CalibrationTable table_for(const BenchConfig& config) {
    return config.table ? load_table(*config.table) : CalibrationTable::paper();
}

int cmd_bench(const BenchOptions& options, std::ostream& out, std::ostream& log) {
    if (options.list) {
        for (const auto& name : list_presets(options.preset_dir)) out << name << "\n";
        return kOk;
    }
    if (options.preset.has_value() == options.config.has_value())
        throw UsageError("bench needs exactly one of --preset or --config");
    BenchConfig config = options.preset
                             ? load_bench_config(preset_path(options.preset_dir, *options.preset))
                             : load_bench_config(*options.config);
    auto& e = config.experiment;
    if (options.table) config.table = options.table;
    if (options.reps) e.replications = *options.reps;
    if (options.threads) e.threads = *options.threads;
    if (options.trace_out && e.trace_window == 0) e.trace_window = 100;
    // A seed in the file counts as explicit; the flag wins over both.
    e.base_seed = options.seed ? *options.seed : e.base_seed;

    const auto table = table_for(config);
    const auto report = run_experiment(e, table);
    out << format_report_table(config.label, report) << "\n";

    if (options.json_out) {
        auto doc = report_to_json(report);
        doc["label"] = config.label;
        doc["seed"] = e.base_seed;
        write_file(*options.json_out, doc.dump(2) + "\n");
    }
    if (options.trace_out) {
        std::ostringstream csv;
        csv << "t,accuracy\n";
        for (const auto& [t, acc] : report.window_trace) csv << t << ',' << fmt6(acc) << '\n';
        write_file(*options.trace_out, csv.str());
    }
    (void)log;
    return kOk;
}

// ---------------------------------------------------------------- monitor

long run_monitor(const CalibrationTable& table, const MonitorOptions& options, std::istream& in,
                 std::ostream& out) {
    EwmaChart chart(options.detector, table);
    std::string line;
    std::string buf;
    buf.reserve(128);
    long line_no = 0;
    long n = 0;
    long detections = 0;
    char num[32];
    auto put = [&](double v) {
        auto [ptr, ec] = std::to_chars(num, num + sizeof num, v, std::chars_format::general, 6);
        (void)ec;
        buf.push_back(' ');
        buf.append(num, ptr);
    };

    while (std::getline(in, line)) {
        ++line_no;
        std::string_view v(line);
        while (!v.empty() && (v.back() == '\r' || v.back() == ' ' || v.back() == '\t'))
            v.remove_suffix(1);
        while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
        if (v.empty() || v.front() == '#') continue;
        if (v.size() != 1 || (v[0] != '0' && v[0] != '1'))
            throw ParseError("line " + std::to_string(line_no) + ": expected 0 or 1, got '" +
                             std::string(v) + "'");
        ++n;
        const Status status = chart.step(v[0] - '0');
        const auto& s = chart.state();

        buf.clear();
        auto [ptr, ec] = std::to_chars(num, num + sizeof num, s.t);
        (void)ec;
        buf.append(num, ptr);
        buf.push_back(' ');
        buf.append(to_string(status));
        put(s.z);
        put(s.p_hat);
        put(s.limit);
        buf.push_back('\n');
        if (status == Status::Drift) {
            ++detections;
            buf.append("detection n=");
            auto [p1, e1] = std::to_chars(num, num + sizeof num, n);
            (void)e1;
            buf.append(num, p1);
            buf.append(" t=");
            auto [p2, e2] = std::to_chars(num, num + sizeof num, s.t);
            (void)e2;
            buf.append(num, p2);
            buf.push_back('\n');
        }
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (status == Status::Drift) {
            if (!options.auto_reset) break;
            chart.reset();
        }
    }
    if (in.bad()) throw IoError("read error on input");
    return detections;
}

int cmd_monitor(const MonitorOptions& options, std::istream& in, std::ostream& out,
                std::ostream& log) {
    const auto table = options.table ? load_table(*options.table) : CalibrationTable::paper();
    if (!options.table) log << "note: no --table given, using the built-in published curves\n";
    run_monitor(table, options, in, out);
    out.flush();
    return kOk;
}

std::optional<StatusLine> parse_status_line(const std::string& line) {
    std::istringstream ss(line);
    StatusLine s;
    std::string status;
    if (!(ss >> s.t >> status >> s.z >> s.p_hat >> s.limit)) return std::nullopt;
    try {
        s.status = status_from_string(status);
    } catch (const ParseError&) {
        return std::nullopt;
    }
    return s;
}

}  // namespace ecdd::cli
