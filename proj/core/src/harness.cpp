#include "ecdd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include "ecdd/error.hpp"
#include "ecdd/random.hpp"

namespace ecdd {

namespace {

struct ReplicationResult {
    double accuracy = 0.0;
    std::vector<long> detections;
    std::vector<std::uint8_t> outcomes;
};

ReplicationResult run_replication(const ExperimentSpec& spec, const CalibrationTable& table,
                                  std::uint64_t seed, bool keep_outcomes) {
    StreamSpec stream_spec = spec.stream;
    stream_spec.seed = seed;
    auto stream = open_stream(stream_spec);
    auto classifier = make_classifier(spec.classifier);

    const bool use_detector = spec.detector.mode != DetectorSpec::Mode::None;
    const bool warm_start = spec.detector.mode == DetectorSpec::Mode::EcddWt;
    std::optional<Detector<LabeledSample>> detector;
    if (use_detector) detector.emplace(spec.detector.config, table);

    ReplicationResult out;
    long t = 0;
    long correct = 0;
    while (auto sample = stream->next()) {
        ++t;
        // Cold-start rule: an untrained classifier predicts class 0.
        const int predicted = classifier->trained() ? classifier->predict(sample->features) : 0;
        const int error_bit = predicted == sample->label ? 0 : 1;
        correct += 1 - error_bit;
        if (keep_outcomes) out.outcomes.push_back(static_cast<std::uint8_t>(1 - error_bit));
        classifier->update(*sample);

        if (!detector) continue;
        const Status status = warm_start ? detector->step(error_bit, std::move(*sample))
                                         : detector->step(error_bit);
        if (status == Status::Drift) {
            out.detections.push_back(t);
            auto buffered = detector->reset();
            classifier->reset();
            if (warm_start) classifier->warm_start(buffered);
        }
    }
    if (t == 0) throw InputError("stream produced no samples");
    out.accuracy = static_cast<double>(correct) / static_cast<double>(t);
    return out;
}

}  // namespace

void ExperimentSpec::validate() const {
    if (replications < 1) throw ConfigError("replications must be at least 1");
    if (trace_window < 0) throw ConfigError("trace window must be nonnegative");
    stream.validate();
    if (detector.mode != DetectorSpec::Mode::None) detector.config.validate();
}

std::uint64_t replication_seed(std::uint64_t base_seed, long index) noexcept {
    return derive_seed(base_seed, static_cast<std::uint64_t>(index));
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const CalibrationTable& table) {
    spec.validate();
    if (spec.detector.mode != DetectorSpec::Mode::None)
        (void)EwmaChart(spec.detector.config, table);  // fail before spawning workers

    const auto reps = static_cast<std::size_t>(spec.replications);
    std::vector<ReplicationResult> results(reps);
    std::vector<std::uint64_t> seeds(reps);
    for (std::size_t r = 0; r < reps; ++r) seeds[r] = replication_seed(spec.base_seed, static_cast<long>(r));

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const bool keep = spec.keep_outcomes || (r == 0 && spec.trace_window > 0);
            results[r] = run_replication(spec, table, seeds[r], keep);
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(spec.threads, static_cast<unsigned>(reps)));
    if (threads == 1) {
        work(0, reps);
    } else {
        std::vector<std::exception_ptr> failures(threads);
        {
            std::vector<std::jthread> pool;
            const std::size_t chunk = (reps + threads - 1) / threads;
            for (unsigned w = 0; w < threads; ++w) {
                const std::size_t begin = w * chunk;
                const std::size_t end = std::min(reps, begin + chunk);
                pool.emplace_back([&, w, begin, end] {
                    try {
                        work(begin, end);
                    } catch (...) {
                        failures[w] = std::current_exception();
                    }
                });
            }
        }
        for (auto& f : failures)
            if (f) std::rethrow_exception(f);
    }

    // Reduction in replication order keeps the report bit-identical.
    ExperimentReport report;
    report.replication_seeds = seeds;
    report.per_replication_accuracy.reserve(reps);
    double sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
        report.per_replication_accuracy.push_back(results[r].accuracy);
        sum += results[r].accuracy;
        for (long t : results[r].detections) report.detections.push_back({static_cast<long>(r), t});
    }
    report.mean_accuracy = sum / static_cast<double>(reps);
    if (reps > 1) {
        double ss = 0.0;
        for (double a : report.per_replication_accuracy)
            ss += (a - report.mean_accuracy) * (a - report.mean_accuracy);
        report.std_error = std::sqrt(ss / static_cast<double>(reps - 1));
    }

    if (spec.trace_window > 0) {
        std::vector<std::uint8_t> errors;
        errors.reserve(results[0].outcomes.size());
        for (auto ok : results[0].outcomes) errors.push_back(static_cast<std::uint8_t>(1 - ok));
        if (static_cast<long>(errors.size()) >= spec.trace_window)
            report.window_trace = window_accuracy(errors, spec.trace_window);
    }
    if (spec.keep_outcomes) {
        report.outcomes.reserve(reps);
        for (auto& r : results) report.outcomes.push_back(std::move(r.outcomes));
    }
    return report;
}

double mcnemar(long b, long c) {
    if (b < 0 || c < 0) throw InputError("discordant counts must be nonnegative");
    if (b + c == 0) return 0.0;
    const double diff = std::abs(static_cast<double>(b - c)) - 1.0;
    return diff * diff / static_cast<double>(b + c);
}

double mcnemar_p_value(double statistic) {
    return std::erfc(std::sqrt(std::max(statistic, 0.0) / 2.0));
}

PairedComparison compare_paired(const ExperimentReport& a, const ExperimentReport& b) {
    if (a.outcomes.empty() || b.outcomes.empty())
        throw UsageError("paired comparison needs reports recorded with keep_outcomes");
    if (a.outcomes.size() != b.outcomes.size() || a.replication_seeds != b.replication_seeds)
        throw InputError("paired comparison needs identical replications on both sides");
    PairedComparison out;
    for (std::size_t r = 0; r < a.outcomes.size(); ++r) {
        const auto& oa = a.outcomes[r];
        const auto& ob = b.outcomes[r];
        if (oa.size() != ob.size()) throw InputError("replication lengths differ");
        for (std::size_t t = 0; t < oa.size(); ++t) {
            if (oa[t] && !ob[t]) ++out.a_only;
            if (!oa[t] && ob[t]) ++out.b_only;
        }
    }
    out.statistic = mcnemar(out.a_only, out.b_only);
    out.p_value = mcnemar_p_value(out.statistic);
    return out;
}

std::vector<std::pair<long, double>> window_accuracy(const std::vector<std::uint8_t>& errors,
                                                     long w) {
    const auto n = static_cast<long>(errors.size());
    if (w < 1) throw InputError("window width must be positive");
    if (w > n) throw InputError("window width " + std::to_string(w) +
                                " exceeds stream length " + std::to_string(n));
    std::vector<std::pair<long, double>> out;
    out.reserve(static_cast<std::size_t>(n - w + 1));
    long wrong = 0;
    for (long i = 0; i < w; ++i) wrong += errors[static_cast<std::size_t>(i)] ? 1 : 0;
    for (long t = 1; t + w - 1 <= n; ++t) {
        out.emplace_back(t, 1.0 - static_cast<double>(wrong) / static_cast<double>(w));
        if (t + w - 1 < n) {
            wrong -= errors[static_cast<std::size_t>(t - 1)] ? 1 : 0;
            wrong += errors[static_cast<std::size_t>(t + w - 1)] ? 1 : 0;
        }
    }
    return out;
}

nlohmann::json report_to_json(const ExperimentReport& report, bool include_replications) {
    nlohmann::json doc{{"mean_accuracy", report.mean_accuracy},
                       {"std_error", report.std_error},
                       {"replications", report.per_replication_accuracy.size()},
                       {"detection_count", report.detections.size()}};
    if (include_replications) {
        doc["per_replication_accuracy"] = report.per_replication_accuracy;
        doc["replication_seeds"] = report.replication_seeds;
        nlohmann::json det = nlohmann::json::array();
        for (const auto& d : report.detections) det.push_back({d.replication, d.t});
        doc["detections"] = det;
    }
    if (!report.window_trace.empty()) {
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& [t, acc] : report.window_trace) trace.push_back({t, acc});
        doc["window_trace"] = trace;
    }
    return doc;
}

std::string format_report_table(const std::string& label, const ExperimentReport& report) {
    std::ostringstream out;
    const auto reps = report.per_replication_accuracy.size();
    out << std::left << std::setw(36) << label << std::right << std::fixed << std::setprecision(4)
        << std::setw(8) << report.mean_accuracy << "  (" << std::setprecision(3)
        << report.std_error << ")  reps=" << reps << "  detections/rep="
        << std::setprecision(2)
        << (reps ? static_cast<double>(report.detections.size()) / static_cast<double>(reps) : 0.0);
    return out.str();
}

}  // namespace ecdd
