#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecdd/calibration.hpp"
#include "ecdd/classifiers.hpp"
#include "ecdd/detector.hpp"
#include "ecdd/streams.hpp"

namespace ecdd {

struct DetectorSpec {
    enum class Mode { None, Ecdd, EcddWt };
    Mode mode = Mode::None;
    DetectorConfig config;
};

struct ExperimentSpec {
    StreamSpec stream;
    ClassifierSpec classifier;
    DetectorSpec detector;
    long replications = 1;
    std::uint64_t base_seed = 1;
    /// Sliding-window width for the accuracy trace of replication 0; 0 disables it.
    long trace_window = 0;
    /// Keep per-observation correctness for paired comparisons.
    bool keep_outcomes = false;
    /// Worker threads; results are identical for any value.
    unsigned threads = 1;

    void validate() const;
};

struct Detection {
    long replication = 0;
    long t = 0;

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct ExperimentReport {
    double mean_accuracy = 0.0;
    /// Standard deviation of the per-replication accuracies.
    double std_error = 0.0;
    std::vector<double> per_replication_accuracy;
    std::vector<std::uint64_t> replication_seeds;
    std::vector<Detection> detections;
    std::vector<std::pair<long, double>> window_trace;
    /// outcomes[r][t] = 1 when observation t of replication r was classified correctly.
    std::vector<std::vector<std::uint8_t>> outcomes;
};

/// Seed of the stream used by replication `index`.
std::uint64_t replication_seed(std::uint64_t base_seed, long index) noexcept;

/// Prequential run: predict, score, update the classifier, then step the
/// detector; on Drift the classifier and detector are reset (ECDD-WT warm-starts
/// the classifier from the warning buffer).
ExperimentReport run_experiment(const ExperimentSpec& spec, const CalibrationTable& table);

/// Continuity-corrected McNemar statistic (|b - c| - 1)^2 / (b + c); 0 when b + c = 0.
double mcnemar(long b, long c);
/// Upper tail of the chi-square(1) distribution.
double mcnemar_p_value(double statistic);

struct PairedComparison {
    long a_only = 0;  // b: A correct, B wrong
    long b_only = 0;  // c: B correct, A wrong
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Pairs outcomes observation by observation; both reports need `outcomes`
/// recorded over identical streams.
PairedComparison compare_paired(const ExperimentReport& a, const ExperimentReport& b);

/// Mean correctness over each forward window [t, t + w - 1], t = 1..n - w + 1.
/// `errors` holds 1 for a misclassification.
std::vector<std::pair<long, double>> window_accuracy(const std::vector<std::uint8_t>& errors,
                                                     long w = 100);

nlohmann::json report_to_json(const ExperimentReport& report, bool include_replications = true);
std::string format_report_table(const std::string& label, const ExperimentReport& report);

}  // namespace ecdd
