#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "ecdd/classifiers.hpp"
#include "ecdd/random.hpp"

namespace ecdd {

struct GaussGenerator {};
struct SineGenerator {};

/// Columns are header names when `has_header` is set, zero-based indices otherwise.
struct CsvGenerator {
    std::filesystem::path path;
    std::vector<std::string> feature_columns;
    std::string label_column;
    bool has_header = true;
    /// Optional mapping from raw label text to {0,1}; "0"/"1" are always accepted.
    std::map<std::string, int> label_map;
};

/// Column layout of the public Electricity (elec2) CSV export.
CsvGenerator electricity_preset(std::filesystem::path path);

struct DriftRamp {
    long start = 0;
    long end = 0;
};

struct StreamSpec {
    std::variant<GaussGenerator, SineGenerator, CsvGenerator> generator;
    /// Labels are reversed for t > change_point (t is 1-based).
    std::optional<long> change_point;
    /// Number of samples; for CSV streams a row limit, 0 meaning the whole file.
    long length = 400;
    /// Label-switch probability rising linearly from 0 at start to 1 at end.
    std::optional<DriftRamp> drift_ramp;
    std::uint64_t seed = 1;

    bool synthetic() const noexcept { return !std::holds_alternative<CsvGenerator>(generator); }
    void validate() const;
};

/// Probability that the label of the t-th synthetic sample is switched.
double label_switch_probability(const StreamSpec& spec, long t) noexcept;

/// Pull-based source of labeled samples; `next()` returns nullopt at the end.
class StreamSource {
  public:
    virtual ~StreamSource() = default;
    virtual std::optional<LabeledSample> next() = 0;
};

class SyntheticStream final : public StreamSource {
  public:
    explicit SyntheticStream(StreamSpec spec);
    std::optional<LabeledSample> next() override;

  private:
    StreamSpec spec_;
    long t_ = 0;
    Rng feature_rng_;
    Rng switch_rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

class CsvStream final : public StreamSource {
  public:
    CsvStream(CsvGenerator csv, std::optional<long> max_rows);
    std::optional<LabeledSample> next() override;

  private:
    CsvGenerator csv_;
    std::optional<long> max_rows_;
    std::ifstream in_;
    std::vector<std::size_t> feature_idx_;
    std::size_t label_idx_ = 0;
    std::size_t column_count_ = 0;
    long line_no_ = 0;
    long emitted_ = 0;
};

std::unique_ptr<StreamSource> gauss_stream(const StreamSpec& spec);
std::unique_ptr<StreamSource> sine_stream(const StreamSpec& spec);
std::unique_ptr<StreamSource> csv_stream(const StreamSpec& spec);
/// Dispatches on the generator kind.
std::unique_ptr<StreamSource> open_stream(const StreamSpec& spec);

/// Drains a source into memory.
std::vector<LabeledSample> collect(StreamSource& source);

}  // namespace ecdd
