#include "ecdd/streams.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <string_view>

#include "ecdd/error.hpp"

namespace ecdd {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::optional<double> parse_real(std::string_view text) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) return std::nullopt;
    return value;
}

std::size_t parse_index(const std::string& text) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ConfigError("column '" + text + "' is not a zero-based index (file has no header)");
    return value;
}

}  // namespace

CsvGenerator electricity_preset(std::filesystem::path path) {
    CsvGenerator csv;
    csv.path = std::move(path);
    csv.feature_columns = {"nswdemand", "vicdemand"};
    csv.label_column = "class";
    csv.has_header = true;
    // Class 0: price rose relative to the 24 hour average; class 1 otherwise.
    csv.label_map = {{"UP", 0}, {"DOWN", 1}, {"up", 0}, {"down", 1}};
    return csv;
}

void StreamSpec::validate() const {
    if (synthetic() ? length < 1 : length < 0)
        throw ConfigError("stream length must be at least 1 (0 reads every CSV row)");
    if (change_point) {
        if (*change_point < 1) throw ConfigError("change point must be positive");
        if (synthetic() && *change_point >= length)
            throw ConfigError("change point must precede the end of the stream");
    }
    if (drift_ramp) {
        if (!synthetic()) throw ConfigError("drift ramps apply only to synthetic generators");
        if (drift_ramp->start >= drift_ramp->end)
            throw ConfigError("drift ramp start must precede its end");
    }
    if (const auto* csv = std::get_if<CsvGenerator>(&generator)) {
        if (csv->feature_columns.empty()) throw ConfigError("CSV stream needs feature columns");
        if (csv->label_column.empty()) throw ConfigError("CSV stream needs a label column");
    }
}

double label_switch_probability(const StreamSpec& spec, long t) noexcept {
    if (spec.drift_ramp) {
        const auto [start, end] = *spec.drift_ramp;
        const double q = static_cast<double>(t - start) / static_cast<double>(end - start);
        return std::clamp(q, 0.0, 1.0);
    }
    if (spec.change_point && t > *spec.change_point) return 1.0;
    return 0.0;
}

// ---------------------------------------------------------------------------

SyntheticStream::SyntheticStream(StreamSpec spec)
    : spec_(std::move(spec)),
      feature_rng_(derive_seed(spec_.seed, 0)),
      switch_rng_(derive_seed(spec_.seed, 1)) {
    spec_.validate();
    if (!spec_.synthetic()) throw ConfigError("SyntheticStream needs a GAUSS or SINE generator");
}

std::optional<LabeledSample> SyntheticStream::next() {
    if (t_ >= spec_.length) return std::nullopt;
    ++t_;

    LabeledSample s;
    int clean_label = 0;
    if (std::holds_alternative<GaussGenerator>(spec_.generator)) {
        clean_label = static_cast<int>(feature_rng_() >> 63);
        const double a = normal_(feature_rng_);
        const double b = normal_(feature_rng_);
        if (clean_label == 0)
            s.features = {a, b};
        else
            s.features = {2.0 + 2.0 * a, 2.0 * b};
    } else {
        const double x = uniform01(feature_rng_);
        const double y = uniform01(feature_rng_);
        s.features = {x, y};
        clean_label = y < std::sin(x) ? 0 : 1;
    }
    // Independent draw, so the feature sequence does not depend on the drift shape.
    const bool switched = uniform01(switch_rng_) < label_switch_probability(spec_, t_);
    s.label = switched ? 1 - clean_label : clean_label;
    return s;
}

// ---------------------------------------------------------------------------

CsvStream::CsvStream(CsvGenerator csv, std::optional<long> max_rows)
    : csv_(std::move(csv)), max_rows_(max_rows), in_(csv_.path) {
    if (!in_) throw IoError("cannot open CSV file " + csv_.path.string());

    if (csv_.has_header) {
        std::string header;
        if (!std::getline(in_, header)) throw ParseError(csv_.path.string() + ": missing header row");
        ++line_no_;
        const auto names = split_row(header);
        column_count_ = names.size();
        auto lookup = [&](const std::string& name) {
            const auto it = std::find(names.begin(), names.end(), name);
            if (it == names.end())
                throw ParseError(csv_.path.string() + ": no column named '" + name + "'");
            return static_cast<std::size_t>(it - names.begin());
        };
        for (const auto& c : csv_.feature_columns) feature_idx_.push_back(lookup(c));
        label_idx_ = lookup(csv_.label_column);
    } else {
        for (const auto& c : csv_.feature_columns) feature_idx_.push_back(parse_index(c));
        label_idx_ = parse_index(csv_.label_column);
    }
}

std::optional<LabeledSample> CsvStream::next() {
    if (max_rows_ && emitted_ >= *max_rows_) return std::nullopt;
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        auto fail = [&](const std::string& what) -> ParseError {
            return ParseError(csv_.path.string() + ": row " + std::to_string(line_no_) + ": " +
                              what);
        };
        if (column_count_ != 0 && cells.size() != column_count_)
            throw fail("expected " + std::to_string(column_count_) + " columns, found " +
                       std::to_string(cells.size()));
        const auto needed = std::max(label_idx_,
                                     *std::max_element(feature_idx_.begin(), feature_idx_.end()));
        if (cells.size() <= needed) throw fail("too few columns");

        LabeledSample s;
        s.features.reserve(feature_idx_.size());
        for (auto idx : feature_idx_) {
            const auto v = parse_real(cells[idx]);
            if (!v) throw fail("non-numeric feature '" + std::string(cells[idx]) + "'");
            s.features.push_back(*v);
        }
        const std::string raw(cells[label_idx_]);
        if (const auto it = csv_.label_map.find(raw); it != csv_.label_map.end())
            s.label = it->second;
        else if (raw == "0" || raw == "1")
            s.label = raw == "1" ? 1 : 0;
        else
            throw fail("label '" + raw + "' is not binary");
        ++emitted_;
        return s;
    }
    if (in_.bad()) throw IoError(csv_.path.string() + ": read error");
    return std::nullopt;
}

// ---------------------------------------------------------------------------

std::unique_ptr<StreamSource> gauss_stream(const StreamSpec& spec) {
    if (!std::holds_alternative<GaussGenerator>(spec.generator))
        throw ConfigError("gauss_stream needs a GAUSS generator");
    return std::make_unique<SyntheticStream>(spec);
}

std::unique_ptr<StreamSource> sine_stream(const StreamSpec& spec) {
    if (!std::holds_alternative<SineGenerator>(spec.generator))
        throw ConfigError("sine_stream needs a SINE generator");
    return std::make_unique<SyntheticStream>(spec);
}

std::unique_ptr<StreamSource> csv_stream(const StreamSpec& spec) {
    spec.validate();
    const auto* csv = std::get_if<CsvGenerator>(&spec.generator);
    if (csv == nullptr) throw ConfigError("csv_stream needs a CSV generator");
    // A CSV length acts as a row limit only when explicitly positive.
    return std::make_unique<CsvStream>(*csv, spec.length > 0 ? std::optional(spec.length)
                                                             : std::nullopt);
}

std::unique_ptr<StreamSource> open_stream(const StreamSpec& spec) {
    if (spec.synthetic()) return std::make_unique<SyntheticStream>(spec);
    return csv_stream(spec);
}

std::vector<LabeledSample> collect(StreamSource& source) {
    std::vector<LabeledSample> out;
    while (auto s = source.next()) out.push_back(std::move(*s));
    return out;
}

}  // namespace ecdd
