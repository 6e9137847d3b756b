#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecdd/calibration.hpp"
#include "ecdd/error.hpp"

namespace ecdd {

enum class Status { InControl, Warning, Drift };

std::string_view to_string(Status status) noexcept;
Status status_from_string(std::string_view name);

struct DetectorConfig {
    double lambda = 0.2;
    double target_arl0 = 100.0;
    /// W_t = warning_fraction * L_t.
    double warning_fraction = 0.5;
    /// Drift is suppressed while t < min_observations.
    long min_observations = 30;
    /// nullopt keeps every buffered observation; otherwise the most recent ones.
    std::optional<std::size_t> warning_buffer_cap;

    void validate() const;
};

/// Default cap when a bounded warning buffer is requested without a size.
inline constexpr std::size_t kDefaultWarningBufferCap = 32;

/// The fixed-size part of the detector state. Every step is O(1).
struct ChartState {
    long t = 0;
    long error_count = 0;
    double z = 0.0;
    double p_hat = 0.0;
    double sigma_x = 0.0;
    double sigma_z = 0.0;
    /// Control limit L_t used on the latest step.
    double limit = 0.0;
    /// (1 - lambda)^(2t), carried so sigma_z needs no pow().
    double decay = 1.0;
    Status status = Status::InControl;
};

/// Bernoulli EWMA chart with an online estimate of the pre-change error rate
/// and a control limit that tracks that estimate through a calibration curve.
class EwmaChart {
  public:
    /// Throws ConfigError for an invalid config or a table without its curve.
    EwmaChart(const DetectorConfig& config, const CalibrationTable& table);

    /// Feeds one error bit (0 correct, 1 wrong). Throws InputError for other
    /// values and UsageError once Drift has been signalled without a reset.
    Status step(int error_bit);

    void reset() noexcept { state_ = ChartState{}; }

    const ChartState& state() const noexcept { return state_; }
    const DetectorConfig& config() const noexcept { return config_; }
    const TableEntry& curve() const noexcept { return curve_; }

    /// Drift threshold p_hat + L_t * sigma_z for the latest step.
    double drift_threshold() const noexcept {
        return state_.p_hat + state_.limit * state_.sigma_z;
    }
    double warning_threshold() const noexcept {
        return state_.p_hat + config_.warning_fraction * state_.limit * state_.sigma_z;
    }

    /// Restores a previously captured state; the caller guarantees it came
    /// from a chart with the same configuration.
    void restore(const ChartState& state);

  private:
    DetectorConfig config_;
    TableEntry curve_;
    double keep_;
    double keep_sq_;
    double shrink_;
    ChartState state_;
};

/// EWMA chart plus the warning buffer used to warm-start a classifier after a
/// detection. `Payload` is whatever the caller wants back after a reset.
template <typename Payload>
class Detector {
  public:
    Detector(const DetectorConfig& config, const CalibrationTable& table) : chart_(config, table) {}

    Status step(int error_bit) { return step(error_bit, std::nullopt); }

    Status step(int error_bit, std::optional<Payload> payload) {
        const Status status = chart_.step(error_bit);
        if (status == Status::InControl) {
            buffer_.clear();
        } else if (payload) {
            buffer_.push_back(std::move(*payload));
            const auto& cap = chart_.config().warning_buffer_cap;
            if (cap && buffer_.size() > *cap) buffer_.pop_front();
        }
        return status;
    }

    /// Returns the detector to its initial state and hands back the buffer.
    std::vector<Payload> reset() {
        std::vector<Payload> drained(std::make_move_iterator(buffer_.begin()),
                                     std::make_move_iterator(buffer_.end()));
        buffer_.clear();
        chart_.reset();
        return drained;
    }

    const EwmaChart& chart() const noexcept { return chart_; }
    const ChartState& state() const noexcept { return chart_.state(); }
    Status status() const noexcept { return chart_.state().status; }
    const std::deque<Payload>& warning_buffer() const noexcept { return buffer_; }

    /// Structured snapshot; requires `Payload` to be JSON-convertible.
    nlohmann::json snapshot() const;
    /// Restores chart state and buffer from `snapshot()` output.
    void restore(const nlohmann::json& doc);

  private:
    EwmaChart chart_;
    std::deque<Payload> buffer_;
};

nlohmann::json chart_to_json(const EwmaChart& chart);
ChartState chart_state_from_json(const nlohmann::json& doc, const DetectorConfig& expected);

template <typename Payload>
nlohmann::json Detector<Payload>::snapshot() const {
    nlohmann::json doc = chart_to_json(chart_);
    doc["warning_buffer"] = nlohmann::json::array();
    for (const auto& p : buffer_) doc["warning_buffer"].push_back(p);
    return doc;
}

template <typename Payload>
void Detector<Payload>::restore(const nlohmann::json& doc) {
    chart_.restore(chart_state_from_json(doc, chart_.config()));
    buffer_.clear();
    try {
        for (const auto& item : doc.at("warning_buffer")) buffer_.push_back(item.get<Payload>());
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("malformed detector snapshot buffer: ") + ex.what());
    }
}

/// Closed-form standard deviation of the EWMA statistic after t steps for an
/// iid Bernoulli(p) input.
double ewma_sigma(double p, double lambda, long t);

}  // namespace ecdd
