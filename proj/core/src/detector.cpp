#include "ecdd/detector.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace ecdd {

std::string_view to_string(Status status) noexcept {
    switch (status) {
        case Status::InControl: return "InControl";
        case Status::Warning: return "Warning";
        case Status::Drift: return "Drift";
    }
    return "InControl";
}

Status status_from_string(std::string_view name) {
    if (name == "InControl") return Status::InControl;
    if (name == "Warning") return Status::Warning;
    if (name == "Drift") return Status::Drift;
    throw ParseError("unknown detector status '" + std::string(name) + "'");
}

void DetectorConfig::validate() const {
    if (!(lambda > 0.0 && lambda < 1.0))
        throw ConfigError("lambda must lie strictly inside (0,1), got " + std::to_string(lambda));
    if (!(target_arl0 > 1.0))
        throw ConfigError("target_arl0 must exceed 1, got " + std::to_string(target_arl0));
    if (!(warning_fraction > 0.0 && warning_fraction <= 1.0))
        throw ConfigError("warning_fraction must lie in (0,1], got " +
                          std::to_string(warning_fraction));
    if (min_observations < 0) throw ConfigError("min_observations must be nonnegative");
    if (warning_buffer_cap && *warning_buffer_cap == 0)
        throw ConfigError("warning_buffer_cap must be positive");
}

namespace {

// A detector without a curve for its (lambda, ARL0) is misconfigured.
const TableEntry& curve_for(const DetectorConfig& config, const CalibrationTable& table) {
    config.validate();
    const TableEntry* entry = table.find(config.lambda, config.target_arl0);
    if (entry == nullptr) {
        std::ostringstream msg;
        msg << "calibration table has no curve for lambda=" << config.lambda
            << ", ARL0=" << config.target_arl0;
        throw ConfigError(msg.str());
    }
    return *entry;
}

}  // namespace

EwmaChart::EwmaChart(const DetectorConfig& config, const CalibrationTable& table)
    : config_(config),
      curve_(curve_for(config, table)),
      keep_(1.0 - config.lambda),
      keep_sq_(keep_ * keep_),
      shrink_(config.lambda / (2.0 - config.lambda)) {}

Status EwmaChart::step(int error_bit) {
    if (error_bit != 0 && error_bit != 1)
        throw InputError("error bit must be 0 or 1, got " + std::to_string(error_bit));
    if (state_.status == Status::Drift)
        throw UsageError("detector signalled drift; reset it before feeding more observations");

    ChartState& s = state_;
    ++s.t;
    s.error_count += error_bit;
    // Exact running mean of the error bits since the last reset.
    s.p_hat = static_cast<double>(s.error_count) / static_cast<double>(s.t);
    s.sigma_x = std::sqrt(s.p_hat * (1.0 - s.p_hat));
    s.decay *= keep_sq_;
    s.sigma_z = std::sqrt(shrink_ * (1.0 - s.decay)) * s.sigma_x;
    s.limit = curve_.evaluate(s.p_hat);
    s.z = keep_ * s.z + config_.lambda * error_bit;

    const double drift_line = s.p_hat + s.limit * s.sigma_z;
    const double warning_line = s.p_hat + config_.warning_fraction * s.limit * s.sigma_z;
    if (s.z > drift_line && s.t >= config_.min_observations)
        s.status = Status::Drift;
    else if (s.z > warning_line)
        s.status = Status::Warning;
    else
        s.status = Status::InControl;
    return s.status;
}

void EwmaChart::restore(const ChartState& state) { state_ = state; }

nlohmann::json chart_to_json(const EwmaChart& chart) {
    const auto& c = chart.config();
    const auto& s = chart.state();
    nlohmann::json config{{"lambda", c.lambda},
                          {"target_arl0", c.target_arl0},
                          {"warning_fraction", c.warning_fraction},
                          {"min_observations", c.min_observations}};
    config["warning_buffer_cap"] =
        c.warning_buffer_cap ? nlohmann::json(*c.warning_buffer_cap) : nlohmann::json(nullptr);
    return {{"version", 1},
            {"config", config},
            {"t", s.t},
            {"error_count", s.error_count},
            {"z", s.z},
            {"p_hat", s.p_hat},
            {"sigma_x", s.sigma_x},
            {"sigma_z", s.sigma_z},
            {"limit", s.limit},
            {"decay", s.decay},
            {"status", std::string(to_string(s.status))}};
}

ChartState chart_state_from_json(const nlohmann::json& doc, const DetectorConfig& expected) {
    try {
        if (doc.at("version").get<int>() != 1) throw ParseError("unsupported snapshot version");
        const auto& c = doc.at("config");
        if (c.at("lambda").get<double>() != expected.lambda ||
            c.at("target_arl0").get<double>() != expected.target_arl0 ||
            c.at("warning_fraction").get<double>() != expected.warning_fraction ||
            c.at("min_observations").get<long>() != expected.min_observations)
            throw ConfigError("snapshot was taken with a different detector configuration");
        ChartState s;
        s.t = doc.at("t").get<long>();
        s.error_count = doc.at("error_count").get<long>();
        s.z = doc.at("z").get<double>();
        s.p_hat = doc.at("p_hat").get<double>();
        s.sigma_x = doc.at("sigma_x").get<double>();
        s.sigma_z = doc.at("sigma_z").get<double>();
        s.limit = doc.at("limit").get<double>();
        s.decay = doc.at("decay").get<double>();
        s.status = status_from_string(doc.at("status").get<std::string>());
        if (s.t < 0 || s.error_count < 0 || s.error_count > s.t || s.z < 0.0 || s.z > 1.0)
            throw ParseError("snapshot state is inconsistent");
        return s;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("malformed detector snapshot: ") + ex.what());
    }
}

double ewma_sigma(double p, double lambda, long t) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("p must lie in [0,1]");
    if (!(lambda > 0.0 && lambda < 1.0)) throw InputError("lambda must lie strictly inside (0,1)");
    if (t < 1) throw InputError("t must be positive");
    const double decay = std::pow(1.0 - lambda, 2.0 * static_cast<double>(t));
    return std::sqrt(p * (1.0 - p) * (lambda / (2.0 - lambda)) * (1.0 - decay));
}

}  // namespace ecdd
