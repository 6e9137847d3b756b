#include "ecdd/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "ecdd/error.hpp"

namespace ecdd {

void to_json(nlohmann::json& j, const LabeledSample& s) {
    j = nlohmann::json{{"features", s.features}, {"label", s.label}};
}

void from_json(const nlohmann::json& j, LabeledSample& s) {
    j.at("features").get_to(s.features);
    j.at("label").get_to(s.label);
}

namespace {

void check_label(int label) {
    if (label != 0 && label != 1)
        throw InputError("class label must be 0 or 1, got " + std::to_string(label));
}

void check_dimension(std::size_t expected, std::size_t got) {
    if (expected != got)
        throw InputError("feature dimension mismatch: expected " + std::to_string(expected) +
                         ", got " + std::to_string(got));
}

}  // namespace

// ---------------------------------------------------------------------------
// StreamingLda

void StreamingLda::update(const LabeledSample& sample) {
    check_label(sample.label);
    if (sample.features.empty()) throw InputError("empty feature vector");
    if (dim_ == 0) {
        dim_ = sample.features.size();
        for (auto c : {0, 1}) {
            mean_[c] = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
            scatter_[c] = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim_),
                                                static_cast<Eigen::Index>(dim_));
        }
    }
    check_dimension(dim_, sample.features.size());

    const auto c = static_cast<std::size_t>(sample.label);
    const Eigen::Map<const Eigen::VectorXd> x(sample.features.data(),
                                              static_cast<Eigen::Index>(dim_));
    ++count_[c];
    const Eigen::VectorXd delta = x - mean_[c];
    mean_[c] += delta / static_cast<double>(count_[c]);
    scatter_[c].noalias() += delta * (x - mean_[c]).transpose();
}

void StreamingLda::reset() { *this = StreamingLda{}; }

Eigen::MatrixXd StreamingLda::pooled_scatter() const {
    if (dim_ == 0) return {};
    return scatter_[0] + scatter_[1];
}

Eigen::MatrixXd StreamingLda::pooled_covariance() const {
    if (dim_ == 0) return {};
    const long classes = (count_[0] > 0) + (count_[1] > 0);
    const long dof = std::max(count_[0] + count_[1] - classes, 1L);
    return pooled_scatter() / static_cast<double>(dof);
}

double StreamingLda::discriminant(std::span<const double> features) const {
    if (!trained()) throw UsageError("LDA has not seen any training data");
    check_dimension(dim_, features.size());
    if (count_[0] == 0) return std::numeric_limits<double>::infinity();
    if (count_[1] == 0) return -std::numeric_limits<double>::infinity();

    Eigen::MatrixXd cov = pooled_covariance();
    const auto d = static_cast<double>(dim_);
    double ridge = 1e-6 * cov.trace() / d;
    if (!(ridge > 0.0)) ridge = 1e-6;
    cov.diagonal().array() += ridge;

    const Eigen::LDLT<Eigen::MatrixXd> solver(cov);
    const Eigen::VectorXd diff = mean_[1] - mean_[0];
    const Eigen::VectorXd w = solver.solve(diff);
    const Eigen::Map<const Eigen::VectorXd> x(features.data(), static_cast<Eigen::Index>(dim_));
    const Eigen::VectorXd midpoint = 0.5 * (mean_[0] + mean_[1]);
    const double prior_term =
        std::log(static_cast<double>(count_[1]) / static_cast<double>(count_[0]));
    return w.dot(x - midpoint) + prior_term;
}

int StreamingLda::predict(std::span<const double> features) const {
    return discriminant(features) > 0.0 ? 1 : 0;
}

// ---------------------------------------------------------------------------
// HistoryKnn

HistoryKnn::HistoryKnn(std::size_t k, std::optional<std::size_t> history_cap)
    : k_(k), cap_(history_cap) {
    if (k_ == 0) throw ConfigError("KNN requires k >= 1");
    if (cap_ && *cap_ == 0) throw ConfigError("KNN history cap must be positive");
}

void HistoryKnn::update(const LabeledSample& sample) {
    check_label(sample.label);
    if (sample.features.empty()) throw InputError("empty feature vector");
    if (history_.empty() && features_.empty()) dim_ = sample.features.size();
    check_dimension(dim_, sample.features.size());
    if (cap_ && history_.size() == *cap_) {
        features_.erase(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(dim_));
        history_.erase(history_.begin());
    }
    features_.insert(features_.end(), sample.features.begin(), sample.features.end());
    history_.push_back(sample.label);
}

void HistoryKnn::reset() {
    dim_ = 0;
    features_.clear();
    history_.clear();
}

int HistoryKnn::predict(std::span<const double> features) const {
    if (history_.empty()) throw UsageError("KNN history is empty");
    check_dimension(dim_, features.size());

    // Running k-best list ordered by (distance, index); strict comparison keeps
    // the earliest stored point on distance ties.
    const std::size_t k = std::min(k_, history_.size());
    std::vector<std::pair<double, std::size_t>> best;
    best.reserve(k + 1);
    for (std::size_t i = 0; i < history_.size(); ++i) {
        const double* row = features_.data() + i * dim_;
        double dist = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            const double diff = row[j] - features[j];
            dist += diff * diff;
        }
        if (best.size() == k && !(dist < best.back().first)) continue;
        auto pos = std::upper_bound(best.begin(), best.end(), dist,
                                    [](double v, const auto& e) { return v < e.first; });
        best.insert(pos, {dist, i});
        if (best.size() > k) best.pop_back();
    }

    std::size_t ones = 0;
    for (const auto& [dist, idx] : best) ones += static_cast<std::size_t>(history_[idx]);
    const std::size_t zeros = best.size() - ones;
    if (ones != zeros) return ones > zeros ? 1 : 0;
    return history_[best.front().second];
}

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec) {
    switch (spec.kind) {
        case ClassifierSpec::Kind::Lda: return std::make_unique<StreamingLda>();
        case ClassifierSpec::Kind::Knn:
            return std::make_unique<HistoryKnn>(spec.k, spec.knn_history_cap);
    }
    throw ConfigError("unknown classifier kind");
}

}  // namespace ecdd
