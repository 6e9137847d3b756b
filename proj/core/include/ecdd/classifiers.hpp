#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace ecdd {

struct LabeledSample {
    std::vector<double> features;
    int label = 0;

    friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

void to_json(nlohmann::json& j, const LabeledSample& s);
void from_json(const nlohmann::json& j, LabeledSample& s);

/// Two-class streaming classifier. `predict` never mutates the model.
class Classifier {
  public:
    virtual ~Classifier() = default;

    /// Throws UsageError before any training data has been seen.
    virtual int predict(std::span<const double> features) const = 0;
    virtual void update(const LabeledSample& sample) = 0;
    /// Discards everything learned; equivalent to a fresh instance.
    virtual void reset() = 0;
    virtual bool trained() const noexcept = 0;
    virtual std::string name() const = 0;

    void warm_start(std::span<const LabeledSample> samples) {
        for (const auto& s : samples) update(s);
    }
};

/// Linear discriminant with per-class running means, Welford within-class
/// scatter pooled across classes, and priors from class counts.
class StreamingLda final : public Classifier {
  public:
    int predict(std::span<const double> features) const override;
    void update(const LabeledSample& sample) override;
    void reset() override;
    bool trained() const noexcept override { return count_[0] + count_[1] > 0; }
    std::string name() const override { return "LDA"; }

    std::size_t dimension() const noexcept { return dim_; }
    long count(int label) const { return count_.at(static_cast<std::size_t>(label)); }
    const Eigen::VectorXd& mean(int label) const { return mean_.at(static_cast<std::size_t>(label)); }
    /// Sum over classes of sum (x - mean_c)(x - mean_c)^T.
    Eigen::MatrixXd pooled_scatter() const;
    /// Pooled covariance before regularization: scatter / max(n - classes, 1).
    Eigen::MatrixXd pooled_covariance() const;

    /// score(class 1) - score(class 0); positive means class 1.
    double discriminant(std::span<const double> features) const;

  private:
    std::size_t dim_ = 0;
    std::array<long, 2> count_{0, 0};
    std::array<Eigen::VectorXd, 2> mean_;
    std::array<Eigen::MatrixXd, 2> scatter_;
};

/// k-nearest-neighbour vote over every sample seen since the last reset.
class HistoryKnn final : public Classifier {
  public:
    explicit HistoryKnn(std::size_t k = 3, std::optional<std::size_t> history_cap = std::nullopt);

    int predict(std::span<const double> features) const override;
    void update(const LabeledSample& sample) override;
    void reset() override;
    bool trained() const noexcept override { return !history_.empty(); }
    std::string name() const override { return "KNN"; }

    std::size_t k() const noexcept { return k_; }
    std::size_t history_size() const noexcept { return history_.size(); }

  private:
    std::size_t k_;
    std::optional<std::size_t> cap_;
    std::size_t dim_ = 0;
    // Flattened features, oldest first.
    std::vector<double> features_;
    std::vector<int> history_;
};

struct ClassifierSpec {
    enum class Kind { Lda, Knn };
    Kind kind = Kind::Lda;
    std::size_t k = 3;
    std::optional<std::size_t> knn_history_cap;
};

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec);

}  // namespace ecdd
