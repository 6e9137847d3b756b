#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ecdd/classifiers.hpp"
#include "ecdd/error.hpp"
#include "ecdd/streams.hpp"

using namespace ecdd;

namespace {

std::vector<LabeledSample> gauss_samples(long n, std::uint64_t seed) {
    StreamSpec spec;
    spec.generator = GaussGenerator{};
    spec.length = n;
    spec.seed = seed;
    SyntheticStream stream(spec);
    return collect(stream);
}

// Batch two-dimensional LDA written out by hand: pooled covariance with
// n - 2 degrees of freedom, log-prior offset.
struct BatchLda {
    double m[2][2]{};
    double s[2][2]{};  // pooled covariance
    long n[2]{};

    explicit BatchLda(const std::vector<LabeledSample>& data) {
        for (const auto& x : data) {
            ++n[x.label];
            m[x.label][0] += x.features[0];
            m[x.label][1] += x.features[1];
        }
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < 2; ++j) m[c][j] /= static_cast<double>(n[c]);
        for (const auto& x : data) {
            const double d0 = x.features[0] - m[x.label][0];
            const double d1 = x.features[1] - m[x.label][1];
            s[0][0] += d0 * d0;
            s[0][1] += d0 * d1;
            s[1][1] += d1 * d1;
        }
        const double dof = static_cast<double>(n[0] + n[1] - 2);
        s[0][0] /= dof;
        s[0][1] /= dof;
        s[1][1] /= dof;
        s[1][0] = s[0][1];
    }

    int predict(const std::vector<double>& x) const {
        const double det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        const double d0 = m[1][0] - m[0][0], d1 = m[1][1] - m[0][1];
        const double w0 = (s[1][1] * d0 - s[0][1] * d1) / det;
        const double w1 = (-s[1][0] * d0 + s[0][0] * d1) / det;
        const double c0 = x[0] - 0.5 * (m[0][0] + m[1][0]);
        const double c1 = x[1] - 0.5 * (m[0][1] + m[1][1]);
        const double score = w0 * c0 + w1 * c1 + std::log(double(n[1]) / double(n[0]));
        return score > 0 ? 1 : 0;
    }
};

}  // namespace

TEST(StreamingLda, SymmetricClassesSplitAtMidpoint) {
    StreamingLda lda;
    lda.warm_start(std::vector<LabeledSample>{
        {{0.0}, 0}, {{-1.0}, 0}, {{1.0}, 0}, {{2.0}, 1}, {{1.0}, 1}, {{3.0}, 1}});
    EXPECT_EQ(lda.predict(std::vector{0.9}), 0);
    EXPECT_EQ(lda.predict(std::vector{1.1}), 1);
    EXPECT_NEAR(lda.discriminant(std::vector{1.0}), 0.0, 1e-9);
}

TEST(StreamingLda, SingleClassPredictsThatClass) {
    StreamingLda lda;
    lda.update({{1.0, 2.0}, 1});
    lda.update({{3.0, -2.0}, 1});
    EXPECT_EQ(lda.predict(std::vector{-100.0, 0.0}), 1);
    lda.reset();
    lda.update({{1.0, 2.0}, 0});
    EXPECT_EQ(lda.predict(std::vector{100.0, 0.0}), 0);
}

TEST(StreamingLda, RunningMomentsMatchBatch) {
    const auto data = gauss_samples(500, 11);
    StreamingLda lda;
    lda.warm_start(data);
    const BatchLda batch(data);
    for (int c = 0; c < 2; ++c) {
        EXPECT_EQ(lda.count(c), batch.n[c]);
        for (int j = 0; j < 2; ++j) EXPECT_NEAR(lda.mean(c)(j), batch.m[c][j], 1e-9);
    }
    const auto cov = lda.pooled_covariance();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) EXPECT_NEAR(cov(i, j), batch.s[i][j], 1e-9);
}

TEST(StreamingLda, HoldoutAccuracyMatchesBatchLda) {
    const auto train = gauss_samples(10000, 21);
    const auto test = gauss_samples(10000, 22);
    StreamingLda lda;
    lda.warm_start(train);
    const BatchLda batch(train);
    long hit_stream = 0, hit_batch = 0, agree = 0;
    for (const auto& s : test) {
        const int a = lda.predict(s.features);
        const int b = batch.predict(s.features);
        hit_stream += a == s.label;
        hit_batch += b == s.label;
        agree += a == b;
    }
    EXPECT_NEAR(hit_stream / 10000.0, hit_batch / 10000.0, 0.02);
    EXPECT_GT(agree, 9900);
    EXPECT_GT(hit_stream / 10000.0, 0.7);
}

TEST(StreamingLda, SingularCovarianceStillPredicts) {
    StreamingLda lda;
    // Second feature is constant: the pooled covariance is singular.
    lda.warm_start(std::vector<LabeledSample>{{{0.0, 5.0}, 0}, {{1.0, 5.0}, 0}, {{3.0, 5.0}, 1},
                                              {{4.0, 5.0}, 1}});
    EXPECT_EQ(lda.predict(std::vector{0.5, 5.0}), 0);
    EXPECT_EQ(lda.predict(std::vector{3.5, 5.0}), 1);
    // Duplicated points only.
    StreamingLda dup;
    dup.warm_start(std::vector<LabeledSample>{{{1.0, 1.0}, 0}, {{1.0, 1.0}, 1}});
    EXPECT_NO_THROW(dup.predict(std::vector{1.0, 1.0}));
}

TEST(StreamingLda, Errors) {
    StreamingLda lda;
    EXPECT_THROW(lda.predict(std::vector{1.0}), UsageError);
    EXPECT_THROW(lda.update({{1.0}, 2}), InputError);
    EXPECT_THROW(lda.update({{}, 0}), InputError);
    lda.update({{1.0, 2.0}, 0});
    EXPECT_THROW(lda.update({{1.0}, 1}), InputError);
    EXPECT_THROW(lda.predict(std::vector{1.0}), InputError);
}

TEST(HistoryKnn, MajorityOfNearest) {
    HistoryKnn knn(3);
    knn.warm_start(std::vector<LabeledSample>{{{0.0}, 0}, {{0.1}, 0}, {{0.2}, 1}, {{5.0}, 1},
                                              {{5.1}, 1}});
    EXPECT_EQ(knn.predict(std::vector{0.05}), 0);
    EXPECT_EQ(knn.predict(std::vector{4.0}), 1);
    EXPECT_EQ(knn.history_size(), 5u);
}

TEST(HistoryKnn, TiesGoToTheEarliestNeighbour) {
    // Equidistant neighbours: the earlier stored point wins the distance tie.
    HistoryKnn one(1);
    one.warm_start(std::vector<LabeledSample>{{{-1.0}, 1}, {{1.0}, 0}});
    EXPECT_EQ(one.predict(std::vector{0.0}), 1);

    // Even k with a split vote: the nearest neighbour decides.
    HistoryKnn two(2);
    two.warm_start(std::vector<LabeledSample>{{{0.0}, 0}, {{0.5}, 1}});
    EXPECT_EQ(two.predict(std::vector{0.4}), 1);
    EXPECT_EQ(two.predict(std::vector{0.1}), 0);

    // k larger than the history uses everything.
    HistoryKnn big(7);
    big.warm_start(std::vector<LabeledSample>{{{0.0}, 1}, {{9.0}, 1}, {{0.1}, 0}});
    EXPECT_EQ(big.predict(std::vector{0.1}), 1);
}

TEST(HistoryKnn, CapDropsOldest) {
    HistoryKnn knn(1, 2);
    knn.warm_start(std::vector<LabeledSample>{{{0.0}, 1}, {{10.0}, 0}, {{20.0}, 0}});
    EXPECT_EQ(knn.history_size(), 2u);
    EXPECT_EQ(knn.predict(std::vector{0.0}), 0);
    EXPECT_THROW(HistoryKnn(0), ConfigError);
    EXPECT_THROW(HistoryKnn(3, 0), ConfigError);
}

TEST(HistoryKnn, Errors) {
    HistoryKnn knn;
    EXPECT_THROW(knn.predict(std::vector{1.0}), UsageError);
    EXPECT_THROW(knn.update({{1.0}, -1}), InputError);
    knn.update({{1.0, 2.0}, 0});
    EXPECT_THROW(knn.predict(std::vector{1.0}), InputError);
}

class ClassifierContract : public ::testing::TestWithParam<ClassifierSpec::Kind> {
  protected:
    std::unique_ptr<Classifier> make() const {
        ClassifierSpec spec;
        spec.kind = GetParam();
        return make_classifier(spec);
    }
};

TEST_P(ClassifierContract, ResetEqualsFreshInstance) {
    const auto first = gauss_samples(200, 5);
    const auto second = gauss_samples(200, 6);
    const auto probe = gauss_samples(300, 7);

    auto used = make();
    used->warm_start(first);
    used->reset();
    EXPECT_FALSE(used->trained());
    EXPECT_THROW(used->predict(probe[0].features), UsageError);
    used->warm_start(second);

    auto fresh = make();
    fresh->warm_start(second);
    for (const auto& s : probe) ASSERT_EQ(used->predict(s.features), fresh->predict(s.features));
}

TEST_P(ClassifierContract, WarmStartEqualsSequentialUpdates) {
    const auto data = gauss_samples(150, 8);
    const auto probe = gauss_samples(200, 9);
    auto a = make();
    auto b = make();
    a->warm_start(data);
    for (const auto& s : data) b->update(s);
    for (const auto& s : probe) ASSERT_EQ(a->predict(s.features), b->predict(s.features));
}

TEST_P(ClassifierContract, PredictIsPure) {
    const auto data = gauss_samples(100, 10);
    const auto probe = gauss_samples(50, 12);
    auto model = make();
    model->warm_start(data);
    std::vector<int> first;
    for (const auto& s : probe) first.push_back(model->predict(s.features));
    for (std::size_t i = 0; i < probe.size(); ++i)
        EXPECT_EQ(model->predict(probe[i].features), first[i]);
}

INSTANTIATE_TEST_SUITE_P(Kinds, ClassifierContract,
                         ::testing::Values(ClassifierSpec::Kind::Lda, ClassifierSpec::Kind::Knn),
                         [](const auto& info) {
                             return info.param == ClassifierSpec::Kind::Lda ? "Lda" : "Knn";
                         });
