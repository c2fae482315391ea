#include <gtest/gtest.h>

#include <cmath>

#include "auc_oracle.hpp"
#include "sou/error.hpp"
#include "sou/metrics.hpp"

using namespace sou;

TEST(Auc, HandCase) {
  const std::vector<double> s{0.8, 0.4, 0.6, 0.2};
  const std::vector<int> y{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(auc_roc(s, y), 0.75);
}

TEST(Auc, MatchesBruteForceWithTies) {
  const auto r = test::sweep_auc(500, 17);
  EXPECT_LE(r.max_diff, 1e-12);
}

TEST(Auc, DegenerateAndSymmetry) {
  const std::vector<double> s{0.3, 0.3, 0.3};
  EXPECT_EQ(auc_roc(s, std::vector<int>{1, 0, 1}), 0.5);
  const std::vector<double> t{0.9, 0.1, 0.5, 0.7};
  const std::vector<int> y{1, 0, 0, 1};
  std::vector<double> neg;
  for (double v : t) neg.push_back(-v);
  EXPECT_DOUBLE_EQ(auc_roc(t, y) + auc_roc(neg, y), 1.0);
  EXPECT_THROW(auc_roc(t, std::vector<int>{1, 1, 1, 1}), ConfigError);
}

TEST(Confusion, CountsPerClass) {
  const std::vector<int> pred{0, 1, 1, 0, 1};
  const std::vector<int> truth{0, 1, 0, 0, 1};
  const auto c = confusion(pred, truth, 2);
  EXPECT_EQ(c.n, 5u);
  EXPECT_EQ(c.per_class[0].tp, 2u);
  EXPECT_EQ(c.per_class[0].fn, 1u);
  EXPECT_EQ(c.per_class[1].tp, 2u);
  EXPECT_EQ(c.per_class[1].fp, 1u);
  EXPECT_EQ(c.per_class[1].tn, 2u);
}

TEST(MetricRow, HandComputed) {
  // truth M M M F F ; pred M M F F M ; positive class M (index 0)
  const std::vector<int> truth{0, 0, 0, 1, 1};
  const std::vector<int> pred{0, 0, 1, 1, 0};
  const std::vector<double> score{0.9, 0.8, 0.4, 0.3, 0.6};
  const auto r = metric_row(score, pred, truth, {"M", "F"}, 0);
  EXPECT_DOUBLE_EQ(r.acc, 60.0);
  EXPECT_EQ(r.positive_class, "M");
  EXPECT_DOUBLE_EQ(r.at("M").precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.at("M").recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.at("F").precision, 0.5);
  EXPECT_DOUBLE_EQ(r.at("F").recall, 0.5);
  EXPECT_DOUBLE_EQ(r.macro_f1, (2.0 / 3.0 + 0.5) / 2.0);
  EXPECT_DOUBLE_EQ(r.weighted_f1, (3 * (2.0 / 3.0) + 2 * 0.5) / 5.0);
  // positives {0.9, 0.8, 0.4} vs negatives {0.3, 0.6}: 5 of 6 pairs correct
  EXPECT_DOUBLE_EQ(r.auc, 5.0 / 6.0);
  EXPECT_THROW(r.at("X"), ConfigError);
}

TEST(MetricRow, UndefinedPrecisionIsZero) {
  const std::vector<int> truth{0, 1};
  const std::vector<int> pred{0, 0};
  const auto r = metric_row(std::vector<double>{0.2, 0.1}, pred, truth, {"HC", "PD"}, 1);
  EXPECT_EQ(r.at("PD").precision, 0.0);
  EXPECT_EQ(r.at("PD").f1, 0.0);
}

TEST(Aggregate, MeanOfChunkProbabilities) {
  const auto m = aggregate_recording({{0.2, 0.8}, {0.6, 0.4}});
  EXPECT_DOUBLE_EQ(m[0], 0.4);
  EXPECT_DOUBLE_EQ(m[1], 0.6);
  EXPECT_EQ(argmax(m), 1u);
  EXPECT_THROW(aggregate_recording({{0.2, 0.7}}), ConfigError);
  EXPECT_THROW(aggregate_recording({}), ConfigError);
}
