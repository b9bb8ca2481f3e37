#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "footprint/errors.hpp"
#include "footprint/metrics.hpp"
#include "oracles.hpp"

using namespace footprint;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected footprint::Error";
  return ErrorKind::kIo;
}

MaskRaster mask(int h, int w, std::initializer_list<int> v) {
  MaskRaster m(h, w, 1);
  std::copy(v.begin(), v.end(), m.data.begin());
  return m;
}

}  // namespace

TEST(Dice, HandExample) {
  const auto pred = torch::tensor({1.0, 1.0, 0.0, 0.0}).view({1, 4});
  const auto target = torch::tensor({1.0, 0.0, 0.0, 0.0}).view({1, 4});
  EXPECT_DOUBLE_EQ(dice_loss(pred, target, 1.0).item<double>(), 0.25);
}

TEST(Dice, PerfectAndDisjoint) {
  const auto t = (torch::rand({2, 1, 8, 8}) > 0.5).to(torch::kFloat64);
  EXPECT_DOUBLE_EQ(dice_loss(t, t, 1.0).item<double>(), 0.0);
  const auto ones = torch::ones({1, 1, 4, 4}, torch::kFloat64);
  const auto zeros = torch::zeros({1, 1, 4, 4}, torch::kFloat64);
  const double s = 0.5, n = 16;
  EXPECT_NEAR(dice_loss(ones, zeros, s).item<double>(), 1.0 - s / (n + s), 1e-15);
}

TEST(Dice, Errors) {
  EXPECT_EQ(kind_of([] { dice_loss(torch::zeros({4}), torch::zeros({5})); }), ErrorKind::kDimension);
  EXPECT_EQ(kind_of([] { dice_loss(torch::zeros({4}), torch::zeros({4}), 0.0); }),
            ErrorKind::kConfiguration);
}

TEST(Confusion, HandExample) {
  const auto c = confusion(mask(2, 2, {1, 1, 0, 0}), mask(2, 2, {1, 0, 1, 0}));
  EXPECT_EQ(c, (ConfusionCounts{1, 1, 1, 1}));
}

TEST(Confusion, IdenticalAndComplementary) {
  const auto a = mask(2, 3, {1, 0, 1, 1, 0, 0});
  const auto b = mask(2, 3, {0, 1, 0, 0, 1, 1});
  EXPECT_EQ(confusion(a, a), (ConfusionCounts{3, 0, 0, 3}));
  const auto comp = confusion(a, b);
  EXPECT_EQ(comp.tp, 0u);
  EXPECT_EQ(comp.tn, 0u);
}

TEST(Confusion, TensorAgreesWithRaster) {
  std::mt19937 rng(5);
  MaskRaster a(5, 7, 1), b(5, 7, 1);
  for (auto& v : a.data) v = rng() % 2;
  for (auto& v : b.data) v = rng() % 2;
  const auto ta = torch::from_blob(a.data.data(), {5, 7}, torch::kUInt8).clone();
  const auto tb = torch::from_blob(b.data.data(), {5, 7}, torch::kUInt8).clone();
  EXPECT_EQ(confusion(ta, tb), confusion(a, b));
}

TEST(Confusion, Errors) {
  EXPECT_EQ(kind_of([] { confusion(mask(1, 2, {0, 2}), mask(1, 2, {0, 1})); }),
            ErrorKind::kInputDomain);
  EXPECT_EQ(kind_of([] { confusion(MaskRaster(1, 2, 1), MaskRaster(2, 1, 1)); }),
            ErrorKind::kDimension);
}

TEST(Metrics, AllOnes) {
  const auto m = metrics_from_counts({1, 1, 1, 1});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, 0.5);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.f1, 0.5);
  EXPECT_DOUBLE_EQ(m.iou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.kappa, 0.0);
}

TEST(Metrics, Perfect) {
  const auto m = metrics_from_counts({5, 0, 0, 11});
  for (double v : {m.accuracy, m.precision, m.recall, m.f1, m.iou, m.kappa}) EXPECT_EQ(v, 1.0);
}

TEST(Metrics, EmptyVersusEmpty) {
  const auto m = metrics_from_counts({0, 0, 0, 64});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.iou, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, MissedEverything) {
  const auto m = metrics_from_counts({0, 0, 10, 54});
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.iou, 0.0);
  EXPECT_EQ(m.f1, 0.0);
}

TEST(Metrics, MatchesBruteForceOracle) {
  std::mt19937_64 rng(9);
  for (int k = 0; k < 200; ++k) {
    MaskRaster a(6, 5, 1), b(6, 5, 1);
    const unsigned density = 1 + k % 7;
    for (auto& v : a.data) v = rng() % 8 < density;
    for (auto& v : b.data) v = rng() % 8 < 8 - density;
    const auto got = metrics_from_counts(confusion(a, b));
    const auto want = footprint::testing::brute_force_metrics(a, b);
    EXPECT_NEAR(got.kappa, want.kappa, 1e-12);
    EXPECT_NEAR(got.f1, want.f1, 1e-12);
    EXPECT_NEAR(got.iou, want.iou, 1e-12);
  }
}

TEST(Metrics, NoPixelsIsEmptyRegion) {
  EXPECT_EQ(kind_of([] { metrics_from_counts({}); }), ErrorKind::kEmptyRegion);
}

TEST(Aggregate, SingleReportBothModes) {
  const auto r = make_image_report("a", {3, 1, 2, 10});
  const auto agg = aggregate(std::vector{r}, Aggregation::kGlobalPool);
  EXPECT_DOUBLE_EQ(agg.per_image_mean.iou, r.metrics.iou);
  EXPECT_DOUBLE_EQ(agg.global_pool.iou, r.metrics.iou);
  EXPECT_EQ(agg.primary, Aggregation::kGlobalPool);
  EXPECT_DOUBLE_EQ(agg.primary_metrics().kappa, r.metrics.kappa);
}

TEST(Aggregate, MeanOfIou) {
  // iou 0.2 = 1/5 and 0.8 = 4/5
  const std::vector reports{make_image_report("a", {1, 2, 2, 5}), make_image_report("b", {4, 1, 0, 5})};
  const auto agg = aggregate(reports);
  EXPECT_DOUBLE_EQ(agg.per_image_mean.iou, 0.5);
  EXPECT_DOUBLE_EQ(agg.global_pool.iou, 5.0 / 10.0);
}

TEST(Aggregate, AllNegativeImageSeparatesModes) {
  // 2x2 fixtures: one image with nothing anywhere, one mixed.
  const auto empty = make_image_report("empty", confusion(mask(2, 2, {0, 0, 0, 0}), mask(2, 2, {0, 0, 0, 0})));
  const auto mixed = make_image_report("mixed", confusion(mask(2, 2, {1, 1, 0, 0}), mask(2, 2, {1, 0, 1, 0})));
  const auto agg = aggregate(std::vector{empty, mixed});
  EXPECT_DOUBLE_EQ(agg.per_image_mean.iou, (1.0 + 1.0 / 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(agg.global_pool.iou, 1.0 / 3.0);
  EXPECT_NE(agg.per_image_mean.iou, agg.global_pool.iou);
  EXPECT_EQ(agg.pooled_counts, (ConfusionCounts{1, 1, 1, 5}));
}

TEST(Aggregate, EmptyListIsError) {
  EXPECT_EQ(kind_of([] { aggregate(std::vector<ImageReport>{}); }), ErrorKind::kAggregation);
}

TEST(Aggregate, ParseMode) {
  EXPECT_EQ(parse_aggregation("global-pool"), Aggregation::kGlobalPool);
  EXPECT_EQ(to_string(Aggregation::kPerImageMean), "per-image-mean");
  EXPECT_EQ(kind_of([] { parse_aggregation("median"); }), ErrorKind::kConfiguration);
}

TEST(Report, JsonAndCsv) {
  const std::vector reports{make_image_report("a", {1, 2, 2, 5}), make_image_report("b", {4, 1, 0, 5})};
  const auto agg = aggregate(reports);
  const auto text = agg.to_json("efficientnet-b0", "test");
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["variant"], "efficientnet-b0");
  EXPECT_EQ(j["per_image"].size(), 2u);
  EXPECT_EQ(j["zero_denominator_convention"], kZeroDenominatorConvention);
  const auto back = MetricsReport::from_json(text);
  EXPECT_DOUBLE_EQ(back.per_image_mean.iou, agg.per_image_mean.iou);
  EXPECT_EQ(back.pooled_counts, agg.pooled_counts);
  EXPECT_EQ(back.per_image.size(), 2u);

  const auto csv = agg.to_csv("efficientnet-b0", "test");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("global-pool"), std::string::npos);
}
