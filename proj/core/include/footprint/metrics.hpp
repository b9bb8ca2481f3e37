#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "footprint/raster.hpp"

namespace footprint {

/// Smoothed Soerensen-Dice loss over every element of the inputs:
///
///   1 - (2 * sum(pred * target) + smooth) / (sum(pred) + sum(target) + smooth)
///
/// `pred` holds probabilities and stays differentiable; `target` is binary.
/// Throws kDimension on shape mismatch and kConfiguration for smooth <= 0.
torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target,
                        double smooth = 1.0);

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Pixel counts of binary masks (values 0/1). Throws kDimension on size
// mismatch and kInputDomain on any other value.
ConfusionCounts confusion(std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> target);
ConfusionCounts confusion(const MaskRaster& pred, const MaskRaster& target);
// Tensor overload; both inputs are flattened after a shape check.
ConfusionCounts confusion(const torch::Tensor& pred, const torch::Tensor& target);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  double kappa = 0.0;
};

// Ratios whose denominator vanishes score 1 when both masks are empty
// (tp = fp = fn = 0) and 0 otherwise. Kappa with chance agreement 1 (both
// masks a single identical class) scores 1.
inline constexpr std::string_view kZeroDenominatorConvention =
    "empty-vs-empty scores 1, other zero denominators score 0";

// Throws kEmptyRegion when counts.total() == 0.
Metrics metrics_from_counts(const ConfusionCounts& counts);

enum class Aggregation { kPerImageMean, kGlobalPool };
std::string to_string(Aggregation mode);
Aggregation parse_aggregation(std::string_view s);

struct ImageReport {
  std::string id;
  ConfusionCounts counts;
  Metrics metrics;
};

ImageReport make_image_report(std::string id, const ConfusionCounts& counts);

struct MetricsReport {
  Aggregation primary = Aggregation::kPerImageMean;
  Metrics per_image_mean;
  Metrics global_pool;
  ConfusionCounts pooled_counts;
  std::vector<ImageReport> per_image;

  const Metrics& primary_metrics() const {
    return primary == Aggregation::kPerImageMean ? per_image_mean : global_pool;
  }
  const Metrics& metrics(Aggregation mode) const {
    return mode == Aggregation::kPerImageMean ? per_image_mean : global_pool;
  }

  std::string to_json(std::string_view variant = {}, std::string_view split = {}) const;
  static MetricsReport from_json(std::string_view text);
  // Header plus one row per aggregation mode.
  std::string to_csv(std::string_view variant, std::string_view split) const;
};

// Both aggregations are always filled; `mode` only selects the primary one.
// Throws kAggregation for an empty list.
MetricsReport aggregate(std::span<const ImageReport> reports,
                        Aggregation mode = Aggregation::kPerImageMean);

}  // namespace footprint
