#include "footprint/metrics.hpp"

#include <sstream>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "footprint/errors.hpp"

namespace footprint {

torch::Tensor dice_loss(const torch::Tensor& pred, const torch::Tensor& target, double smooth) {
  if (pred.sizes() != target.sizes()) {
    std::ostringstream msg;
    msg << "dice_loss: prediction " << pred.sizes() << " vs target " << target.sizes();
    throw Error(ErrorKind::kDimension, msg.str());
  }
  if (!(smooth > 0.0)) {
    throw Error(ErrorKind::kConfiguration, "dice smoothing term must be positive");
  }
  const auto t = target.to(pred.scalar_type());
  const auto intersection = (pred * t).sum();
  const auto denominator = pred.sum() + t.sum() + smooth;
  return 1.0 - (2.0 * intersection + smooth) / denominator;
}

ConfusionCounts confusion(std::span<const std::uint8_t> pred,
                          std::span<const std::uint8_t> target) {
  if (pred.size() != target.size()) {
    throw Error(ErrorKind::kDimension, "confusion: masks have " + std::to_string(pred.size()) +
                                           " and " + std::to_string(target.size()) + " pixels");
  }
  // Index 2*target + pred selects tn, fp, fn, tp.
  std::uint64_t bins[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::uint8_t p = pred[i];
    const std::uint8_t t = target[i];
    if ((p | t) > 1) {
      throw Error(ErrorKind::kInputDomain,
                  "confusion: non-binary value at pixel " + std::to_string(i));
    }
    ++bins[2 * t + p];
  }
  return {bins[3], bins[1], bins[2], bins[0]};
}

ConfusionCounts confusion(const MaskRaster& pred, const MaskRaster& target) {
  if (!pred.same_extent(target.height, target.width) || pred.channels != target.channels) {
    throw Error(ErrorKind::kDimension, "confusion: mask extents differ");
  }
  return confusion(std::span(pred.data), std::span(target.data));
}

ConfusionCounts confusion(const torch::Tensor& pred, const torch::Tensor& target) {
  if (pred.sizes() != target.sizes()) {
    std::ostringstream msg;
    msg << "confusion: prediction " << pred.sizes() << " vs target " << target.sizes();
    throw Error(ErrorKind::kDimension, msg.str());
  }
  const auto p = pred.to(torch::kUInt8).contiguous().cpu();
  const auto t = target.to(torch::kUInt8).contiguous().cpu();
  const auto n = static_cast<std::size_t>(p.numel());
  return confusion(std::span(p.data_ptr<std::uint8_t>(), n),
                   std::span(t.data_ptr<std::uint8_t>(), n));
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  const std::uint64_t n = c.total();
  if (n == 0) throw Error(ErrorKind::kEmptyRegion, "metrics requested for an empty region");

  const bool both_empty = c.tp == 0 && c.fp == 0 && c.fn == 0;
  const auto ratio = [&](std::uint64_t num, std::uint64_t den) {
    if (den == 0) return both_empty ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
  };

  Metrics m;
  const double total = static_cast<double>(n);
  m.accuracy = static_cast<double>(c.tp + c.tn) / total;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  // 2PR / (P + R) in count form.
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  m.iou = ratio(c.tp, c.tp + c.fp + c.fn);

  const double pred_pos = static_cast<double>(c.tp + c.fp);
  const double pred_neg = static_cast<double>(c.fn + c.tn);
  const double true_pos = static_cast<double>(c.tp + c.fn);
  const double true_neg = static_cast<double>(c.fp + c.tn);
  const double chance = (pred_pos * true_pos + pred_neg * true_neg) / (total * total);
  m.kappa = chance >= 1.0 ? 1.0 : (m.accuracy - chance) / (1.0 - chance);
  return m;
}

std::string to_string(Aggregation mode) {
  return mode == Aggregation::kPerImageMean ? "per-image-mean" : "global-pool";
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "per-image-mean" || s == "mean") return Aggregation::kPerImageMean;
  if (s == "global-pool" || s == "pooled") return Aggregation::kGlobalPool;
  throw Error(ErrorKind::kConfiguration,
              "aggregation must be per-image-mean|global-pool, got " + std::string(s));
}

ImageReport make_image_report(std::string id, const ConfusionCounts& counts) {
  return {std::move(id), counts, metrics_from_counts(counts)};
}

MetricsReport aggregate(std::span<const ImageReport> reports, Aggregation mode) {
  if (reports.empty()) throw Error(ErrorKind::kAggregation, "cannot aggregate zero reports");
  MetricsReport r;
  r.primary = mode;
  r.per_image.assign(reports.begin(), reports.end());
  Metrics sum;
  for (const auto& img : reports) {
    r.pooled_counts += img.counts;
    sum.accuracy += img.metrics.accuracy;
    sum.precision += img.metrics.precision;
    sum.recall += img.metrics.recall;
    sum.f1 += img.metrics.f1;
    sum.iou += img.metrics.iou;
    sum.kappa += img.metrics.kappa;
  }
  const double k = static_cast<double>(reports.size());
  r.per_image_mean = {sum.accuracy / k, sum.precision / k, sum.recall / k,
                      sum.f1 / k,       sum.iou / k,       sum.kappa / k};
  r.global_pool = metrics_from_counts(r.pooled_counts);
  return r;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
          {"f1", m.f1},             {"iou", m.iou},             {"kappa", m.kappa}};
}

Metrics metrics_from(const nlohmann::json& j) {
  return {j.at("accuracy").get<double>(), j.at("precision").get<double>(),
          j.at("recall").get<double>(),   j.at("f1").get<double>(),
          j.at("iou").get<double>(),      j.at("kappa").get<double>()};
}

nlohmann::json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

ConfusionCounts counts_from(const nlohmann::json& j) {
  return {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(),
          j.at("fn").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>()};
}

}  // namespace

std::string MetricsReport::to_json(std::string_view variant, std::string_view split) const {
  nlohmann::ordered_json j;
  if (!variant.empty()) j["variant"] = variant;
  if (!split.empty()) j["split"] = split;
  j["primary_aggregation"] = to_string(primary);
  j["zero_denominator_convention"] = kZeroDenominatorConvention;
  j["per_image_mean"] = metrics_json(per_image_mean);
  j["global_pool"] = metrics_json(global_pool);
  j["pooled_counts"] = counts_json(pooled_counts);
  j["per_image"] = nlohmann::json::array();
  for (const auto& img : per_image) {
    j["per_image"].push_back(
        {{"id", img.id}, {"counts", counts_json(img.counts)}, {"metrics", metrics_json(img.metrics)}});
  }
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(std::string_view text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.primary = parse_aggregation(j.at("primary_aggregation").get<std::string>());
    r.per_image_mean = metrics_from(j.at("per_image_mean"));
    r.global_pool = metrics_from(j.at("global_pool"));
    r.pooled_counts = counts_from(j.at("pooled_counts"));
    for (const auto& img : j.at("per_image")) {
      r.per_image.push_back({img.at("id").get<std::string>(), counts_from(img.at("counts")),
                             metrics_from(img.at("metrics"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::string MetricsReport::to_csv(std::string_view variant, std::string_view split) const {
  std::ostringstream out;
  out.precision(10);
  out << "variant,split,aggregation,accuracy,precision,recall,f1,iou,kappa\n";
  for (Aggregation mode : {Aggregation::kPerImageMean, Aggregation::kGlobalPool}) {
    const auto& m = metrics(mode);
    out << variant << ',' << split << ',' << to_string(mode) << ',' << m.accuracy << ','
        << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.iou << ',' << m.kappa
        << '\n';
  }
  return out.str();
}

}  // namespace footprint
