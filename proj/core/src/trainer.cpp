#include "footprint/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <torch/torch.h>

#include "footprint/errors.hpp"
#include "footprint/image_io.hpp"

namespace fs = std::filesystem;

namespace footprint {

namespace {

std::vector<NormalizedTile> tiles_from_sample(const RasterSample& sample,
                                              const TrainConfig& config) {
  std::vector<NormalizedTile> out;
  if (config.tiling == TilingMode::kDownsample) {
    out.push_back(make_tile(downsample_pair(sample, config.tile_size)));
  } else {
    for (const auto& t : crop_tiles(sample, config.tile_size)) out.push_back(make_tile(t));
  }
  return out;
}

}  // namespace

std::vector<NormalizedTile> load_tiles(const DatasetManifest& manifest, Split split,
                                       const TrainConfig& config) {
  std::vector<ManifestEntry> entries = manifest.entries(split);
  const int limit = split == Split::kTrain ? config.train_subset
                    : split == Split::kVal ? config.val_subset
                                           : 0;
  if (limit > 0 && config.tiling == TilingMode::kDownsample &&
      entries.size() > static_cast<std::size_t>(limit)) {
    entries.resize(limit);
  }

  std::vector<std::vector<NormalizedTile>> per_entry(entries.size());
  const auto work = [&](std::size_t i) {
    per_entry[i] = tiles_from_sample(load_sample(manifest, entries[i], split), config);
  };
  const int workers = std::min<int>(config.workers, static_cast<int>(entries.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < entries.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < entries.size(); i = next++) {
          try {
            work(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<NormalizedTile> tiles;
  for (auto& group : per_entry) {
    for (auto& t : group) tiles.push_back(std::move(t));
  }
  if (limit > 0 && tiles.size() > static_cast<std::size_t>(limit)) tiles.resize(limit);
  return tiles;
}

LoadReport initialise_encoder(SegmentationModel& model, const TrainConfig& config, RunLog& log) {
  if (config.encoder_weights == "none") {
    log.info("encoder: random initialisation (encoder_weights: none)");
    return {};
  }
  const fs::path source = config.encoder_weights == "auto"
                              ? fs::path(config.weights_dir) / (to_string(config.variant) + ".pt")
                              : fs::path(config.encoder_weights);
  auto report = load_pretrained(*model->encoder(), source);
  for (const auto& w : report.warnings) log.warn("encoder weights: " + w);
  if (report.loaded) {
    log.info("encoder: loaded " + std::to_string(report.tensors_applied) + " tensors from " +
             source.string());
  }
  return report;
}

namespace {

torch::Tensor stack_data(const std::vector<NormalizedTile>& tiles) {
  std::vector<torch::Tensor> parts;
  parts.reserve(tiles.size());
  for (const auto& t : tiles) parts.push_back(t.data);
  return torch::stack(parts);
}

// Building channel of the one-hot targets as N x 1 x H x W.
torch::Tensor stack_targets(const std::vector<NormalizedTile>& tiles) {
  std::vector<torch::Tensor> parts;
  parts.reserve(tiles.size());
  for (const auto& t : tiles) parts.push_back(t.target.narrow(0, 1, 1));
  return torch::stack(parts);
}

torch::Tensor head_loss(const TrainConfig& config, const torch::Tensor& prob,
                        const torch::Tensor& logits, const torch::Tensor& target) {
  auto loss = dice_loss(prob, target, config.dice_smooth);
  if (config.loss == LossKind::kDiceBce) {
    if (logits.size(1) == 1) {
      loss = loss + torch::binary_cross_entropy_with_logits(logits, target);
    } else {
      loss = loss + torch::cross_entropy_loss(logits, target.squeeze(1).to(torch::kLong));
    }
  }
  return loss;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::unique_ptr<torch::optim::Optimizer> make_optimizer(const TrainConfig& config,
                                                        SegmentationModel& model) {
  switch (config.optimizer) {
    case OptimizerKind::kAdam:
      return std::make_unique<torch::optim::Adam>(
          model->parameters(),
          torch::optim::AdamOptions(config.learning_rate).weight_decay(config.weight_decay));
    case OptimizerKind::kAdamW:
      return std::make_unique<torch::optim::AdamW>(
          model->parameters(),
          torch::optim::AdamWOptions(config.learning_rate).weight_decay(config.weight_decay));
    case OptimizerKind::kSgd:
      return std::make_unique<torch::optim::SGD>(
          model->parameters(), torch::optim::SGDOptions(config.learning_rate)
                                   .momentum(config.momentum)
                                   .weight_decay(config.weight_decay));
  }
  throw Error(ErrorKind::kConfiguration, "unknown optimizer");
}

struct EvalPass {
  double dice_loss = 0.0;
  std::vector<ImageReport> reports;
};

// Inference over `tiles`; dice is pooled over every pixel of the set.
EvalPass run_inference(SegmentationModel& model, const std::vector<NormalizedTile>& tiles,
                       double threshold, double smooth, int batch_size) {
  torch::NoGradGuard no_grad;
  model->eval();
  EvalPass pass;
  double intersection = 0.0, pred_sum = 0.0, target_sum = 0.0;
  for (std::size_t begin = 0; begin < tiles.size(); begin += batch_size) {
    const std::size_t end = std::min(tiles.size(), begin + batch_size);
    std::vector<NormalizedTile> chunk(tiles.begin() + begin, tiles.begin() + end);
    const auto target = stack_targets(chunk);
    const auto prob = model->forward(stack_data(chunk)).probabilities;
    intersection += (prob * target).sum().item<double>();
    pred_sum += prob.sum().item<double>();
    target_sum += target.sum().item<double>();
    const auto mask = predict_mask(prob, threshold);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      pass.reports.push_back(
          make_image_report(chunk[i].source_id, confusion(mask[i], target[i].to(torch::kUInt8))));
    }
  }
  pass.dice_loss = 1.0 - (2.0 * intersection + smooth) / (pred_sum + target_sum + smooth);
  return pass;
}

double mean_iou(const std::vector<ImageReport>& reports) {
  if (reports.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& r : reports) sum += r.metrics.iou;
  return sum / static_cast<double>(reports.size());
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorKind::kIo, "cannot append to " + path.string());
  out << line << '\n';
}

}  // namespace

TrainResult train_on_tiles(const TrainConfig& config, const std::vector<NormalizedTile>& train_tiles,
                           const std::vector<NormalizedTile>& val_tiles, SegmentationModel& model,
                           const TrainOptions& options) {
  config.validate();
  if (model->config().variant != config.variant) {
    throw Error(ErrorKind::kConfiguration, "model was built for " +
                                               to_string(model->config().variant) +
                                               " but the config asks for " +
                                               to_string(config.variant));
  }
  if (train_tiles.empty()) throw Error(ErrorKind::kManifest, "training split is empty");
  if (val_tiles.empty()) throw Error(ErrorKind::kManifest, "validation split is empty");

  RunLog fallback_log;
  RunLog& log = options.log ? *options.log : fallback_log;

  fs::path history_path;
  if (options.run_dir) {
    fs::create_directories(*options.run_dir);
    std::ofstream(*options.run_dir / "config.json") << config.to_json();
    history_path = *options.run_dir / "history.csv";
    std::ofstream(history_path) << TrainingHistory::csv_header() << '\n';
  }

  torch::manual_seed(config.seed);
  auto optimizer = make_optimizer(config, model);
  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 augment_rng(config.augmentation.seed);

  const std::size_t n = train_tiles.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::size_t steps = (n + batch - 1) / batch;
  if (config.max_steps_per_epoch > 0) {
    steps = std::min<std::size_t>(steps, config.max_steps_per_epoch);
  }
  log.info("training " + to_string(config.variant) + " on " + std::to_string(n) + " tiles, " +
           std::to_string(val_tiles.size()) + " validation tiles, " + std::to_string(steps) +
           " steps/epoch");

  TrainResult result;
  result.checkpoint.config_json = config.to_json();
  double best_iou = -std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    model->train();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);

    std::vector<double> dice_values;
    double objective_sum = 0.0;
    std::vector<ImageReport> train_reports;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t begin = step * batch;
      const std::size_t end = std::min(n, begin + batch);
      std::vector<NormalizedTile> chunk;
      for (std::size_t k = begin; k < end; ++k) {
        chunk.push_back(augment(train_tiles[order[k]], config.augmentation, augment_rng));
      }
      const auto x = stack_data(chunk);
      const auto y = stack_targets(chunk);

      auto out = model->forward(x);
      torch::Tensor objective;
      if (config.loss_on_all_heads) {
        objective = torch::zeros({}, x.options());
        for (std::size_t h = 0; h < out.head_probabilities.size(); ++h) {
          objective = objective + head_loss(config, out.head_probabilities[h], out.head_logits[h], y);
        }
        objective = objective / static_cast<double>(out.head_probabilities.size());
      } else {
        objective = head_loss(config, out.head_probabilities.back(), out.head_logits.back(), y);
      }
      const double objective_value = objective.item<double>();
      if (!std::isfinite(objective_value)) {
        throw Error(ErrorKind::kDivergence, "non-finite loss at epoch " + std::to_string(epoch) +
                                                " step " + std::to_string(step + 1));
      }
      optimizer->zero_grad();
      objective.backward();
      optimizer->step();

      const auto final_prob = out.probabilities.detach();
      dice_values.push_back(dice_loss(final_prob, y, config.dice_smooth).item<double>());
      objective_sum += objective_value;
      const auto mask = predict_mask(final_prob, config.decoder.threshold);
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        train_reports.push_back(
            make_image_report(chunk[i].source_id, confusion(mask[i], y[i].to(torch::kUInt8))));
      }
    }

    const auto val = run_inference(model, val_tiles, config.decoder.threshold, config.dice_smooth,
                                   config.batch_size);
    EpochRecord record;
    record.epoch = epoch;
    record.train_dice_loss =
        std::accumulate(dice_values.begin(), dice_values.end(), 0.0) / dice_values.size();
    record.train_dice_loss_median = median(dice_values);
    record.train_objective = objective_sum / static_cast<double>(steps);
    record.val_dice_loss = val.dice_loss;
    record.train_iou = mean_iou(train_reports);
    record.val_iou = mean_iou(val.reports);
    if (!std::isfinite(record.val_dice_loss)) {
      throw Error(ErrorKind::kDivergence,
                  "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.records.push_back(record);
    if (options.run_dir) append_line(history_path, TrainingHistory::csv_row(record));

    std::ostringstream line;
    line << "epoch " << epoch << "/" << config.epochs << " train_dice_loss "
         << record.train_dice_loss << " val_dice_loss " << record.val_dice_loss << " train_iou "
         << record.train_iou << " val_iou " << record.val_iou;
    // Strict improvement keeps the earlier epoch on ties.
    if (record.val_iou > best_iou) {
      best_iou = record.val_iou;
      result.checkpoint.weights = snapshot_weights(*model);
      result.checkpoint.best_val_iou = record.val_iou;
      result.checkpoint.epoch = epoch;
      if (options.run_dir) save_checkpoint(result.checkpoint, *options.run_dir / "best.ckpt");
      line << " (best)";
    }
    log.info(line.str());
    if (options.stop_after && options.stop_after(record)) {
      log.info("stopping early after epoch " + std::to_string(epoch));
      break;
    }
  }
  model->eval();
  return result;
}

TrainResult train(const TrainConfig& config, const DatasetManifest& manifest,
                  SegmentationModel& model, const TrainOptions& options) {
  if (manifest.train.empty()) throw Error(ErrorKind::kManifest, "manifest has no training samples");
  if (manifest.val.empty()) throw Error(ErrorKind::kManifest, "manifest has no validation samples");
  const auto train_tiles = load_tiles(manifest, Split::kTrain, config);
  const auto val_tiles = load_tiles(manifest, Split::kVal, config);
  return train_on_tiles(config, train_tiles, val_tiles, model, options);
}

MetricsReport evaluate_tiles(SegmentationModel& model, const std::vector<NormalizedTile>& tiles,
                             double threshold, Aggregation mode, int batch_size) {
  if (tiles.empty()) throw Error(ErrorKind::kManifest, "evaluation split is empty");
  const auto pass = run_inference(model, tiles, threshold, 1.0, std::max(1, batch_size));
  return aggregate(pass.reports, mode);
}

MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest, Split split) {
  auto config = checkpoint.config();
  config.train_subset = 0;
  config.val_subset = 0;
  if (manifest.entries(split).empty()) {
    throw Error(ErrorKind::kManifest, std::string("split ") + to_string(split) + " is empty");
  }
  auto model = restore_model(checkpoint);
  const auto tiles = load_tiles(manifest, split, config);
  return evaluate_tiles(model, tiles, config.decoder.threshold, config.aggregation,
                        config.batch_size);
}

MetricsReport evaluate(const fs::path& checkpoint_path, const DatasetManifest& manifest,
                       Split split) {
  return evaluate(load_checkpoint(checkpoint_path), manifest, split);
}

MaskRaster predict(const Checkpoint& checkpoint, const fs::path& image_path,
                   const fs::path& out_path, const PredictOptions& options) {
  const auto config = checkpoint.config();
  const auto image = downsample_image(read_image(image_path), config.tile_size);
  auto model = restore_model(checkpoint);

  RasterSample sample;
  sample.image = image;
  sample.mask = MaskRaster(image.height, image.width, 1);
  sample.source_id = image_path.stem().string();
  const auto tile = make_tile(sample);

  torch::Tensor mask_tensor;
  {
    torch::NoGradGuard no_grad;
    const auto prob = model->forward(tile.data.unsqueeze(0)).probabilities;
    mask_tensor = predict_mask(prob, config.decoder.threshold)[0][0].contiguous();
  }
  MaskRaster mask(image.height, image.width, 1);
  std::copy_n(mask_tensor.data_ptr<std::uint8_t>(), mask.data.size(), mask.data.begin());
  write_mask_png(out_path, mask);

  if (options.composite_path) {
    auto composite = side_by_side(image, mask_to_rgb(mask));
    if (options.ground_truth_path) {
      RasterSample truth;
      truth.image = read_image(image_path);
      truth.mask = read_mask(*options.ground_truth_path);
      truth.source_id = sample.source_id;
      composite = side_by_side(composite,
                               mask_to_rgb(downsample_pair(truth, config.tile_size).mask));
    }
    write_image_png(*options.composite_path, composite);
  }
  return mask;
}

}  // namespace footprint
