#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "footprint/backbone.hpp"
#include "footprint/checkpoint.hpp"
#include "footprint/config.hpp"
#include "footprint/dataset.hpp"
#include "footprint/history.hpp"
#include "footprint/metrics.hpp"
#include "footprint/model.hpp"
#include "footprint/run_log.hpp"

namespace footprint {

// Loads and tiles one split according to the config's tile size, tiling
// mode and subset limit. Loading fans out over `config.workers` threads;
// the result order is the manifest order either way.
std::vector<NormalizedTile> load_tiles(const DatasetManifest& manifest, Split split,
                                       const TrainConfig& config);

// Applies config.encoder_weights to the model's encoder and logs the outcome.
LoadReport initialise_encoder(SegmentationModel& model, const TrainConfig& config, RunLog& log);

struct TrainOptions {
  // When set: history.csv is appended after every epoch, best.ckpt is
  // rewritten on every improvement and config.json holds the effective config.
  std::optional<std::filesystem::path> run_dir;
  RunLog* log = nullptr;
  // Opt-in early stop, checked after every epoch's record is written.
  std::function<bool(const EpochRecord&)> stop_after;
};

struct TrainResult {
  TrainingHistory history;
  Checkpoint checkpoint;  // weights of the epoch with the best val IoU
};

// Same seed and workers == 1 reproduce the history bit for bit. Throws
// kManifest for an empty split, kConfiguration when the model was built for
// another variant and kDivergence (with epoch and step) on a non-finite loss.
TrainResult train(const TrainConfig& config, const DatasetManifest& manifest,
                  SegmentationModel& model, const TrainOptions& options = {});

// In-memory variant used by tests and tools that already hold tiles.
TrainResult train_on_tiles(const TrainConfig& config, const std::vector<NormalizedTile>& train_tiles,
                           const std::vector<NormalizedTile>& val_tiles, SegmentationModel& model,
                           const TrainOptions& options = {});

// Thresholded per-tile evaluation of a model in inference mode.
MetricsReport evaluate_tiles(SegmentationModel& model, const std::vector<NormalizedTile>& tiles,
                             double threshold, Aggregation mode, int batch_size = 4);

MetricsReport evaluate(const Checkpoint& checkpoint, const DatasetManifest& manifest, Split split);
MetricsReport evaluate(const std::filesystem::path& checkpoint_path,
                       const DatasetManifest& manifest, Split split);

struct PredictOptions {
  std::optional<std::filesystem::path> composite_path;
  // Ground truth to place in the composite next to the prediction.
  std::optional<std::filesystem::path> ground_truth_path;
};

// Reads the image, downsamples it to the tile size, writes the binary mask as
// an 8-bit 0/255 PNG and returns it.
MaskRaster predict(const Checkpoint& checkpoint, const std::filesystem::path& image_path,
                   const std::filesystem::path& out_path, const PredictOptions& options = {});

}  // namespace footprint
