#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "footprint/backbone.hpp"
#include "footprint/dataset.hpp"
#include "footprint/decoder.hpp"
#include "footprint/metrics.hpp"
#include "footprint/model.hpp"

namespace footprint {

enum class OptimizerKind { kAdam, kAdamW, kSgd };
enum class LossKind { kDice, kDiceBce };
enum class TilingMode { kDownsample, kCrop };

// Everything a run needs. Serialised flat except for `augmentation.*`; see
// README for the key list.
struct TrainConfig {
  std::string data_root;
  int tile_size = kDefaultTileSize;
  TilingMode tiling = TilingMode::kDownsample;

  Variant variant = Variant::kB0;
  // "auto": <weights_dir>/<variant>.pt if present, else random init.
  // "none": random init. Anything else is a weights archive path.
  std::string encoder_weights = "auto";
  std::string weights_dir = "weights";
  bool squeeze_excite = true;
  Activation activation = Activation::kSwish;
  double drop_connect_rate = 0.2;
  DecoderConfig decoder;

  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double weight_decay = 0.0;
  double momentum = 0.9;  // sgd only
  std::uint64_t seed = 42;
  int workers = 1;

  LossKind loss = LossKind::kDice;
  bool loss_on_all_heads = true;
  double dice_smooth = 1.0;
  AugmentationPolicy augmentation{0.5, 0.5, 0.25, 42};

  // 0 = no limit.
  int max_steps_per_epoch = 0;
  int train_subset = 0;
  int val_subset = 0;
  Aggregation aggregation = Aggregation::kPerImageMean;

  void validate() const;
  ModelConfig model_config() const;

  std::string to_json() const;
};

// YAML or JSON text. Unknown keys are rejected so typos surface early.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

// `overrides` are "key=value" strings; nested keys use dots
// (augmentation.horizontal_flip=0). Values are parsed as YAML scalars or
// flow sequences. Applied after the file, before validation.
TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides);
TrainConfig parse_config(std::string_view text, const std::vector<std::string>& overrides);

std::string to_string(OptimizerKind kind);
std::string to_string(LossKind kind);
std::string to_string(TilingMode mode);

}  // namespace footprint
