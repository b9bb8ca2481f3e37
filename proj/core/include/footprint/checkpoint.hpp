#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <torch/types.h>

#include "footprint/config.hpp"
#include "footprint/model.hpp"

namespace footprint {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::map<std::string, torch::Tensor> weights;  // parameters and buffers
  std::string config_json;                        // effective TrainConfig
  double best_val_iou = 0.0;
  int epoch = 0;
  int format_version = kCheckpointFormatVersion;

  TrainConfig config() const;
};

// Detached copies of every parameter and buffer of `model`.
std::map<std::string, torch::Tensor> snapshot_weights(const torch::nn::Module& model);

// LibTorch archive with keys "meta.*" for the header fields and
// "weights.<name>" for tensors.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws kLoad for a missing or unreadable file and for an unknown
// format_version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Fresh model from the embedded config with the stored weights, in eval
// mode. Throws kLoad on any shape or name mismatch.
SegmentationModel restore_model(const Checkpoint& checkpoint);

}  // namespace footprint
