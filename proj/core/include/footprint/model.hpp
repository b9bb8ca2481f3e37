#pragma once

#include <optional>

#include <torch/nn/module.h>
#include <torch/nn/pimpl.h>

#include "footprint/backbone.hpp"
#include "footprint/decoder.hpp"

namespace footprint {

struct ModelConfig {
  Variant variant = Variant::kB0;
  EncoderOptions encoder;
  DecoderConfig decoder;
};

// EfficientNet encoder feeding the nested U-Net++ decoder.
class SegmentationModelImpl : public torch::nn::Module {
 public:
  explicit SegmentationModelImpl(const ModelConfig& config);

  // In eval mode uses config.decoder.prune_level when set; training mode
  // always evaluates the full lattice.
  SegmentationOutput forward(const torch::Tensor& batch);
  // Evaluates the lattice restricted to columns <= level with the shared
  // weights of this model.
  SegmentationOutput forward_pruned(const torch::Tensor& batch, int level);
  SegmentationOutput forward_grid(const torch::Tensor& batch, const NodeGrid& grid);

  EfficientNetEncoder& encoder() { return encoder_; }
  NestedDecoder& decoder() { return decoder_; }
  const NodeGrid& grid() const { return decoder_->grid(); }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  EfficientNetEncoder encoder_{nullptr};
  NestedDecoder decoder_{nullptr};
  std::optional<NodeGrid> inference_grid_;
};
TORCH_MODULE(SegmentationModel);

}  // namespace footprint
