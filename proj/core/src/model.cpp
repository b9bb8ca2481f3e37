#include "footprint/model.hpp"

#include <torch/torch.h>

namespace footprint {

SegmentationModelImpl::SegmentationModelImpl(const ModelConfig& config) : config_(config) {
  config_.decoder.validate();
  auto spec = make_encoder_spec(config_.variant);
  const auto taps = spec.tap_channels();
  auto grid = build_grid(kPyramidLevels, taps, config_.decoder);
  if (config_.decoder.prune_level > 0) {
    inference_grid_ = prune(grid, config_.decoder.prune_level);
  }
  auto encoder_options = config_.encoder;
  encoder_options.with_classifier = false;
  encoder_ = register_module("encoder", EfficientNetEncoder(std::move(spec), encoder_options));
  decoder_ = register_module("decoder", NestedDecoder(std::move(grid), config_.decoder));
}

SegmentationOutput SegmentationModelImpl::forward_grid(const torch::Tensor& batch,
                                                       const NodeGrid& grid) {
  auto pyramid = encoder_->forward(batch);
  return decoder_->forward(pyramid, grid, {batch.size(2), batch.size(3)});
}

SegmentationOutput SegmentationModelImpl::forward(const torch::Tensor& batch) {
  // Training always runs the full lattice so every head receives gradient.
  if (!is_training() && inference_grid_) return forward_grid(batch, *inference_grid_);
  return forward_grid(batch, decoder_->grid());
}

SegmentationOutput SegmentationModelImpl::forward_pruned(const torch::Tensor& batch, int level) {
  return forward_grid(batch, prune(decoder_->grid(), level));
}

}  // namespace footprint
