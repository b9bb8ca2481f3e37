#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/modulelist.h>
#include <torch/nn/modules/container/sequential.h>
#include <torch/nn/modules/linear.h>
#include <torch/nn/pimpl.h>

namespace footprint {

enum class Variant { kB0, kB1, kB2, kB3, kB4 };

inline constexpr std::array<Variant, 5> kAllVariants = {
    Variant::kB0, Variant::kB1, Variant::kB2, Variant::kB3, Variant::kB4};

// "efficientnet-b3" or the short form "b3".
Variant parse_variant(std::string_view name);
std::string to_string(Variant variant);

struct ScalingCoefficients {
  Variant variant = Variant::kB0;
  double width_multiplier = 1.0;
  double depth_multiplier = 1.0;
  int nominal_resolution = 224;
  double dropout_rate = 0.2;
};

ScalingCoefficients scaling_for(Variant variant);

// One group of repeated MBConv blocks after scaling.
struct StageSpec {
  int kernel = 3;
  int stride = 1;
  int expansion_ratio = 1;
  int input_channels = 0;
  int output_channels = 0;
  int repeats = 1;
  double squeeze_excite_ratio = 0.25;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

inline constexpr int kPyramidLevels = 5;

struct EncoderSpec {
  ScalingCoefficients scaling;
  int stem_channels = 32;
  int head_channels = 1280;  // only materialised with a classifier
  std::vector<StageSpec> stages;
  // Stage indices whose outputs form the feature pyramid.
  std::array<int, kPyramidLevels> tap_indices{};

  std::array<int, kPyramidLevels> tap_channels() const;
  // Cumulative stride (stem included) at each tap.
  std::array<int, kPyramidLevels> tap_strides() const;
  int total_blocks() const;
};

// Width rounding: nearest multiple of `divisor`, never dropping more than
// 10% below the scaled value.
int round_channels(double channels, double width_multiplier, int divisor = 8);
int round_repeats(int repeats, double depth_multiplier);

EncoderSpec make_encoder_spec(Variant variant);

enum class Activation { kSwish, kRelu };

struct EncoderOptions {
  bool squeeze_excite = true;
  Activation activation = Activation::kSwish;
  double drop_connect_rate = 0.2;
  // Adds the 1x1 head conv, pooling and a linear classifier so the module
  // matches the published image-classification network.
  bool with_classifier = false;
  int num_classes = 1000;
};

struct FeaturePyramid {
  // Level k has stride 2^(k+1).
  std::vector<torch::Tensor> levels;
};

class MBConvBlockImpl : public torch::nn::Module {
 public:
  MBConvBlockImpl(const StageSpec& stage, int in_channels, int stride,
                  const EncoderOptions& options, double drop_connect);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential expand_{nullptr};
  torch::nn::Sequential depthwise_{nullptr};
  torch::nn::Sequential squeeze_excite_{nullptr};
  torch::nn::Sequential project_{nullptr};
  bool residual_ = false;
  double drop_connect_ = 0.0;
};
TORCH_MODULE(MBConvBlock);

class EfficientNetEncoderImpl : public torch::nn::Module {
 public:
  explicit EfficientNetEncoderImpl(EncoderSpec spec, EncoderOptions options = {});

  // NCHW batch; H and W must be divisible by 32. Throws kDimension before
  // touching any weights otherwise.
  FeaturePyramid forward(const torch::Tensor& batch);
  // Classification logits; requires options.with_classifier.
  torch::Tensor classify(const torch::Tensor& batch);

  const EncoderSpec& spec() const { return spec_; }
  const EncoderOptions& options() const { return options_; }

 private:
  void check_input(const torch::Tensor& batch) const;

  EncoderSpec spec_;
  EncoderOptions options_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::ModuleList stages_{nullptr};
  torch::nn::Sequential head_{nullptr};
  torch::nn::Linear classifier_{nullptr};
};
TORCH_MODULE(EfficientNetEncoder);

FeaturePyramid extract_features(EfficientNetEncoder& encoder, const torch::Tensor& batch);

std::int64_t count_parameters(const torch::nn::Module& module);

struct LoadReport {
  bool loaded = false;
  std::size_t tensors_applied = 0;
  std::vector<std::string> mismatches;
  std::vector<std::string> warnings;
};

// Writes every parameter and buffer under its dotted module path.
void save_weights(const torch::nn::Module& module, const std::filesystem::path& path);

// Overwrites parameters and buffers from an archive written by save_weights.
// Shape mismatches or tensors missing from the archive throw kLoad with the
// full list. A missing file leaves the random initialisation in place and
// returns a report carrying a warning. Extra archive tensors are ignored
// (with a warning) so a classifier checkpoint can seed an encoder.
LoadReport load_pretrained(torch::nn::Module& module, const std::filesystem::path& source);

}  // namespace footprint
