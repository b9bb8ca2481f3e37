#include "footprint/backbone.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "footprint/errors.hpp"

namespace fs = std::filesystem;
namespace nn = torch::nn;

namespace footprint {

Variant parse_variant(std::string_view name) {
  std::string_view s = name;
  constexpr std::string_view prefix = "efficientnet-";
  if (s.starts_with(prefix)) s.remove_prefix(prefix.size());
  if (s == "b0") return Variant::kB0;
  if (s == "b1") return Variant::kB1;
  if (s == "b2") return Variant::kB2;
  if (s == "b3") return Variant::kB3;
  if (s == "b4") return Variant::kB4;
  throw Error(ErrorKind::kConfiguration,
              "unknown encoder variant '" + std::string(name) +
                  "' (expected efficientnet-b0 .. efficientnet-b4)");
}

std::string to_string(Variant variant) {
  return "efficientnet-b" + std::to_string(static_cast<int>(variant));
}

ScalingCoefficients scaling_for(Variant variant) {
  switch (variant) {
    case Variant::kB0: return {variant, 1.0, 1.0, 224, 0.2};
    case Variant::kB1: return {variant, 1.0, 1.1, 240, 0.2};
    case Variant::kB2: return {variant, 1.1, 1.2, 260, 0.3};
    case Variant::kB3: return {variant, 1.2, 1.4, 300, 0.3};
    case Variant::kB4: return {variant, 1.4, 1.8, 380, 0.4};
  }
  throw Error(ErrorKind::kConfiguration, "unknown encoder variant");
}

int round_channels(double channels, double width_multiplier, int divisor) {
  const double scaled = channels * width_multiplier;
  int rounded = std::max(divisor, static_cast<int>(scaled + divisor / 2.0) / divisor * divisor);
  if (rounded < 0.9 * scaled) rounded += divisor;
  return rounded;
}

int round_repeats(int repeats, double depth_multiplier) {
  return static_cast<int>(std::ceil(repeats * depth_multiplier));
}

std::array<int, kPyramidLevels> EncoderSpec::tap_channels() const {
  std::array<int, kPyramidLevels> out{};
  for (int k = 0; k < kPyramidLevels; ++k) out[k] = stages.at(tap_indices[k]).output_channels;
  return out;
}

std::array<int, kPyramidLevels> EncoderSpec::tap_strides() const {
  std::array<int, kPyramidLevels> out{};
  int stride = 2;  // stem
  int tap = 0;
  for (int i = 0; i < static_cast<int>(stages.size()) && tap < kPyramidLevels; ++i) {
    stride *= stages[i].stride;
    if (tap_indices[tap] == i) out[tap++] = stride;
  }
  return out;
}

int EncoderSpec::total_blocks() const {
  int n = 0;
  for (const auto& s : stages) n += s.repeats;
  return n;
}

EncoderSpec make_encoder_spec(Variant variant) {
  // Baseline (b0) stage table: kernel, stride, expansion, channels, repeats.
  struct Base {
    int kernel, stride, expansion, channels, repeats;
  };
  static constexpr std::array<Base, 7> kBase = {{
      {3, 1, 1, 16, 1},
      {3, 2, 6, 24, 2},
      {5, 2, 6, 40, 2},
      {3, 2, 6, 80, 3},
      {5, 1, 6, 112, 3},
      {5, 2, 6, 192, 4},
      {3, 1, 6, 320, 1},
  }};

  EncoderSpec spec;
  spec.scaling = scaling_for(variant);
  const double w = spec.scaling.width_multiplier;
  const double d = spec.scaling.depth_multiplier;
  spec.stem_channels = round_channels(32, w);
  int in = spec.stem_channels;
  for (const auto& b : kBase) {
    StageSpec s;
    s.kernel = b.kernel;
    s.stride = b.stride;
    s.expansion_ratio = b.expansion;
    s.input_channels = in;
    s.output_channels = round_channels(b.channels, w);
    s.repeats = round_repeats(b.repeats, d);
    s.squeeze_excite_ratio = 0.25;
    spec.stages.push_back(s);
    in = s.output_channels;
  }
  spec.head_channels = 4 * spec.stages.back().output_channels;
  // Last stage at each of the strides 2, 4, 8, 16, 32.
  spec.tap_indices = {0, 1, 2, 4, 6};
  return spec;
}

// ---------------------------------------------------------------------------

namespace {

nn::AnyModule activation(Activation act) {
  if (act == Activation::kRelu) return nn::AnyModule(nn::ReLU(nn::ReLUOptions(true)));
  return nn::AnyModule(nn::SiLU());
}

nn::Sequential conv_bn(int in, int out, int kernel, int stride, int groups,
                       const EncoderOptions& options, bool with_activation) {
  nn::Sequential seq;
  seq->push_back("conv", nn::Conv2d(nn::Conv2dOptions(in, out, kernel)
                                        .stride(stride)
                                        .padding((kernel - 1) / 2)
                                        .groups(groups)
                                        .bias(false)));
  seq->push_back("bn", nn::BatchNorm2d(out));
  if (with_activation) seq->push_back("act", activation(options.activation));
  return seq;
}

// Sigmoid gate computed from globally pooled features.
class SqueezeExciteImpl : public nn::Module {
 public:
  SqueezeExciteImpl(int channels, int squeeze, Activation act)
      : reduce_(register_module("reduce", nn::Conv2d(nn::Conv2dOptions(channels, squeeze, 1)))),
        expand_(register_module("expand", nn::Conv2d(nn::Conv2dOptions(squeeze, channels, 1)))),
        act_(act) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto s = torch::adaptive_avg_pool2d(x, {1, 1});
    s = reduce_->forward(s);
    s = act_ == Activation::kRelu ? torch::relu(s) : torch::silu(s);
    s = torch::sigmoid(expand_->forward(s));
    return x * s;
  }

 private:
  nn::Conv2d reduce_;
  nn::Conv2d expand_;
  Activation act_;
};
TORCH_MODULE(SqueezeExcite);

}  // namespace

MBConvBlockImpl::MBConvBlockImpl(const StageSpec& stage, int in_channels, int stride,
                                 const EncoderOptions& options, double drop_connect)
    : residual_(stride == 1 && in_channels == stage.output_channels),
      drop_connect_(drop_connect) {
  const int hidden = in_channels * stage.expansion_ratio;
  if (stage.expansion_ratio != 1) {
    expand_ = register_module("expand", conv_bn(in_channels, hidden, 1, 1, 1, options, true));
  }
  depthwise_ = register_module(
      "depthwise", conv_bn(hidden, hidden, stage.kernel, stride, hidden, options, true));
  if (options.squeeze_excite && stage.squeeze_excite_ratio > 0.0) {
    const int squeeze =
        std::max(1, static_cast<int>(in_channels * stage.squeeze_excite_ratio));
    squeeze_excite_ = register_module(
        "se", nn::Sequential(SqueezeExcite(hidden, squeeze, options.activation)));
  }
  project_ = register_module(
      "project", conv_bn(hidden, stage.output_channels, 1, 1, 1, options, false));
}

torch::Tensor MBConvBlockImpl::forward(const torch::Tensor& x) {
  auto y = x;
  if (!expand_.is_empty()) y = expand_->forward(y);
  y = depthwise_->forward(y);
  if (!squeeze_excite_.is_empty()) y = squeeze_excite_->forward(y);
  y = project_->forward(y);
  if (!residual_) return y;
  if (is_training() && drop_connect_ > 0.0) {
    // Per-sample stochastic depth.
    const double keep = 1.0 - drop_connect_;
    auto mask = torch::empty({y.size(0), 1, 1, 1}, y.options()).bernoulli_(keep);
    y = y * mask / keep;
  }
  return y + x;
}

EfficientNetEncoderImpl::EfficientNetEncoderImpl(EncoderSpec spec, EncoderOptions options)
    : spec_(std::move(spec)), options_(options) {
  stem_ = register_module("stem", conv_bn(3, spec_.stem_channels, 3, 2, 1, options_, true));
  stages_ = register_module("stages", nn::ModuleList());
  const int total = spec_.total_blocks();
  int block_id = 0;
  for (const auto& stage : spec_.stages) {
    nn::Sequential blocks;
    for (int r = 0; r < stage.repeats; ++r) {
      const int in = r == 0 ? stage.input_channels : stage.output_channels;
      const int stride = r == 0 ? stage.stride : 1;
      const double rate = options_.drop_connect_rate * block_id / total;
      blocks->push_back(MBConvBlock(stage, in, stride, options_, rate));
      ++block_id;
    }
    stages_->push_back(blocks);
  }
  if (options_.with_classifier) {
    head_ = register_module("head", conv_bn(spec_.stages.back().output_channels,
                                            spec_.head_channels, 1, 1, 1, options_, true));
    classifier_ = register_module(
        "classifier", nn::Linear(spec_.head_channels, options_.num_classes));
  }

  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    } else if (auto* linear = m->as<nn::Linear>()) {
      const double range = 1.0 / std::sqrt(static_cast<double>(linear->weight.size(0)));
      nn::init::uniform_(linear->weight, -range, range);
      nn::init::zeros_(linear->bias);
    }
  }
}

void EfficientNetEncoderImpl::check_input(const torch::Tensor& batch) const {
  if (batch.dim() != 4 || batch.size(1) != 3) {
    std::ostringstream msg;
    msg << "encoder expects an N x 3 x H x W batch, got " << batch.sizes();
    throw Error(ErrorKind::kDimension, msg.str());
  }
  if (batch.size(2) % 32 != 0 || batch.size(3) % 32 != 0) {
    std::ostringstream msg;
    msg << "encoder input " << batch.size(2) << "x" << batch.size(3)
        << " is not divisible by 32";
    throw Error(ErrorKind::kDimension, msg.str());
  }
}

FeaturePyramid EfficientNetEncoderImpl::forward(const torch::Tensor& batch) {
  check_input(batch);
  FeaturePyramid pyramid;
  auto x = stem_->forward(batch);
  int tap = 0;
  for (std::size_t i = 0; i < stages_->size(); ++i) {
    x = stages_[i]->as<nn::Sequential>()->forward(x);
    if (tap < kPyramidLevels && spec_.tap_indices[tap] == static_cast<int>(i)) {
      pyramid.levels.push_back(x);
      ++tap;
    }
  }
  return pyramid;
}

torch::Tensor EfficientNetEncoderImpl::classify(const torch::Tensor& batch) {
  if (!options_.with_classifier) {
    throw Error(ErrorKind::kConfiguration, "encoder was built without a classifier head");
  }
  check_input(batch);
  auto x = stem_->forward(batch);
  for (std::size_t i = 0; i < stages_->size(); ++i) {
    x = stages_[i]->as<nn::Sequential>()->forward(x);
  }
  x = head_->forward(x);
  x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
  x = torch::dropout(x, spec_.scaling.dropout_rate, is_training());
  return classifier_->forward(x);
}

FeaturePyramid extract_features(EfficientNetEncoder& encoder, const torch::Tensor& batch) {
  return encoder->forward(batch);
}

std::int64_t count_parameters(const nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, torch::Tensor> named_state(const nn::Module& module) {
  std::map<std::string, torch::Tensor> state;
  for (const auto& item : module.named_parameters()) state[item.key()] = item.value();
  for (const auto& item : module.named_buffers()) state[item.key()] = item.value();
  return state;
}

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream s;
  s << t.sizes();
  return s.str();
}

}  // namespace

void save_weights(const nn::Module& module, const fs::path& path) {
  torch::serialize::OutputArchive archive;
  for (const auto& [name, tensor] : named_state(module)) archive.write(name, tensor.detach());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::kIo, "cannot write weights to " + path.string());
  }
}

LoadReport load_pretrained(nn::Module& module, const fs::path& source) {
  LoadReport report;
  if (!fs::is_regular_file(source)) {
    report.warnings.push_back("weights file " + source.string() +
                              " not found; keeping random initialisation");
    return report;
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(source.string());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::kLoad, "cannot parse weights archive " + source.string());
  }

  auto state = named_state(module);
  std::map<std::string, torch::Tensor> incoming;
  std::set<std::string> unused;
  for (const auto& key : archive.keys()) {
    torch::Tensor t;
    if (archive.try_read(key, t)) {
      incoming[key] = t;
      if (!state.contains(key)) unused.insert(key);
    }
  }
  for (const auto& [name, tensor] : state) {
    auto it = incoming.find(name);
    if (it == incoming.end()) {
      report.mismatches.push_back(name + ": missing from archive");
    } else if (it->second.sizes() != tensor.sizes()) {
      report.mismatches.push_back(name + ": expected " + shape_string(tensor) + ", archive has " +
                                  shape_string(it->second));
    }
  }
  if (!report.mismatches.empty()) {
    std::string msg = "weights in " + source.string() + " do not fit the model (" +
                      std::to_string(report.mismatches.size()) + " tensors):";
    for (const auto& m : report.mismatches) msg += "\n  - " + m;
    throw Error(ErrorKind::kLoad, msg);
  }

  torch::NoGradGuard no_grad;
  for (auto& [name, tensor] : state) {
    tensor.copy_(incoming.at(name));
    ++report.tensors_applied;
  }
  if (!unused.empty()) {
    report.warnings.push_back(std::to_string(unused.size()) +
                              " archive tensors had no counterpart and were ignored");
  }
  report.loaded = true;
  return report;
}

}  // namespace footprint
