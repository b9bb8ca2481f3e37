#include "footprint/decoder.hpp"

#include <numeric>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "footprint/errors.hpp"

namespace nn = torch::nn;

namespace footprint {

std::string NodeId::name() const {
  return "X^{" + std::to_string(row) + "," + std::to_string(col) + "}";
}

std::string NodeId::key() const {
  return "x" + std::to_string(row) + "_" + std::to_string(col);
}

void DecoderConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorKind::kConfiguration,
                "threshold must lie in [0, 1], got " + std::to_string(threshold));
  }
  if (head_classes != 1 && head_classes != 2) {
    throw Error(ErrorKind::kConfiguration, "head_classes must be 1 or 2");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw Error(ErrorKind::kConfiguration, "decoder_channels must be positive");
  }
  if (prune_level < 0) throw Error(ErrorKind::kConfiguration, "prune_level must be >= 0");
  if (prune_level > 0 && !deep_supervision) {
    throw Error(ErrorKind::kPruning, "prune_level requires deep_supervision");
  }
}

UpsampleMode parse_upsample_mode(const std::string& s) {
  if (s == "nearest") return UpsampleMode::kNearest;
  if (s == "bilinear") return UpsampleMode::kBilinear;
  throw Error(ErrorKind::kConfiguration, "upsample_mode must be nearest|bilinear, got " + s);
}
std::string to_string(UpsampleMode m) {
  return m == UpsampleMode::kNearest ? "nearest" : "bilinear";
}

NormKind parse_norm_kind(const std::string& s) {
  if (s == "batch") return NormKind::kBatch;
  if (s == "group") return NormKind::kGroup;
  throw Error(ErrorKind::kConfiguration, "decoder_norm must be batch|group, got " + s);
}
std::string to_string(NormKind n) { return n == NormKind::kBatch ? "batch" : "group"; }

HeadMode parse_head_mode(const std::string& s) {
  if (s == "final" || s == "accurate") return HeadMode::kFinal;
  if (s == "mean" || s == "average") return HeadMode::kMean;
  throw Error(ErrorKind::kConfiguration, "head_mode must be final|mean, got " + s);
}
std::string to_string(HeadMode h) { return h == HeadMode::kFinal ? "final" : "mean"; }

int parse_prune_level(const std::string& s) {
  if (s.empty() || s == "none" || s == "full") return 0;
  std::string digits = (s[0] == 'L' || s[0] == 'l') ? s.substr(1) : s;
  try {
    std::size_t used = 0;
    const int level = std::stoi(digits, &used);
    if (used == digits.size() && level >= 0) return level;
  } catch (const std::exception&) {
  }
  throw Error(ErrorKind::kConfiguration, "prune_level must be L1..L4 or none, got " + s);
}

// ---------------------------------------------------------------------------

std::size_t NodeGrid::decoder_node_count() const {
  std::size_t n = 0;
  for (const auto& id : nodes) n += id.col >= 1 ? 1 : 0;
  return n;
}

int NodeGrid::fan_in(NodeId id) const {
  auto it = inputs.find(id);
  return it == inputs.end() ? 0 : static_cast<int>(it->second.size());
}

int NodeGrid::input_channels(NodeId id) const {
  int sum = 0;
  for (const auto& src : inputs.at(id)) sum += channels.at(src);
  return sum;
}

std::vector<NodeId> NodeGrid::heads() const {
  if (!deep_supervision) return {final_head()};
  std::vector<NodeId> out;
  for (int j = 1; j <= max_col; ++j) out.push_back({0, j});
  return out;
}

bool NodeGrid::is_acyclic() const {
  // Every edge must point from an earlier column and from a node listed
  // earlier in `nodes`.
  std::set<NodeId> seen;
  for (const auto& id : nodes) {
    auto it = inputs.find(id);
    if (it != inputs.end()) {
      for (const auto& src : it->second) {
        if (src.col >= id.col || !seen.contains(src)) return false;
      }
    }
    seen.insert(id);
  }
  return true;
}

NodeGrid build_grid(int depth, std::span<const int> feature_channels,
                    const DecoderConfig& config) {
  if (depth < 2) {
    throw Error(ErrorKind::kConfiguration,
                "lattice depth must be at least 2, got " + std::to_string(depth));
  }
  if (static_cast<int>(feature_channels.size()) < depth) {
    throw Error(ErrorKind::kConfiguration, "need " + std::to_string(depth) +
                                               " feature channel counts, got " +
                                               std::to_string(feature_channels.size()));
  }
  const int rows_needed = depth - 1;
  if (static_cast<int>(config.decoder_channels.size()) < rows_needed) {
    throw Error(ErrorKind::kConfiguration,
                "decoder_channels needs at least " + std::to_string(rows_needed) + " entries");
  }

  NodeGrid g;
  g.depth = depth;
  g.max_col = depth - 1;
  g.deep_supervision = config.deep_supervision;
  const auto& widths = config.decoder_channels;
  for (int j = 0; j < depth; ++j) {
    for (int i = 0; i + j <= depth - 1; ++i) {
      const NodeId id{i, j};
      g.nodes.push_back(id);
      if (j == 0) {
        g.channels[id] = feature_channels[i];
        continue;
      }
      g.channels[id] = widths[widths.size() - 1 - i];
      std::vector<NodeId> in;
      for (int k = 0; k < j; ++k) in.push_back({i, k});
      in.push_back({i + 1, j - 1});
      g.inputs[id] = std::move(in);
    }
  }
  return g;
}

NodeGrid prune(const NodeGrid& grid, int level) {
  if (!grid.deep_supervision) {
    throw Error(ErrorKind::kPruning,
                "pruning needs the intermediate heads that deep supervision trains");
  }
  if (level < 1 || level > grid.depth - 1) {
    throw Error(ErrorKind::kConfiguration, "prune level must be in 1.." +
                                               std::to_string(grid.depth - 1) + ", got " +
                                               std::to_string(level));
  }
  NodeGrid out;
  out.depth = grid.depth;
  out.max_col = level;
  out.deep_supervision = grid.deep_supervision;
  // Ancestors of X^{0,level}: the nodes with row + col <= level.
  for (const auto& id : grid.nodes) {
    if (id.row + id.col > level) continue;
    out.nodes.push_back(id);
    out.channels[id] = grid.channels.at(id);
    if (auto it = grid.inputs.find(id); it != grid.inputs.end()) out.inputs[id] = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

nn::Sequential conv_norm_act(int in, int out, NormKind norm) {
  nn::Sequential seq;
  seq->push_back("conv", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
  if (norm == NormKind::kBatch) {
    seq->push_back("norm", nn::BatchNorm2d(out));
  } else {
    seq->push_back("norm", nn::GroupNorm(nn::GroupNormOptions(std::gcd(out, 8), out)));
  }
  seq->push_back("act", nn::ReLU(nn::ReLUOptions(true)));
  return seq;
}

// Concatenated inputs -> two conv-norm-activation stages.
class DecoderBlockImpl : public nn::Module {
 public:
  DecoderBlockImpl(int in, int out, NormKind norm)
      : conv1_(register_module("conv1", conv_norm_act(in, out, norm))),
        conv2_(register_module("conv2", conv_norm_act(out, out, norm))) {}

  torch::Tensor forward(const torch::Tensor& x) { return conv2_->forward(conv1_->forward(x)); }

 private:
  nn::Sequential conv1_;
  nn::Sequential conv2_;
};
TORCH_MODULE(DecoderBlock);

}  // namespace

NestedDecoderImpl::NestedDecoderImpl(NodeGrid grid, DecoderConfig config)
    : grid_(std::move(grid)), config_(std::move(config)) {
  config_.validate();
  std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> blocks;
  for (const auto& id : grid_.nodes) {
    if (id.col == 0) continue;
    blocks.emplace_back(id.key(), DecoderBlock(grid_.input_channels(id), grid_.channels.at(id),
                                               config_.norm)
                                      .ptr());
  }
  // Heads are built for every top-row node so any pruning level can be served.
  std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> heads;
  for (int j = 1; j < grid_.depth; ++j) {
    const NodeId id{0, j};
    if (!grid_.deep_supervision && j != grid_.max_col) continue;
    heads.emplace_back(id.key(), nn::Conv2d(nn::Conv2dOptions(grid_.channels.at(id),
                                                              config_.head_classes, 1))
                                     .ptr());
  }
  blocks_ = register_module("blocks", nn::ModuleDict(blocks));
  heads_ = register_module("heads", nn::ModuleDict(heads));
  for (auto& m : modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
      if (conv->bias.defined()) nn::init::zeros_(conv->bias);
    }
  }
}

torch::Tensor NestedDecoderImpl::upsample(const torch::Tensor& x, torch::IntArrayRef size) const {
  namespace F = nn::functional;
  auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>(size.begin(), size.end()));
  if (config_.upsample_mode == UpsampleMode::kBilinear) {
    opts = opts.mode(torch::kBilinear).align_corners(false);
  } else {
    opts = opts.mode(torch::kNearest);
  }
  return F::interpolate(x, opts);
}

SegmentationOutput NestedDecoderImpl::forward(const FeaturePyramid& pyramid,
                                              const NodeGrid& active,
                                              std::array<std::int64_t, 2> output_size) {
  if (static_cast<int>(pyramid.levels.size()) < grid_.depth) {
    throw Error(ErrorKind::kDimension, "pyramid has " + std::to_string(pyramid.levels.size()) +
                                           " levels, lattice needs " +
                                           std::to_string(grid_.depth));
  }
  for (int i = 0; i < grid_.depth; ++i) {
    const NodeId id{i, 0};
    const auto got = pyramid.levels[i].size(1);
    if (got != grid_.channels.at(id)) {
      std::ostringstream msg;
      msg << "node " << id.name() << " expects " << grid_.channels.at(id)
          << " channels, pyramid level " << i << " has " << got;
      throw Error(ErrorKind::kDimension, msg.str());
    }
  }

  std::map<NodeId, torch::Tensor> value;
  for (int i = 0; i < grid_.depth; ++i) value[{i, 0}] = pyramid.levels[i];
  for (const auto& id : active.nodes) {
    if (id.col == 0) continue;
    const auto& srcs = active.inputs.at(id);
    std::vector<torch::Tensor> parts;
    parts.reserve(srcs.size());
    const auto& same_row = value.at({id.row, 0});
    for (const auto& src : srcs) {
      const auto& t = value.at(src);
      parts.push_back(src.row == id.row ? t : upsample(t, same_row.sizes().slice(2)));
    }
    value[id] = blocks_[id.key()]->as<DecoderBlockImpl>()->forward(torch::cat(parts, 1));
  }

  SegmentationOutput out;
  for (const auto& head : active.heads()) {
    auto logits = heads_[head.key()]->as<nn::Conv2d>()->forward(value.at(head));
    logits = upsample(logits, {output_size[0], output_size[1]});
    auto prob = config_.head_classes == 1 ? torch::sigmoid(logits)
                                          : torch::softmax(logits, 1).narrow(1, 1, 1);
    out.head_logits.push_back(logits);
    out.head_probabilities.push_back(prob);
  }
  if (config_.head_mode == HeadMode::kMean && out.head_probabilities.size() > 1) {
    out.probabilities = torch::stack(out.head_probabilities).mean(0);
  } else {
    out.probabilities = out.head_probabilities.back();
  }
  return out;
}

torch::Tensor predict_mask(const torch::Tensor& probabilities, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorKind::kConfiguration,
                "threshold must lie in [0, 1], got " + std::to_string(threshold));
  }
  return probabilities.gt(threshold).to(torch::kUInt8);
}

}  // namespace footprint
