#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/moduledict.h>
#include <torch/nn/pimpl.h>

#include "footprint/backbone.hpp"

namespace footprint {

// Lattice node X^{row,col}. Column 0 holds encoder features.
struct NodeId {
  int row = 0;
  int col = 0;

  auto operator<=>(const NodeId&) const = default;
  std::string name() const;  // "X^{i,j}"
  std::string key() const;   // "x{i}_{j}", module-safe
};

enum class UpsampleMode { kNearest, kBilinear };
enum class NormKind { kBatch, kGroup };
// Prediction from the deepest active head, or the mean of all heads.
enum class HeadMode { kFinal, kMean };

struct DecoderConfig {
  // Widths of the decoder rows, deepest first; the top row (row 0) takes the
  // last entry. Must provide at least depth - 1 entries.
  std::vector<int> decoder_channels{256, 128, 64, 32, 16};
  bool deep_supervision = true;
  int prune_level = 0;  // 0 = full lattice, otherwise k in 1..depth-1
  UpsampleMode upsample_mode = UpsampleMode::kBilinear;
  NormKind norm = NormKind::kBatch;
  HeadMode head_mode = HeadMode::kFinal;
  int head_classes = 1;  // 1 = sigmoid head, 2 = softmax head (channel 1 used)
  double threshold = 0.5;

  void validate() const;
};

UpsampleMode parse_upsample_mode(const std::string& s);
std::string to_string(UpsampleMode m);
NormKind parse_norm_kind(const std::string& s);
std::string to_string(NormKind n);
HeadMode parse_head_mode(const std::string& s);
std::string to_string(HeadMode h);
// "L1".."L4" (or a bare integer); "none"/"full" -> 0.
int parse_prune_level(const std::string& s);

struct NodeGrid {
  int depth = 0;      // L
  int max_col = 0;    // deepest active column; depth - 1 when unpruned
  bool deep_supervision = true;
  // Topological order: column-major, rows ascending within a column.
  std::vector<NodeId> nodes;
  std::map<NodeId, int> channels;
  // For col >= 1: same-row predecessors X^{i,0..j-1} followed by the lower
  // node X^{i+1,j-1}, which is upsampled before concatenation.
  std::map<NodeId, std::vector<NodeId>> inputs;

  bool contains(NodeId id) const { return channels.contains(id); }
  std::size_t node_count() const { return nodes.size(); }
  std::size_t decoder_node_count() const;
  int fan_in(NodeId id) const;
  int input_channels(NodeId id) const;
  // X^{0,1..max_col} with deep supervision, otherwise X^{0,max_col}.
  std::vector<NodeId> heads() const;
  NodeId final_head() const { return {0, max_col}; }
  bool is_acyclic() const;
};

// Throws kConfiguration for depth < 2, fewer feature channels than depth,
// or too few decoder widths.
NodeGrid build_grid(int depth, std::span<const int> feature_channels,
                    const DecoderConfig& config);

// Sub-lattice feeding head X^{0,level}: nodes with row + col <= level, so
// every kept node has col <= level. Requires deep supervision (kPruning) and
// 1 <= level <= depth - 1 (kConfiguration).
NodeGrid prune(const NodeGrid& grid, int level);

struct SegmentationOutput {
  torch::Tensor probabilities;               // N x 1 x H x W in [0, 1]
  std::vector<torch::Tensor> head_probabilities;  // per head, N x 1 x H x W
  std::vector<torch::Tensor> head_logits;    // per head, N x C x H x W
};

class NestedDecoderImpl : public torch::nn::Module {
 public:
  NestedDecoderImpl(NodeGrid grid, DecoderConfig config);

  // Evaluates the nodes of `active` (the full grid or a pruned view of it)
  // and returns heads upsampled to `output_size`. Throws kDimension naming
  // the first encoder node whose channels disagree with the pyramid.
  SegmentationOutput forward(const FeaturePyramid& pyramid, const NodeGrid& active,
                             std::array<std::int64_t, 2> output_size);

  const NodeGrid& grid() const { return grid_; }
  const DecoderConfig& config() const { return config_; }

 private:
  torch::Tensor upsample(const torch::Tensor& x, torch::IntArrayRef size) const;

  NodeGrid grid_;
  DecoderConfig config_;
  torch::nn::ModuleDict blocks_{nullptr};
  torch::nn::ModuleDict heads_{nullptr};
};
TORCH_MODULE(NestedDecoder);

// Strict comparison: probabilities > threshold. Throws kConfiguration for a
// threshold outside [0, 1]. Returns a uint8 tensor of 0/1.
torch::Tensor predict_mask(const torch::Tensor& probabilities, double threshold = 0.5);

}  // namespace footprint
