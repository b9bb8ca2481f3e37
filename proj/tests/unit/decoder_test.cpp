#include <set>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "footprint/decoder.hpp"
#include "footprint/errors.hpp"
#include "footprint/model.hpp"
#include "oracles.hpp"

using namespace footprint;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected footprint::Error";
  return ErrorKind::kIo;
}

const std::vector<int> kB0Taps{16, 24, 40, 112, 320};

NodeGrid b0_grid(DecoderConfig cfg = {}) { return build_grid(5, kB0Taps, cfg); }

}  // namespace

TEST(Grid, CountsForAllDepths) {
  for (int L = 2; L <= 6; ++L) {
    const auto g = build_grid(L, std::vector<int>(L, 8), {});
    EXPECT_EQ(g.node_count(), static_cast<std::size_t>(L * (L + 1) / 2));
    EXPECT_EQ(g.decoder_node_count(), static_cast<std::size_t>(L * (L - 1) / 2));
    EXPECT_TRUE(g.is_acyclic());
    EXPECT_TRUE(footprint::testing::topologically_ordered(g));
    const auto oracle = footprint::testing::enumerate_lattice(L);
    EXPECT_EQ(std::set<NodeId>(g.nodes.begin(), g.nodes.end()), oracle.nodes);
  }
  const auto plain = build_grid(2, std::vector<int>{8, 8}, {});
  EXPECT_EQ(plain.decoder_node_count(), 1u);
}

TEST(Grid, DenseSkipInputs) {
  const auto g = b0_grid();
  EXPECT_EQ(g.fan_in({0, 4}), 5);
  const std::vector<NodeId> expected{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 3}};
  EXPECT_EQ(g.inputs.at({0, 4}), expected);
  EXPECT_EQ(g.fan_in({2, 1}), 2);
  EXPECT_EQ(g.fan_in({0, 0}), 0);
}

TEST(Grid, ChannelWidths) {
  const auto g = b0_grid();
  EXPECT_EQ(g.channels.at({0, 0}), 16);
  EXPECT_EQ(g.channels.at({4, 0}), 320);
  EXPECT_EQ(g.channels.at({0, 3}), 16);
  EXPECT_EQ(g.channels.at({1, 1}), 32);
  EXPECT_EQ(g.channels.at({3, 1}), 128);
  EXPECT_EQ(g.input_channels({0, 1}), 16 + 24);
  EXPECT_EQ(g.input_channels({0, 2}), 16 + 16 + 32);
  EXPECT_EQ(g.input_channels({3, 1}), 112 + 320);
}

TEST(Grid, Heads) {
  const auto g = b0_grid();
  EXPECT_EQ(g.heads().size(), 4u);
  EXPECT_EQ(g.final_head(), (NodeId{0, 4}));
  DecoderConfig no_ds;
  no_ds.deep_supervision = false;
  EXPECT_EQ(b0_grid(no_ds).heads().size(), 1u);
}

TEST(Grid, ConfigurationErrors) {
  EXPECT_EQ(kind_of([] { build_grid(1, std::vector<int>{8}, {}); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { build_grid(5, std::vector<int>{8, 8}, {}); }), ErrorKind::kConfiguration);
  DecoderConfig narrow;
  narrow.decoder_channels = {16, 8};
  EXPECT_EQ(kind_of([&] { build_grid(5, kB0Taps, narrow); }), ErrorKind::kConfiguration);
}

TEST(Prune, LevelOneUsesThreeNodes) {
  const auto p = prune(b0_grid(), 1);
  const std::set<NodeId> nodes(p.nodes.begin(), p.nodes.end());
  EXPECT_TRUE(nodes.contains({0, 0}));
  EXPECT_TRUE(nodes.contains({1, 0}));
  EXPECT_TRUE(nodes.contains({0, 1}));
  EXPECT_EQ(nodes.size(), 3u);
  EXPECT_EQ(p.final_head(), (NodeId{0, 1}));
  EXPECT_EQ(p.heads().size(), 1u);
}

TEST(Prune, IntermediateLevelIsSmallerLattice) {
  const auto p = prune(b0_grid(), 2);
  const auto oracle = footprint::testing::enumerate_lattice(3);
  EXPECT_EQ(std::set<NodeId>(p.nodes.begin(), p.nodes.end()), oracle.nodes);
  for (const auto& id : p.nodes) {
    EXPECT_LE(id.col, 2);
    if (id.col > 0) EXPECT_EQ(p.fan_in(id), id.col + 1);
  }
  EXPECT_EQ(p.heads().size(), 2u);
  EXPECT_EQ(prune(b0_grid(), 4).nodes, b0_grid().nodes);
}

TEST(Prune, Errors) {
  EXPECT_EQ(kind_of([] { prune(b0_grid(), 0); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { prune(b0_grid(), 5); }), ErrorKind::kConfiguration);
  DecoderConfig no_ds;
  no_ds.deep_supervision = false;
  EXPECT_EQ(kind_of([&] { prune(b0_grid(no_ds), 2); }), ErrorKind::kPruning);
  no_ds.prune_level = 2;
  EXPECT_EQ(kind_of([&] { no_ds.validate(); }), ErrorKind::kPruning);
}

TEST(Prune, ParseLevel) {
  EXPECT_EQ(parse_prune_level("L3"), 3);
  EXPECT_EQ(parse_prune_level("2"), 2);
  EXPECT_EQ(parse_prune_level("none"), 0);
  EXPECT_EQ(kind_of([] { parse_prune_level("deep"); }), ErrorKind::kConfiguration);
}

TEST(PredictMask, StrictThreshold) {
  EXPECT_TRUE(torch::equal(predict_mask(torch::full({1, 1, 2, 2}, 0.9), 0.5),
                           torch::ones({1, 1, 2, 2}, torch::kUInt8)));
  EXPECT_TRUE(torch::equal(predict_mask(torch::full({1, 1, 2, 2}, 0.5), 0.5),
                           torch::zeros({1, 1, 2, 2}, torch::kUInt8)));
  const auto m = predict_mask(torch::tensor({{0.4, 0.6}}), 0.5);
  EXPECT_EQ(m[0][0].item<int>(), 0);
  EXPECT_EQ(m[0][1].item<int>(), 1);
  EXPECT_EQ(kind_of([] { predict_mask(torch::zeros({1}), 1.5); }), ErrorKind::kConfiguration);
}

TEST(Decoder, RejectsMismatchedPyramid) {
  torch::manual_seed(0);
  NestedDecoder dec(b0_grid(), DecoderConfig{});
  FeaturePyramid p;
  const int sizes[] = {32, 16, 8, 4, 2};
  for (int k = 0; k < 5; ++k) p.levels.push_back(torch::zeros({1, kB0Taps[k], sizes[k], sizes[k]}));
  p.levels[2] = torch::zeros({1, 41, 8, 8});
  try {
    dec->forward(p, dec->grid(), {64, 64});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
    EXPECT_NE(std::string(e.what()).find("X^{2,0}"), std::string::npos);
  }
  p.levels.pop_back();
  EXPECT_EQ(kind_of([&] { dec->forward(p, dec->grid(), {64, 64}); }), ErrorKind::kDimension);
}

TEST(Model, OutputContract) {
  torch::manual_seed(1);
  SegmentationModel model(ModelConfig{});
  model->eval();
  torch::NoGradGuard ng;
  const auto x = torch::rand({2, 3, 64, 64}) * 2 - 1;
  const auto a = model->forward(x);
  const auto b = model->forward(x);
  EXPECT_EQ(a.probabilities.sizes(), torch::IntArrayRef({2, 1, 64, 64}));
  EXPECT_EQ(a.head_probabilities.size(), 4u);
  EXPECT_EQ(a.head_logits[0].size(1), 1);
  EXPECT_TRUE(torch::equal(a.probabilities, b.probabilities));
  EXPECT_TRUE(torch::equal(a.probabilities, a.head_probabilities.back()));
}

TEST(Model, MeanHeadMode) {
  torch::manual_seed(2);
  ModelConfig mc;
  mc.decoder.head_mode = HeadMode::kMean;
  SegmentationModel model(mc);
  model->eval();
  torch::NoGradGuard ng;
  const auto o = model->forward(torch::rand({1, 3, 64, 64}));
  EXPECT_TRUE(torch::allclose(o.probabilities, torch::stack(o.head_probabilities).mean(0)));
}

TEST(Model, InferencePruningFromConfig) {
  torch::manual_seed(3);
  ModelConfig mc;
  mc.decoder.prune_level = 2;
  SegmentationModel model(mc);
  model->eval();
  torch::NoGradGuard ng;
  const auto x = torch::rand({1, 3, 64, 64});
  const auto pruned = model->forward(x);
  const auto full = model->forward_grid(x, model->grid());
  EXPECT_EQ(pruned.head_probabilities.size(), 2u);
  EXPECT_TRUE(torch::equal(pruned.probabilities, full.head_probabilities[1]));
  // Training always runs the whole lattice.
  model->train();
  EXPECT_EQ(model->forward(x).head_probabilities.size(), 4u);
}

TEST(Model, SoftmaxHeadAndVariants) {
  torch::manual_seed(4);
  ModelConfig mc;
  mc.decoder.head_classes = 2;
  mc.decoder.norm = NormKind::kGroup;
  mc.decoder.upsample_mode = UpsampleMode::kNearest;
  mc.decoder.deep_supervision = false;
  SegmentationModel model(mc);
  model->eval();
  torch::NoGradGuard ng;
  const auto o = model->forward(torch::rand({2, 3, 64, 64}));
  EXPECT_EQ(o.probabilities.sizes(), torch::IntArrayRef({2, 1, 64, 64}));
  EXPECT_EQ(o.head_logits[0].size(1), 2);
  EXPECT_EQ(o.head_probabilities.size(), 1u);
  EXPECT_GE(o.probabilities.min().item<float>(), 0.0f);
  EXPECT_LE(o.probabilities.max().item<float>(), 1.0f);
}
