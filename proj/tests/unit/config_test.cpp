#include <fstream>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "fixtures.hpp"
#include "footprint/checkpoint.hpp"
#include "footprint/config.hpp"
#include "footprint/errors.hpp"
#include "footprint/history.hpp"
#include "footprint/run_log.hpp"

using namespace footprint;
using footprint::testing::TempDir;

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

EpochRecord record(int epoch, double val_iou) {
  EpochRecord r;
  r.epoch = epoch;
  r.train_dice_loss = 0.5 / epoch;
  r.train_dice_loss_median = 0.4 / epoch;
  r.train_objective = 1.1 / epoch;
  r.val_dice_loss = 0.3 + 1.0 / 3.0;
  r.train_iou = 0.1 * epoch;
  r.val_iou = val_iou;
  return r;
}

}  // namespace

TEST(Config, DefaultsFromEmptyText) {
  const auto c = parse_config("");
  EXPECT_EQ(c.variant, Variant::kB0);
  EXPECT_EQ(c.tile_size, 256);
  EXPECT_EQ(c.encoder_weights, "auto");
  EXPECT_TRUE(c.decoder.deep_supervision);
  EXPECT_EQ(c.augmentation.seed, c.seed);
}

TEST(Config, YamlKeys) {
  const auto c = parse_config(R"(
encoder: efficientnet-b3
epochs: 7
learning_rate: 0.002
optimizer: adamw
prune_level: L2
decoder_channels: [8, 16, 32, 64]
seed: 5
augmentation:
  horizontal_flip: 0
  rotate90: 1
)");
  EXPECT_EQ(c.variant, Variant::kB3);
  EXPECT_EQ(c.epochs, 7);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.002);
  EXPECT_EQ(c.optimizer, OptimizerKind::kAdamW);
  EXPECT_EQ(c.decoder.prune_level, 2);
  EXPECT_EQ(c.decoder.decoder_channels, (std::vector<int>{8, 16, 32, 64}));
  EXPECT_EQ(c.augmentation.horizontal_flip_prob, 0.0);
  EXPECT_EQ(c.augmentation.rotate90_prob, 1.0);
  EXPECT_EQ(c.augmentation.seed, 5u);
}

TEST(Config, ExplicitAugmentationSeedWins) {
  const auto c = parse_config("augmentation:\n  seed: 9\nseed: 3\n");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.augmentation.seed, 9u);
}

TEST(Config, RejectsUnknownAndInvalid) {
  EXPECT_EQ(kind_of([] { parse_config("epoch: 3"); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("augmentation:\n  shear: 1"); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("epochs: many"); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("tile_size: 100"); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("learning_rate: 0"); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("[1, 2]"); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("epochs: [1"); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("deep_supervision: false\nprune_level: 2"); }),
            ErrorKind::kPruning);
}

TEST(Config, Overrides) {
  const auto c = parse_config("epochs: 3\n", {"epochs=11", "encoder=b2", "augmentation.vertical_flip=0.0",
                                              "decoder_channels=[4, 8, 16, 32]"});
  EXPECT_EQ(c.epochs, 11);
  EXPECT_EQ(c.variant, Variant::kB2);
  EXPECT_EQ(c.augmentation.vertical_flip_prob, 0.0);
  EXPECT_EQ(c.decoder.decoder_channels.front(), 4);
  EXPECT_EQ(kind_of([] { parse_config("", {"epochs"}); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("", {"a.b.c=1"}); }), ErrorKind::kConfiguration);
  EXPECT_EQ(kind_of([] { parse_config("", {"nope=1"}); }), ErrorKind::kConfiguration);
}

TEST(Config, JsonRoundTrip) {
  const auto c = parse_config("encoder: b4\nloss: dice+bce\nloss_heads: final\nthreshold: 0.3\nworkers: 2\n");
  const auto back = parse_config(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.variant, Variant::kB4);
  EXPECT_EQ(back.loss, LossKind::kDiceBce);
  EXPECT_FALSE(back.loss_on_all_heads);
  EXPECT_DOUBLE_EQ(back.decoder.threshold, 0.3);
}

TEST(Config, LoadFile) {
  TempDir dir;
  { std::ofstream(dir / "c.yaml") << "epochs: 4\n"; }
  EXPECT_EQ(load_config(dir / "c.yaml").epochs, 4);
  EXPECT_EQ(load_config(dir / "c.yaml", {"epochs=6"}).epochs, 6);
  EXPECT_EQ(kind_of([&] { load_config(dir / "missing.yaml"); }), ErrorKind::kIo);
}

TEST(History, CsvRoundTripIsExact) {
  TrainingHistory h;
  for (int e = 1; e <= 3; ++e) h.records.push_back(record(e, 0.1 * e + 1e-17));
  EXPECT_EQ(TrainingHistory::from_csv(h.to_csv()), h);
  EXPECT_EQ(h.to_csv().rfind(TrainingHistory::csv_header(), 0), 0u);
}

TEST(History, CorruptRowNamesLine) {
  TrainingHistory h;
  h.records = {record(1, 0.2), record(2, 0.3)};
  auto text = h.to_csv();
  text += "3,0.1,oops,0.1,0.1,0.1,0.1\n";
  try {
    TrainingHistory::from_csv(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kIo);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
}

TEST(History, EpochsMustIncrease) {
  TrainingHistory h;
  h.records = {record(2, 0.2), record(1, 0.3)};
  EXPECT_EQ(kind_of([&] { TrainingHistory::from_csv(h.to_csv()); }), ErrorKind::kIo);
}

TEST(History, BestPicksEarliestMaximum) {
  TrainingHistory h;
  EXPECT_FALSE(h.best().has_value());
  h.records = {record(1, 0.4), record(2, 0.7), record(3, 0.7), record(4, 0.5)};
  EXPECT_EQ(h.best()->epoch, 2);
}

TEST(History, LoadMissingFile) {
  EXPECT_EQ(kind_of([] { TrainingHistory::load("/nonexistent/history.csv"); }), ErrorKind::kIo);
}

TEST(Checkpoint, SaveLoadRestore) {
  TempDir dir;
  auto cfg = parse_config("encoder_weights: none\ntile_size: 64\n");
  torch::manual_seed(0);
  SegmentationModel model(cfg.model_config());
  Checkpoint ck;
  ck.weights = snapshot_weights(*model);
  ck.config_json = cfg.to_json();
  ck.best_val_iou = 0.625;
  ck.epoch = 3;
  save_checkpoint(ck, dir / "best.ckpt");

  const auto back = load_checkpoint(dir / "best.ckpt");
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.best_val_iou, 0.625);
  EXPECT_EQ(back.config().to_json(), cfg.to_json());
  ASSERT_EQ(back.weights.size(), ck.weights.size());
  for (const auto& [name, t] : ck.weights) EXPECT_TRUE(torch::equal(t, back.weights.at(name))) << name;

  auto restored = restore_model(back);
  model->eval();
  torch::NoGradGuard ng;
  const auto x = torch::rand({1, 3, 64, 64});
  EXPECT_TRUE(torch::equal(model->forward(x).probabilities, restored->forward(x).probabilities));
}

TEST(Checkpoint, LoadErrors) {
  TempDir dir;
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "none.ckpt"); }), ErrorKind::kLoad);
  { std::ofstream(dir / "junk.ckpt") << "junk"; }
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "junk.ckpt"); }), ErrorKind::kLoad);

  Checkpoint future;
  future.config_json = parse_config("").to_json();
  future.format_version = kCheckpointFormatVersion + 1;
  save_checkpoint(future, dir / "future.ckpt");
  EXPECT_EQ(kind_of([&] { load_checkpoint(dir / "future.ckpt"); }), ErrorKind::kLoad);
}

TEST(Checkpoint, RestoreRejectsWrongShapes) {
  auto cfg = parse_config("encoder_weights: none\n");
  SegmentationModel model(cfg.model_config());
  Checkpoint ck;
  ck.weights = snapshot_weights(*model);
  ck.config_json = parse_config("encoder: b1\nencoder_weights: none\n").to_json();
  // b0 and b1 share tap widths but not depth, so names differ.
  EXPECT_EQ(kind_of([&] { restore_model(ck); }), ErrorKind::kLoad);
}

TEST(RunLog, KeepsLinesAndFile) {
  TempDir dir;
  {
    RunLog log(dir / "run.log", true);
    log.info("hello");
    log.warn("careful");
    EXPECT_TRUE(log.contains("careful"));
    EXPECT_EQ(log.lines().size(), 2u);
  }
  std::ifstream in(dir / "run.log");
  std::string a, b;
  std::getline(in, a);
  std::getline(in, b);
  EXPECT_NE(a.find("hello"), std::string::npos);
  EXPECT_NE(b.find("careful"), std::string::npos);
}
