#include "footprint/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "footprint/errors.hpp"

namespace footprint {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kAdamW: return "adamw";
    case OptimizerKind::kSgd: return "sgd";
  }
  return "?";
}

std::string to_string(LossKind kind) { return kind == LossKind::kDice ? "dice" : "dice+bce"; }

std::string to_string(TilingMode mode) {
  return mode == TilingMode::kDownsample ? "downsample" : "crop";
}

namespace {

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "adamw") return OptimizerKind::kAdamW;
  if (s == "sgd") return OptimizerKind::kSgd;
  throw Error(ErrorKind::kConfiguration, "optimizer must be adam|adamw|sgd, got " + s);
}

LossKind parse_loss(const std::string& s) {
  if (s == "dice") return LossKind::kDice;
  if (s == "dice+bce" || s == "dice+ce") return LossKind::kDiceBce;
  throw Error(ErrorKind::kConfiguration, "loss must be dice|dice+bce, got " + s);
}

TilingMode parse_tiling(const std::string& s) {
  if (s == "downsample") return TilingMode::kDownsample;
  if (s == "crop") return TilingMode::kCrop;
  throw Error(ErrorKind::kConfiguration, "tiling must be downsample|crop, got " + s);
}

Activation parse_activation(const std::string& s) {
  if (s == "swish" || s == "silu") return Activation::kSwish;
  if (s == "relu") return Activation::kRelu;
  throw Error(ErrorKind::kConfiguration, "activation must be swish|relu, got " + s);
}

std::string activation_name(Activation a) { return a == Activation::kSwish ? "swish" : "relu"; }

template <typename T>
T scalar(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::kConfiguration, "config key '" + key + "' has an invalid value");
  }
}

std::string prune_text(const YAML::Node& node) {
  if (node.IsNull()) return "none";
  return node.as<std::string>();
}

void apply_node(TrainConfig& c, const YAML::Node& root) {
  using Setter = std::function<void(const YAML::Node&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"data_root", [&](auto& n, auto& k) { c.data_root = scalar<std::string>(n, k); }},
      {"tile_size", [&](auto& n, auto& k) { c.tile_size = scalar<int>(n, k); }},
      {"tiling", [&](auto& n, auto& k) { c.tiling = parse_tiling(scalar<std::string>(n, k)); }},
      {"encoder", [&](auto& n, auto& k) { c.variant = parse_variant(scalar<std::string>(n, k)); }},
      {"encoder_weights", [&](auto& n, auto& k) { c.encoder_weights = scalar<std::string>(n, k); }},
      {"weights_dir", [&](auto& n, auto& k) { c.weights_dir = scalar<std::string>(n, k); }},
      {"squeeze_excite", [&](auto& n, auto& k) { c.squeeze_excite = scalar<bool>(n, k); }},
      {"activation",
       [&](auto& n, auto& k) { c.activation = parse_activation(scalar<std::string>(n, k)); }},
      {"drop_connect_rate", [&](auto& n, auto& k) { c.drop_connect_rate = scalar<double>(n, k); }},
      {"decoder_channels",
       [&](auto& n, auto& k) { c.decoder.decoder_channels = scalar<std::vector<int>>(n, k); }},
      {"deep_supervision",
       [&](auto& n, auto& k) { c.decoder.deep_supervision = scalar<bool>(n, k); }},
      {"prune_level",
       [&](auto& n, auto&) { c.decoder.prune_level = parse_prune_level(prune_text(n)); }},
      {"upsample_mode",
       [&](auto& n, auto& k) {
         c.decoder.upsample_mode = parse_upsample_mode(scalar<std::string>(n, k));
       }},
      {"decoder_norm",
       [&](auto& n, auto& k) { c.decoder.norm = parse_norm_kind(scalar<std::string>(n, k)); }},
      {"head_mode",
       [&](auto& n, auto& k) { c.decoder.head_mode = parse_head_mode(scalar<std::string>(n, k)); }},
      {"head_classes", [&](auto& n, auto& k) { c.decoder.head_classes = scalar<int>(n, k); }},
      {"threshold", [&](auto& n, auto& k) { c.decoder.threshold = scalar<double>(n, k); }},
      {"epochs", [&](auto& n, auto& k) { c.epochs = scalar<int>(n, k); }},
      {"batch_size", [&](auto& n, auto& k) { c.batch_size = scalar<int>(n, k); }},
      {"learning_rate", [&](auto& n, auto& k) { c.learning_rate = scalar<double>(n, k); }},
      {"optimizer",
       [&](auto& n, auto& k) { c.optimizer = parse_optimizer(scalar<std::string>(n, k)); }},
      {"weight_decay", [&](auto& n, auto& k) { c.weight_decay = scalar<double>(n, k); }},
      {"momentum", [&](auto& n, auto& k) { c.momentum = scalar<double>(n, k); }},
      {"seed", [&](auto& n, auto& k) {
         c.seed = scalar<std::uint64_t>(n, k);
         c.augmentation.seed = c.seed;
       }},
      {"workers", [&](auto& n, auto& k) { c.workers = scalar<int>(n, k); }},
      {"loss", [&](auto& n, auto& k) { c.loss = parse_loss(scalar<std::string>(n, k)); }},
      {"loss_heads",
       [&](auto& n, auto& k) {
         const auto v = scalar<std::string>(n, k);
         if (v != "all" && v != "final") {
           throw Error(ErrorKind::kConfiguration, "loss_heads must be all|final, got " + v);
         }
         c.loss_on_all_heads = v == "all";
       }},
      {"dice_smooth", [&](auto& n, auto& k) { c.dice_smooth = scalar<double>(n, k); }},
      {"max_steps_per_epoch",
       [&](auto& n, auto& k) { c.max_steps_per_epoch = scalar<int>(n, k); }},
      {"train_subset", [&](auto& n, auto& k) { c.train_subset = scalar<int>(n, k); }},
      {"val_subset", [&](auto& n, auto& k) { c.val_subset = scalar<int>(n, k); }},
      {"aggregation",
       [&](auto& n, auto& k) { c.aggregation = parse_aggregation(scalar<std::string>(n, k)); }},
  };
  const std::map<std::string, std::function<void(const YAML::Node&, const std::string&)>>
      augmentation = {
          {"horizontal_flip",
           [&](auto& n, auto& k) { c.augmentation.horizontal_flip_prob = scalar<double>(n, k); }},
          {"vertical_flip",
           [&](auto& n, auto& k) { c.augmentation.vertical_flip_prob = scalar<double>(n, k); }},
          {"rotate90",
           [&](auto& n, auto& k) { c.augmentation.rotate90_prob = scalar<double>(n, k); }},
          {"seed", [&](auto& n, auto& k) { c.augmentation.seed = scalar<std::uint64_t>(n, k); }},
      };

  if (root.IsNull()) return;
  if (!root.IsMap()) throw Error(ErrorKind::kConfiguration, "config must be a mapping");
  // `seed` also reseeds augmentation; apply it first so an explicit
  // augmentation.seed wins regardless of key order.
  if (root["seed"]) setters.at("seed")(root["seed"], "seed");
  for (const auto& item : root) {
    const auto key = item.first.as<std::string>();
    if (key == "seed") continue;
    if (key == "augmentation") {
      if (!item.second.IsMap()) {
        throw Error(ErrorKind::kConfiguration, "augmentation must be a mapping");
      }
      for (const auto& sub : item.second) {
        const auto sub_key = sub.first.as<std::string>();
        auto it = augmentation.find(sub_key);
        if (it == augmentation.end()) {
          throw Error(ErrorKind::kConfiguration, "unknown config key 'augmentation." + sub_key + "'");
        }
        it->second(sub.second, "augmentation." + sub_key);
      }
      continue;
    }
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorKind::kConfiguration, "unknown config key '" + key + "'");
    it->second(item.second, key);
  }
}

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::kConfiguration, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::kConfiguration, "override '" + assignment + "' has an unparsable value");
  }
  std::vector<std::string> path;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) path.push_back(part);
  if (path.size() == 1) {
    root[path[0]] = value;
  } else if (path.size() == 2) {
    if (!root[path[0]] || !root[path[0]].IsMap()) root[path[0]] = YAML::Node(YAML::NodeType::Map);
    YAML::Node child = root[path[0]];
    child[path[1]] = value;
  } else {
    throw Error(ErrorKind::kConfiguration, "override key '" + key + "' is nested too deeply");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::kConfiguration, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::kConfiguration, "batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kConfiguration, "learning_rate must be > 0");
  if (tile_size < 32 || tile_size % 32 != 0) {
    throw Error(ErrorKind::kConfiguration, "tile_size must be a positive multiple of 32");
  }
  if (workers < 1) throw Error(ErrorKind::kConfiguration, "workers must be >= 1");
  if (!(dice_smooth > 0.0)) throw Error(ErrorKind::kConfiguration, "dice_smooth must be > 0");
  if (!(drop_connect_rate >= 0.0 && drop_connect_rate < 1.0)) {
    throw Error(ErrorKind::kConfiguration, "drop_connect_rate must lie in [0, 1)");
  }
  if (max_steps_per_epoch < 0 || train_subset < 0 || val_subset < 0) {
    throw Error(ErrorKind::kConfiguration, "step and subset limits must be >= 0");
  }
  augmentation.validate();
  decoder.validate();
  if (decoder.prune_level > kPyramidLevels - 1) {
    throw Error(ErrorKind::kConfiguration, "prune_level must be at most L4");
  }
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.variant = variant;
  m.encoder.squeeze_excite = squeeze_excite;
  m.encoder.activation = activation;
  m.encoder.drop_connect_rate = drop_connect_rate;
  m.decoder = decoder;
  return m;
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["data_root"] = data_root;
  j["tile_size"] = tile_size;
  j["tiling"] = to_string(tiling);
  j["encoder"] = to_string(variant);
  j["encoder_weights"] = encoder_weights;
  j["weights_dir"] = weights_dir;
  j["squeeze_excite"] = squeeze_excite;
  j["activation"] = activation_name(activation);
  j["drop_connect_rate"] = drop_connect_rate;
  j["decoder_channels"] = decoder.decoder_channels;
  j["deep_supervision"] = decoder.deep_supervision;
  j["prune_level"] = decoder.prune_level == 0 ? std::string("none")
                                              : "L" + std::to_string(decoder.prune_level);
  j["upsample_mode"] = to_string(decoder.upsample_mode);
  j["decoder_norm"] = to_string(decoder.norm);
  j["head_mode"] = to_string(decoder.head_mode);
  j["head_classes"] = decoder.head_classes;
  j["threshold"] = decoder.threshold;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["learning_rate"] = learning_rate;
  j["optimizer"] = to_string(optimizer);
  j["weight_decay"] = weight_decay;
  j["momentum"] = momentum;
  j["seed"] = seed;
  j["workers"] = workers;
  j["loss"] = to_string(loss);
  j["loss_heads"] = loss_on_all_heads ? "all" : "final";
  j["dice_smooth"] = dice_smooth;
  j["augmentation"] = {{"horizontal_flip", augmentation.horizontal_flip_prob},
                       {"vertical_flip", augmentation.vertical_flip_prob},
                       {"rotate90", augmentation.rotate90_prob},
                       {"seed", augmentation.seed}};
  j["max_steps_per_epoch"] = max_steps_per_epoch;
  j["train_subset"] = train_subset;
  j["val_subset"] = val_subset;
  j["aggregation"] = to_string(aggregation);
  return j.dump(2) + "\n";
}

TrainConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kConfiguration, std::string("cannot parse config: ") + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const auto& o : overrides) apply_override(root, o);
  TrainConfig c;
  c.augmentation.seed = c.seed;
  apply_node(c, root);
  c.validate();
  return c;
}

TrainConfig parse_config(std::string_view text) { return parse_config(text, {}); }

TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

TrainConfig load_config(const std::filesystem::path& path) { return load_config(path, {}); }

}  // namespace footprint
