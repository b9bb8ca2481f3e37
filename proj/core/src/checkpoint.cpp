#include "footprint/checkpoint.hpp"

#include <torch/torch.h>

#include "footprint/errors.hpp"

namespace fs = std::filesystem;

namespace footprint {

namespace {
constexpr std::string_view kWeightsPrefix = "weights.";
}

TrainConfig Checkpoint::config() const { return parse_config(config_json); }

std::map<std::string, torch::Tensor> snapshot_weights(const torch::nn::Module& model) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : model.named_parameters()) out[p.key()] = p.value().detach().clone();
  for (const auto& b : model.named_buffers()) out[b.key()] = b.value().detach().clone();
  return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  torch::serialize::OutputArchive archive;
  archive.write("meta.format_version", c10::IValue(static_cast<int64_t>(checkpoint.format_version)));
  archive.write("meta.config", c10::IValue(checkpoint.config_json));
  archive.write("meta.best_val_iou", c10::IValue(checkpoint.best_val_iou));
  archive.write("meta.epoch", c10::IValue(static_cast<int64_t>(checkpoint.epoch)));
  for (const auto& [name, tensor] : checkpoint.weights) {
    archive.write(std::string(kWeightsPrefix) + name, tensor);
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write beside the target and rename so readers never see a partial file.
  const fs::path tmp = path.string() + ".tmp";
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error&) {
    throw Error(ErrorKind::kIo, "cannot write checkpoint " + path.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorKind::kLoad, "checkpoint " + path.string() + " does not exist");
  }
  torch::serialize::InputArchive archive;
  Checkpoint c;
  try {
    archive.load_from(path.string());
    c10::IValue v;
    archive.read("meta.format_version", v);
    c.format_version = static_cast<int>(v.toInt());
    if (c.format_version != kCheckpointFormatVersion) {
      throw Error(ErrorKind::kLoad, "checkpoint " + path.string() + " has format version " +
                                        std::to_string(c.format_version) + ", expected " +
                                        std::to_string(kCheckpointFormatVersion));
    }
    archive.read("meta.config", v);
    c.config_json = v.toStringRef();
    archive.read("meta.best_val_iou", v);
    c.best_val_iou = v.toDouble();
    archive.read("meta.epoch", v);
    c.epoch = static_cast<int>(v.toInt());
    for (const auto& key : archive.keys()) {
      if (!key.starts_with(kWeightsPrefix)) continue;
      torch::Tensor t;
      archive.read(key, t);
      c.weights[key.substr(kWeightsPrefix.size())] = t;
    }
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::kLoad, "cannot read checkpoint " + path.string());
  }
  return c;
}

SegmentationModel restore_model(const Checkpoint& checkpoint) {
  const auto config = checkpoint.config();
  SegmentationModel model(config.model_config());
  std::vector<std::string> problems;
  auto assign = [&](const std::string& name, torch::Tensor& dst) {
    auto it = checkpoint.weights.find(name);
    if (it == checkpoint.weights.end()) {
      problems.push_back(name + ": missing");
    } else if (it->second.sizes() != dst.sizes()) {
      problems.push_back(name + ": shape mismatch");
    } else {
      dst.copy_(it->second);
    }
  };
  {
    torch::NoGradGuard no_grad;
    for (auto& p : model->named_parameters()) assign(p.key(), p.value());
    for (auto& b : model->named_buffers()) assign(b.key(), b.value());
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match its own model config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::kLoad, msg);
  }
  model->eval();
  return model;
}

}  // namespace footprint
