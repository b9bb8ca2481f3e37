#include "footprint/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "footprint/errors.hpp"
#include "footprint/image_io.hpp"

namespace fs = std::filesystem;

namespace footprint {

const char* to_string(Split split) noexcept {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "valid" || name == "validation") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw Error(ErrorKind::kConfiguration,
              "unknown split '" + std::string(name) + "' (expected train|val|test)");
}

void validate_sample(const RasterSample& sample) {
  if (!sample.mask.same_extent(sample.image.height, sample.image.width)) {
    std::ostringstream msg;
    msg << "sample '" << sample.source_id << "': image is " << sample.image.height
        << "x" << sample.image.width << " but mask is " << sample.mask.height << "x"
        << sample.mask.width;
    throw Error(ErrorKind::kDimension, msg.str());
  }
  for (auto v : sample.mask.data) {
    if (v > 1) {
      throw Error(ErrorKind::kInputDomain,
                  "sample '" + sample.source_id + "': mask is not binary");
    }
  }
}

double normalize_value(double value) noexcept { return value / 127.5 - 1.0; }

std::uint8_t denormalize_value(double value) noexcept {
  const double scaled = std::floor((value + 1.0) * 127.5 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

RealRaster normalize(const ImageRaster& image) {
  RealRaster out(image.height, image.width, image.channels);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      for (int ch = 0; ch < image.channels; ++ch) {
        const auto v = image.at(r, c, ch);
        if (v < 0 || v > 255) {
          std::ostringstream msg;
          msg << "intensity " << v << " at (row " << r << ", col " << c
              << ", channel " << ch << ") is outside [0, 255]";
          throw Error(ErrorKind::kInputDomain, msg.str());
        }
        out.at(r, c, ch) = static_cast<float>(normalize_value(v));
      }
    }
  }
  return out;
}

ImageRaster denormalize(const RealRaster& tensor) {
  ImageRaster out(tensor.height, tensor.width, tensor.channels);
  std::transform(tensor.data.begin(), tensor.data.end(), out.data.begin(),
                 [](float x) { return static_cast<std::int32_t>(denormalize_value(x)); });
  return out;
}

MaskRaster binarize_mask(const ImageRaster& raw) {
  MaskRaster out(raw.height, raw.width, 1);
  for (int r = 0; r < raw.height; ++r) {
    for (int c = 0; c < raw.width; ++c) {
      out.at(r, c) = raw.at(r, c, 0) > kMaskThreshold ? 1 : 0;
    }
  }
  return out;
}

namespace {

void require_tile_size(int tile_size) {
  if (tile_size < 1) {
    throw Error(ErrorKind::kConfiguration,
                "tile_size must be positive, got " + std::to_string(tile_size));
  }
}

ImageRaster resize_image(const ImageRaster& image, int size) {
  cv::Mat src(image.height, image.width, CV_32FC(image.channels));
  std::copy(image.data.begin(), image.data.end(), src.ptr<float>());
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  ImageRaster out(size, size, image.channels);
  const float* p = dst.ptr<float>();
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = static_cast<std::int32_t>(
        std::clamp(std::floor(p[i] + 0.5f), 0.0f, 255.0f));
  }
  return out;
}

MaskRaster resize_mask(const MaskRaster& mask, int size) {
  cv::Mat src(mask.height, mask.width, CV_8UC1,
              const_cast<std::uint8_t*>(mask.data.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(size, size), 0, 0, cv::INTER_NEAREST);
  MaskRaster out(size, size, 1);
  const std::uint8_t* p = dst.ptr<std::uint8_t>();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = p[i] != 0 ? 1 : 0;
  return out;
}

}  // namespace

RasterSample downsample_pair(const RasterSample& sample, int tile_size) {
  require_tile_size(tile_size);
  validate_sample(sample);
  if (sample.image.height < tile_size || sample.image.width < tile_size) {
    std::ostringstream msg;
    msg << "sample '" << sample.source_id << "' is " << sample.image.height << "x"
        << sample.image.width << ", smaller than tile size " << tile_size;
    throw Error(ErrorKind::kDimension, msg.str());
  }
  if (sample.image.same_extent(tile_size, tile_size)) return sample;

  RasterSample out;
  out.source_id = sample.source_id;
  out.split = sample.split;
  out.image = resize_image(sample.image, tile_size);
  out.mask = resize_mask(sample.mask, tile_size);
  return out;
}

ImageRaster downsample_image(const ImageRaster& image, int tile_size) {
  require_tile_size(tile_size);
  if (image.height < tile_size || image.width < tile_size) {
    std::ostringstream msg;
    msg << "image is " << image.height << "x" << image.width << ", smaller than tile size "
        << tile_size;
    throw Error(ErrorKind::kDimension, msg.str());
  }
  if (image.same_extent(tile_size, tile_size)) return image;
  return resize_image(image, tile_size);
}

std::vector<RasterSample> crop_tiles(const RasterSample& sample, int tile_size) {
  require_tile_size(tile_size);
  validate_sample(sample);
  if (sample.image.height < tile_size || sample.image.width < tile_size) {
    throw Error(ErrorKind::kDimension,
                "sample '" + sample.source_id + "' is smaller than one tile");
  }
  std::vector<RasterSample> tiles;
  const int rows = sample.image.height / tile_size;
  const int cols = sample.image.width / tile_size;
  for (int tr = 0; tr < rows; ++tr) {
    for (int tc = 0; tc < cols; ++tc) {
      RasterSample t;
      t.split = sample.split;
      t.source_id = sample.source_id + "_r" + std::to_string(tr) + "_c" + std::to_string(tc);
      t.image = ImageRaster(tile_size, tile_size, sample.image.channels);
      t.mask = MaskRaster(tile_size, tile_size, 1);
      for (int r = 0; r < tile_size; ++r) {
        for (int c = 0; c < tile_size; ++c) {
          const int sr = tr * tile_size + r;
          const int sc = tc * tile_size + c;
          for (int ch = 0; ch < sample.image.channels; ++ch) {
            t.image.at(r, c, ch) = sample.image.at(sr, sc, ch);
          }
          t.mask.at(r, c) = sample.mask.at(sr, sc);
        }
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

RealRaster one_hot(const MaskRaster& mask) {
  RealRaster out(mask.height, mask.width, kNumClasses);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const auto v = mask.at(r, c);
      if (v > 1) {
        std::ostringstream msg;
        msg << "mask value " << static_cast<int>(v) << " at (row " << r << ", col " << c
            << ") is not binary";
        throw Error(ErrorKind::kInputDomain, msg.str());
      }
      out.at(r, c, 0) = v == 0 ? 1.0f : 0.0f;
      out.at(r, c, 1) = v == 1 ? 1.0f : 0.0f;
    }
  }
  return out;
}

namespace {

torch::Tensor hwc_to_chw(const RealRaster& raster) {
  auto hwc = torch::from_blob(const_cast<float*>(raster.data.data()),
                              {raster.height, raster.width, raster.channels},
                              torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous();
}

}  // namespace

NormalizedTile make_tile(const RasterSample& sample) {
  validate_sample(sample);
  if (sample.image.channels != 3) {
    throw Error(ErrorKind::kDimension,
                "sample '" + sample.source_id + "' must have 3 channels");
  }
  NormalizedTile tile;
  tile.data = hwc_to_chw(normalize(sample.image));
  tile.target = hwc_to_chw(one_hot(sample.mask));
  tile.source_id = sample.source_id;
  return tile;
}

void AugmentationPolicy::validate() const {
  for (double p : {horizontal_flip_prob, vertical_flip_prob, rotate90_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorKind::kConfiguration,
                  "augmentation probabilities must lie in [0, 1]");
    }
  }
}

NormalizedTile augment(const NormalizedTile& tile, const AugmentationPolicy& policy,
                       std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> quarter_turns(1, 3);
  // Draw everything up front so the engine advances identically every call.
  const double u_h = unit(rng);
  const double u_v = unit(rng);
  const double u_r = unit(rng);
  const int turns = quarter_turns(rng);

  torch::Tensor data = tile.data;
  torch::Tensor target = tile.target;
  if (u_h < policy.horizontal_flip_prob) {
    data = data.flip({2});
    target = target.flip({2});
  }
  if (u_v < policy.vertical_flip_prob) {
    data = data.flip({1});
    target = target.flip({1});
  }
  // Rotation would change the shape of a non-square tile.
  if (u_r < policy.rotate90_prob && data.size(1) == data.size(2)) {
    data = torch::rot90(data, turns, {1, 2});
    target = torch::rot90(target, turns, {1, 2});
  }
  return {data.contiguous(), target.contiguous(), tile.source_id};
}

// ---------------------------------------------------------------------------
// Manifest

const std::vector<ManifestEntry>& DatasetManifest::entries(Split split) const {
  switch (split) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  return train;
}

std::vector<std::string> DatasetManifest::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& e : entries(split)) out.push_back(e.id);
  return out;
}

bool DatasetManifest::has_canonical_counts() const {
  return train.size() == 137 && val.size() == 4 && test.size() == 10;
}

std::string DatasetManifest::to_json() const {
  nlohmann::json j;
  j["format"] = "footprint-manifest";
  j["version"] = 1;
  j["root_path"] = root_path.generic_string();
  j["tile_size"] = tile_size;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const std::string name = to_string(s);
    j[name + "_ids"] = ids(s);
    nlohmann::json files = nlohmann::json::object();
    for (const auto& e : entries(s)) {
      files[e.id] = {{"image", e.image.generic_string()}, {"mask", e.mask.generic_string()}};
    }
    j["files"][name] = files;
  }
  return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(std::string_view text) {
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.root_path = j.at("root_path").get<std::string>();
    m.tile_size = j.at("tile_size").get<int>();
    for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
      const std::string name = to_string(s);
      auto& list = s == Split::kTrain ? m.train : s == Split::kVal ? m.val : m.test;
      const auto& files = j.at("files").at(name);
      for (const auto& id : j.at(name + "_ids")) {
        const auto key = id.get<std::string>();
        const auto& f = files.at(key);
        list.push_back({key, f.at("image").get<std::string>(), f.at("mask").get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kManifest, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << to_json();
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

namespace {

bool is_raster_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

// id -> file name; duplicates reported into `problems`.
std::map<std::string, fs::path> scan_rasters(const fs::path& dir, const std::string& label,
                                             std::vector<std::string>& problems) {
  std::map<std::string, fs::path> found;
  if (!fs::is_directory(dir)) {
    problems.push_back("missing directory " + label);
    return found;
  }
  for (const auto& item : fs::directory_iterator(dir)) {
    if (!item.is_regular_file() || !is_raster_extension(item.path())) continue;
    const auto id = item.path().stem().string();
    if (!found.emplace(id, item.path().filename()).second) {
      problems.push_back("duplicate id '" + id + "' in " + label);
    }
  }
  return found;
}

}  // namespace

DatasetManifest build_manifest(const fs::path& root, int tile_size) {
  require_tile_size(tile_size);
  if (!fs::is_directory(root)) {
    throw Error(ErrorKind::kManifest, "dataset root " + root.string() + " is not a directory");
  }
  DatasetManifest m;
  m.root_path = fs::absolute(root).lexically_normal();
  m.tile_size = tile_size;

  std::vector<std::string> problems;
  std::map<std::string, std::string> owner;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const std::string name = to_string(s);
    const auto images = scan_rasters(root / name / "images", name + "/images", problems);
    const auto masks = scan_rasters(root / name / "masks", name + "/masks", problems);
    auto& list = s == Split::kTrain ? m.train : s == Split::kVal ? m.val : m.test;
    for (const auto& [id, file] : images) {
      auto it = masks.find(id);
      if (it == masks.end()) {
        problems.push_back("orphan image " + name + "/images/" + file.string());
        continue;
      }
      list.push_back({id, fs::path(name) / "images" / file, fs::path(name) / "masks" / it->second});
    }
    for (const auto& [id, file] : masks) {
      if (!images.contains(id)) {
        problems.push_back("orphan mask " + name + "/masks/" + file.string());
      }
    }
    for (const auto& e : list) {
      auto [it, inserted] = owner.emplace(e.id, name);
      if (!inserted) {
        problems.push_back("id '" + e.id + "' appears in both " + it->second + " and " + name);
      }
    }
    if (list.empty()) problems.push_back("split " + name + " is empty");
  }
  if (!problems.empty()) {
    std::string msg = "invalid dataset layout under " + root.string() + ":";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::kManifest, msg);
  }
  return m;
}

RasterSample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry,
                         Split split) {
  RasterSample s;
  s.source_id = entry.id;
  s.split = split;
  s.image = read_image(manifest.root_path / entry.image);
  s.mask = read_mask(manifest.root_path / entry.mask);
  validate_sample(s);
  return s;
}

}  // namespace footprint
