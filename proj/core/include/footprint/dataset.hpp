#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "footprint/raster.hpp"

namespace footprint {

enum class Split { kTrain, kVal, kTest };

const char* to_string(Split split) noexcept;
Split parse_split(std::string_view name);

inline constexpr int kDefaultTileSize = 256;
inline constexpr int kMaskThreshold = 127;
inline constexpr int kNumClasses = 2;

// Paired aerial image and building mask.
struct RasterSample {
  ImageRaster image;  // H x W x 3, intensities 0..255
  MaskRaster mask;    // H x W x 1, values {0, 1}
  std::string source_id;
  Split split = Split::kTrain;
};

// Throws kDimension if image and mask extents differ, kInputDomain if the
// mask is not binary.
void validate_sample(const RasterSample& sample);

// Network-ready tile in CHW layout.
//   data:   float [3, H, W], values in [-1, 1]
//   target: float [2, H, W], one-hot (background, building)
struct NormalizedTile {
  torch::Tensor data;
  torch::Tensor target;
  std::string source_id;
};

/// Maps an intensity in [0, 255] onto [-1, 1] as v / 127.5 - 1.
double normalize_value(double value) noexcept;
/// Inverse of normalize_value with round-half-up, clamped to [0, 255].
std::uint8_t denormalize_value(double value) noexcept;

// Elementwise normalize. Throws kInputDomain naming the first offending
// (row, col, channel) if any value lies outside [0, 255].
RealRaster normalize(const ImageRaster& image);
ImageRaster denormalize(const RealRaster& tensor);

// Foreground iff raw value > kMaskThreshold. Multi-channel inputs use the
// first channel.
MaskRaster binarize_mask(const ImageRaster& raw);

// Whole-scene resample to tile_size x tile_size. Image is bilinear, mask is
// nearest-neighbour and re-binarized. Same-size input is returned unchanged.
RasterSample downsample_pair(const RasterSample& sample, int tile_size);

// Bilinear resample of an image alone to tile_size x tile_size (rounded,
// clamped to [0, 255]); identity when already that size.
ImageRaster downsample_image(const ImageRaster& image, int tile_size);

// Non-overlapping tile_size crops covering the scene from the top-left;
// the remainder strip at the right/bottom edges is dropped.
std::vector<RasterSample> crop_tiles(const RasterSample& sample, int tile_size);

// H x W x 2, channel 0 = background, channel 1 = building.
RealRaster one_hot(const MaskRaster& mask);

NormalizedTile make_tile(const RasterSample& sample);

struct AugmentationPolicy {
  double horizontal_flip_prob = 0.5;
  double vertical_flip_prob = 0.5;
  double rotate90_prob = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

// Random geometric transform applied identically to data and target. Every
// call consumes the same number of draws from `rng` regardless of outcome,
// so a seeded engine yields a reproducible sequence.
NormalizedTile augment(const NormalizedTile& tile,
                       const AugmentationPolicy& policy, std::mt19937_64& rng);

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;  // relative to root
  std::filesystem::path mask;   // relative to root

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::filesystem::path root_path;
  int tile_size = kDefaultTileSize;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> val;
  std::vector<ManifestEntry> test;

  const std::vector<ManifestEntry>& entries(Split split) const;
  std::vector<std::string> ids(Split split) const;
  std::size_t total() const { return train.size() + val.size() + test.size(); }

  // 137 / 4 / 10 as distributed with the Massachusetts Buildings dataset.
  bool has_canonical_counts() const;

  // Deterministic (sorted ids, fixed key order) so repeated serialisation
  // of the same dataset is byte-identical.
  std::string to_json() const;
  static DatasetManifest from_json(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static DatasetManifest load(const std::filesystem::path& path);

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// Scans <root>/{train,val,test}/{images,masks}/<id>.<png|tif|tiff>.
// Throws kManifest listing every orphan, missing directory, empty split or
// id shared between splits.
DatasetManifest build_manifest(const std::filesystem::path& root,
                               int tile_size = kDefaultTileSize);

RasterSample load_sample(const DatasetManifest& manifest,
                         const ManifestEntry& entry, Split split);

}  // namespace footprint
