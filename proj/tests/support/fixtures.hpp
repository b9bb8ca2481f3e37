#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "footprint/config.hpp"
#include "footprint/dataset.hpp"

namespace footprint::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "footprint");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Rooftops as bright axis-aligned rectangles over a darker textured ground.
RasterSample synthetic_scene(int height, int width, std::uint64_t seed, std::string id = "scene");

std::vector<NormalizedTile> synthetic_tiles(int count, int size, std::uint64_t seed);

struct SplitCounts {
  int train = 1;
  int val = 1;
  int test = 1;
};

// Writes <root>/<split>/{images,masks}/<split>_<k>.<ext> scenes of the given
// size. Returns the ids in write order per split.
void write_dataset(const std::filesystem::path& root, SplitCounts counts, int size,
                   std::uint64_t seed, const std::string& mask_ext = "png");

// Small, quick configuration for tests: no pretrained weights, tiny epochs.
TrainConfig quick_config(const std::filesystem::path& data_root, int tile_size = 64);

}  // namespace footprint::testing
