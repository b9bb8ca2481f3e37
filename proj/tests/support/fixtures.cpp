#include "fixtures.hpp"

#include <atomic>
#include <random>

#include <unistd.h>

#include "footprint/image_io.hpp"

namespace footprint::testing {
namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

RasterSample synthetic_scene(int height, int width, std::uint64_t seed, std::string id) {
  std::mt19937_64 rng(seed);
  RasterSample s;
  s.source_id = std::move(id);
  s.image = ImageRaster(height, width, 3);
  s.mask = MaskRaster(height, width, 1);

  std::uniform_int_distribution<int> noise(0, 24);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const int ground = 55 + ((r / 8 + c / 8) % 2) * 10;
      s.image.at(r, c, 0) = ground + noise(rng);
      s.image.at(r, c, 1) = ground + 15 + noise(rng);
      s.image.at(r, c, 2) = ground + noise(rng);
    }
  }
  const int count = 3 + static_cast<int>(rng() % 4);
  std::uniform_int_distribution<int> extent(std::max(4, height / 10), std::max(6, height / 4));
  for (int k = 0; k < count; ++k) {
    const int h = extent(rng), w = extent(rng);
    const int r0 = static_cast<int>(rng() % std::max(1, height - h));
    const int c0 = static_cast<int>(rng() % std::max(1, width - w));
    const int roof = 170 + static_cast<int>(rng() % 60);
    for (int r = r0; r < std::min(height, r0 + h); ++r) {
      for (int c = c0; c < std::min(width, c0 + w); ++c) {
        s.mask.at(r, c, 0) = 1;
        for (int ch = 0; ch < 3; ++ch) s.image.at(r, c, ch) = std::min(255, roof + noise(rng) / 2);
      }
    }
  }
  return s;
}

std::vector<NormalizedTile> synthetic_tiles(int count, int size, std::uint64_t seed) {
  std::vector<NormalizedTile> tiles;
  for (int k = 0; k < count; ++k) {
    tiles.push_back(make_tile(synthetic_scene(size, size, seed + 7919 * k, "tile_" + std::to_string(k))));
  }
  return tiles;
}

void write_dataset(const fs::path& root, SplitCounts counts, int size, std::uint64_t seed,
                   const std::string& mask_ext) {
  const std::pair<Split, int> splits[] = {
      {Split::kTrain, counts.train}, {Split::kVal, counts.val}, {Split::kTest, counts.test}};
  std::uint64_t k = 0;
  for (const auto& [split, n] : splits) {
    const fs::path base = root / to_string(split);
    fs::create_directories(base / "images");
    fs::create_directories(base / "masks");
    for (int i = 0; i < n; ++i) {
      const std::string id = std::string(to_string(split)) + "_" + std::to_string(i);
      const auto scene = synthetic_scene(size, size, seed + 104729 * ++k, id);
      write_image_png(base / "images" / (id + ".png"), scene.image);
      write_mask_png(base / "masks" / (id + "." + mask_ext), scene.mask);
    }
  }
}

TrainConfig quick_config(const fs::path& data_root, int tile_size) {
  TrainConfig c;
  c.data_root = data_root.string();
  c.tile_size = tile_size;
  c.encoder_weights = "none";
  c.epochs = 1;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  return c;
}

}  // namespace footprint::testing
