#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace footprint {

struct EpochRecord {
  int epoch = 0;
  double train_dice_loss = 0.0;         // mean over steps, final head
  double train_dice_loss_median = 0.0;  // median over steps, final head
  double train_objective = 0.0;         // mean optimised loss (all heads / bce)
  double val_dice_loss = 0.0;
  double train_iou = 0.0;
  double val_iou = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> records;

  // Earliest epoch attaining the maximum validation IoU.
  std::optional<EpochRecord> best() const;

  static std::string csv_header();
  // Round-trip exact (17 significant digits).
  static std::string csv_row(const EpochRecord& r);
  std::string to_csv() const;

  // Throws kIo naming the 1-based line of the first malformed row.
  static TrainingHistory from_csv(std::string_view text);
  static TrainingHistory load(const std::filesystem::path& path);

  friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;
};

}  // namespace footprint
