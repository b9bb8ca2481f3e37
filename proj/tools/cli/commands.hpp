#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "footprint/config.hpp"
#include "footprint/dataset.hpp"
#include "footprint/errors.hpp"
#include "footprint/history.hpp"
#include "footprint/metrics.hpp"
#include "footprint/run_log.hpp"

namespace footprint::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kRuntimeError = 3 };

ExitCode exit_code_for(ErrorKind kind) noexcept;

// Entry point behind the `footprint` binary. Data goes to `out`, every
// diagnostic to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Files written into a run directory.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kHistoryFile = "history.csv";
inline constexpr const char* kCheckpointFile = "best.ckpt";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportCsv = "report.csv";
inline constexpr const char* kRunLogFile = "run.log";
inline constexpr const char* kManifestFile = "manifest.json";

struct PrepareOptions {
  std::filesystem::path root;
  std::filesystem::path out;
  int tile_size = kDefaultTileSize;
  TilingMode tiling = TilingMode::kDownsample;
};

// Writes the tile cache as a dataset of the same layout under `out`
// (<split>/images/<id>.png, <split>/masks/<id>.png) plus manifest.json
// describing it. Re-running on the same input rewrites identical bytes.
DatasetManifest cmd_prepare(const PrepareOptions& options, RunLog& log);

// Uses <data_root>/manifest.json when present, otherwise scans data_root.
DatasetManifest resolve_manifest(const std::filesystem::path& data_root, int tile_size);

struct TrainRunOptions {
  std::filesystem::path run_dir;
  bool evaluate_test = true;
};

// Seeds, builds the model, applies encoder weights, trains, and (optionally)
// evaluates the best checkpoint on the test split into report.json.
TrainingHistory cmd_train(const TrainConfig& config, const TrainRunOptions& options, RunLog& log);

MetricsReport cmd_evaluate(const std::filesystem::path& run_dir, Split split,
                           const std::optional<std::filesystem::path>& data_root, RunLog& log);

struct CompareRow {
  std::string run;
  std::string variant;
  std::string source;  // "local" or "paper-reported"
  std::string split;
  Metrics mean;
  std::optional<Metrics> pooled;  // absent for paper-reported rows
};

// Paper-reported rows from a CSV with header
// variant,mean_f1,mean_iou,mean_precision,mean_accuracy,mean_recall (percent).
std::vector<CompareRow> load_reference_rows(const std::filesystem::path& csv);

// Local rows sorted by mean IoU (descending); reference rows follow,
// unsorted and labelled. Run dirs lacking a checkpoint or report are skipped
// with a warning on `log`.
std::vector<CompareRow> collect_compare_rows(const std::vector<std::filesystem::path>& run_dirs,
                                             RunLog& log);
std::string compare_csv(const std::vector<CompareRow>& rows);
std::string compare_markdown(const std::vector<CompareRow>& rows);

struct PlotFiles {
  std::filesystem::path iou;
  std::filesystem::path dice_loss;
};

PlotFiles cmd_plot_history(const std::filesystem::path& run_dir, const std::filesystem::path& out);

}  // namespace footprint::cli
