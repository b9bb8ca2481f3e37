#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "footprint/checkpoint.hpp"
#include "footprint/errors.hpp"
#include "footprint/image_io.hpp"
#include "footprint/trainer.hpp"
#include "plot.hpp"

namespace footprint::cli {
namespace fs = std::filesystem;

ExitCode exit_code_for(ErrorKind kind) noexcept {
  if (kind == ErrorKind::kConfiguration) return kUsage;
  if (is_data_error(kind)) return kDataError;
  return kRuntimeError;
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

DatasetManifest resolve_manifest(const fs::path& data_root, int tile_size) {
  const fs::path cached = data_root / kManifestFile;
  if (fs::is_regular_file(cached)) {
    auto m = DatasetManifest::load(cached);
    return m;
  }
  return build_manifest(data_root, tile_size);
}

DatasetManifest cmd_prepare(const PrepareOptions& options, RunLog& log) {
  if (options.tile_size <= 0 || options.tile_size % 32 != 0)
    throw Error(ErrorKind::kConfiguration, "tile size must be a positive multiple of 32");
  const DatasetManifest source = build_manifest(options.root, options.tile_size);
  if (!source.has_canonical_counts()) {
    log.warn("split sizes " + std::to_string(source.train.size()) + "/" +
             std::to_string(source.val.size()) + "/" + std::to_string(source.test.size()) +
             " differ from the canonical 137/4/10");
  }
  if (fs::weakly_canonical(options.out) == fs::weakly_canonical(options.root))
    throw Error(ErrorKind::kConfiguration, "output directory must differ from the dataset root");

  std::size_t written = 0;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const fs::path base = options.out / to_string(split);
    fs::create_directories(base / "images");
    fs::create_directories(base / "masks");
    for (const auto& entry : source.entries(split)) {
      const RasterSample sample = load_sample(source, entry, split);
      std::vector<RasterSample> tiles;
      if (options.tiling == TilingMode::kCrop) {
        tiles = crop_tiles(sample, options.tile_size);
      } else {
        tiles.push_back(downsample_pair(sample, options.tile_size));
      }
      for (const auto& t : tiles) {
        write_image_png(base / "images" / (t.source_id + ".png"), t.image);
        write_mask_png(base / "masks" / (t.source_id + ".png"), t.mask);
        ++written;
      }
    }
  }
  DatasetManifest cache = build_manifest(options.out, options.tile_size);
  cache.save(options.out / kManifestFile);
  log.info("prepared " + std::to_string(written) + " tiles of " + std::to_string(options.tile_size) +
           " px in " + options.out.string());
  return cache;
}

TrainingHistory cmd_train(const TrainConfig& config, const TrainRunOptions& options, RunLog& log) {
  config.validate();
  if (config.data_root.empty()) throw Error(ErrorKind::kConfiguration, "data_root is not set");
  log.info("effective config: " + nlohmann::json::parse(config.to_json()).dump());
  const DatasetManifest manifest = resolve_manifest(config.data_root, config.tile_size);

  torch::manual_seed(config.seed);
  SegmentationModel model(config.model_config());
  initialise_encoder(model, config, log);

  TrainOptions train_options;
  train_options.run_dir = options.run_dir;
  train_options.log = &log;
  TrainResult result = train(config, manifest, model, train_options);

  if (options.evaluate_test && !manifest.test.empty()) {
    const MetricsReport report = evaluate(result.checkpoint, manifest, Split::kTest);
    const std::string variant = to_string(config.variant);
    write_text(options.run_dir / kReportJson, report.to_json(variant, "test"));
    write_text(options.run_dir / kReportCsv, report.to_csv(variant, "test"));
    log.info("test mean IoU " + fmt(report.per_image_mean.iou) + ", pooled IoU " +
             fmt(report.global_pool.iou));
  }
  return result.history;
}

MetricsReport cmd_evaluate(const fs::path& run_dir, Split split,
                           const std::optional<fs::path>& data_root, RunLog& log) {
  const Checkpoint ckpt = load_checkpoint(run_dir / kCheckpointFile);
  const TrainConfig config = ckpt.config();
  const fs::path root = data_root ? *data_root : fs::path(config.data_root);
  const DatasetManifest manifest = resolve_manifest(root, config.tile_size);
  const MetricsReport report = evaluate(ckpt, manifest, split);
  const std::string variant = to_string(config.variant);
  write_text(run_dir / kReportJson, report.to_json(variant, to_string(split)));
  write_text(run_dir / kReportCsv, report.to_csv(variant, to_string(split)));
  log.info(std::string("evaluated ") + to_string(split) + " split: mean IoU " +
           fmt(report.per_image_mean.iou) + ", pooled IoU " + fmt(report.global_pool.iou));
  return report;
}

std::vector<CompareRow> load_reference_rows(const fs::path& csv) {
  std::istringstream in(read_text(csv));
  std::string line;
  std::vector<CompareRow> rows;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("variant,", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != 6)
      throw Error(ErrorKind::kIo, csv.string() + " line " + std::to_string(line_no) +
                                      ": expected 6 columns");
    CompareRow row;
    try {
      row.variant = to_string(parse_variant(cells[0]));
      row.mean.f1 = std::stod(cells[1]) / 100.0;
      row.mean.iou = std::stod(cells[2]) / 100.0;
      row.mean.precision = std::stod(cells[3]) / 100.0;
      row.mean.accuracy = std::stod(cells[4]) / 100.0;
      row.mean.recall = std::stod(cells[5]) / 100.0;
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kIo, csv.string() + " line " + std::to_string(line_no) +
                                      ": malformed value");
    }
    row.run = row.variant;
    row.source = "paper-reported";
    row.split = "test";
    rows.push_back(row);
  }
  return rows;
}

std::vector<CompareRow> collect_compare_rows(const std::vector<fs::path>& run_dirs, RunLog& log) {
  std::vector<CompareRow> rows;
  for (const auto& dir : run_dirs) {
    if (!fs::is_regular_file(dir / kCheckpointFile) || !fs::is_regular_file(dir / kReportJson)) {
      log.warn("skipping incomplete run " + dir.string() + " (needs " + kCheckpointFile + " and " +
               kReportJson + ")");
      continue;
    }
    const std::string text = read_text(dir / kReportJson);
    nlohmann::json j;
    MetricsReport report;
    try {
      j = nlohmann::json::parse(text);
      report = MetricsReport::from_json(text);
    } catch (const std::exception& e) {
      log.warn("skipping run " + dir.string() + ": unreadable report (" + e.what() + ")");
      continue;
    }
    CompareRow row;
    row.run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    row.variant = j.value("variant", std::string("?"));
    row.split = j.value("split", std::string("?"));
    row.source = "local";
    row.mean = report.per_image_mean;
    row.pooled = report.global_pool;
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) {
    if (a.mean.iou != b.mean.iou) return a.mean.iou > b.mean.iou;
    return a.run < b.run;
  });
  return rows;
}

namespace {

const char* kColumns[] = {"accuracy", "iou", "precision", "recall", "f1"};

std::vector<double> metric_values(const Metrics& m) {
  return {m.accuracy, m.iou, m.precision, m.recall, m.f1};
}

}  // namespace

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "run,variant,source,split";
  for (const char* side : {"mean", "pooled"})
    for (const char* c : kColumns) out << ',' << side << '_' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.run << ',' << r.variant << ',' << r.source << ',' << r.split;
    for (double v : metric_values(r.mean)) out << ',' << fmt(v, 6);
    if (r.pooled) {
      for (double v : metric_values(*r.pooled)) out << ',' << fmt(v, 6);
    } else {
      for (std::size_t i = 0; i < std::size(kColumns); ++i) out << ',';
    }
    out << '\n';
  }
  return out.str();
}

std::string compare_markdown(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "| run | variant | source | split | mean Acc | mean IoU | mean Prec | mean Rec | mean F1 "
         "| pooled Acc | pooled IoU | pooled Prec | pooled Rec | pooled F1 |\n";
  out << "|---|---|---|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out << "| " << r.run << " | " << r.variant << " | " << r.source << " | " << r.split;
    for (double v : metric_values(r.mean)) out << " | " << fmt(v);
    for (std::size_t i = 0; i < std::size(kColumns); ++i)
      out << " | " << (r.pooled ? fmt(metric_values(*r.pooled)[i]) : std::string("-"));
    out << " |\n";
  }
  return out.str();
}

PlotFiles cmd_plot_history(const fs::path& run_dir, const fs::path& out) {
  const TrainingHistory history = TrainingHistory::load(run_dir / kHistoryFile);
  if (history.records.empty())
    throw Error(ErrorKind::kIo, "history has no epochs: " + (run_dir / kHistoryFile).string());
  Series train_iou{"train", {}, {}}, val_iou{"validation", {}, {}};
  Series train_loss{"train", {}, {}}, val_loss{"validation", {}, {}};
  for (const auto& r : history.records) {
    for (Series* s : {&train_iou, &val_iou, &train_loss, &val_loss}) s->x.push_back(r.epoch);
    train_iou.y.push_back(r.train_iou);
    val_iou.y.push_back(r.val_iou);
    train_loss.y.push_back(r.train_dice_loss);
    val_loss.y.push_back(r.val_dice_loss);
  }
  fs::create_directories(out);
  PlotFiles files{out / "iou_history.png", out / "dice_loss_history.png"};
  write_line_chart({"IoU score per epoch", "epoch", "IoU", {train_iou, val_iou}}, files.iou);
  write_line_chart({"Dice loss per epoch", "epoch", "dice loss", {train_loss, val_loss}},
                   files.dice_loss);
  return files;
}

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
};

int guarded(std::ostream& err, const std::function<void()>& body) {
  try {
    body();
    return kOk;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const c10::Error& e) {
    err << "error [runtime]: " << e.what_without_backtrace() << '\n';
    return kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Building footprint segmentation toolkit", "footprint"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only errors on stderr");

  PrepareOptions prep;
  std::string prep_tiling = "downsample";
  auto* prepare = app.add_subcommand("prepare", "Validate a dataset and write the tile cache");
  prepare->add_option("--data", prep.root, "Dataset root with train/val/test splits")->required();
  prepare->add_option("--out", prep.out, "Output directory for tiles and manifest.json")->required();
  prepare->add_option("--tile-size", prep.tile_size, "Tile edge in pixels");
  prepare->add_option("--tiling", prep_tiling, "downsample | crop");

  CommonArgs train_args;
  fs::path train_run_dir;
  bool no_eval = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", train_args.config, "YAML config")->required();
  train_cmd->add_option("--set", train_args.overrides, "key=value override (repeatable)");
  train_cmd->add_option("--run-dir", train_run_dir, "Output run directory")->required();
  train_cmd->add_flag("--no-eval", no_eval, "Skip the final test-split evaluation");

  fs::path eval_run_dir;
  std::string eval_split = "test";
  std::string eval_data;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a run's best checkpoint");
  eval_cmd->add_option("--run-dir", eval_run_dir, "Run directory with best.ckpt")->required();
  eval_cmd->add_option("--split", eval_split, "train | val | test");
  eval_cmd->add_option("--data", eval_data, "Dataset root (defaults to the run's data_root)");

  fs::path pred_ckpt, pred_image, pred_out;
  std::string pred_composite, pred_gt;
  auto* predict_cmd = app.add_subcommand("predict", "Write a binary mask for one image");
  predict_cmd->add_option("--checkpoint", pred_ckpt, "best.ckpt or a run directory")->required();
  predict_cmd->add_option("--image", pred_image, "Input image")->required();
  predict_cmd->add_option("--out", pred_out, "Output mask PNG")->required();
  predict_cmd->add_option("--composite", pred_composite, "Optional side-by-side PNG");
  predict_cmd->add_option("--ground-truth", pred_gt, "Mask shown in the composite");

  std::vector<fs::path> cmp_runs;
  fs::path cmp_out = ".";
  std::string cmp_ref;
  auto* compare = app.add_subcommand("compare", "Tabulate finished runs");
  compare->add_option("runs", cmp_runs, "Run directories")->required();
  compare->add_option("--out", cmp_out, "Directory for compare.csv and compare.md");
  compare->add_option("--reference", cmp_ref, "CSV of published numbers to append");

  fs::path plot_run, plot_out;
  auto* plot = app.add_subcommand("plot-history", "Render IoU and dice loss curves");
  plot->add_option("--run-dir", plot_run, "Run directory with history.csv")->required();
  plot->add_option("--out", plot_out, "Output directory (defaults to the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  if (*prepare) {
    return guarded(err, [&] {
      RunLog log({}, quiet);
      if (prep_tiling == "crop") {
        prep.tiling = TilingMode::kCrop;
      } else if (prep_tiling != "downsample") {
        throw Error(ErrorKind::kConfiguration, "unknown tiling: " + prep_tiling);
      }
      cmd_prepare(prep, log);
      out << (prep.out / kManifestFile).string() << '\n';
    });
  }
  if (*train_cmd) {
    return guarded(err, [&] {
      if (!fs::is_regular_file(train_args.config))
        throw Error(ErrorKind::kConfiguration, "config file not found: " + train_args.config);
      const TrainConfig config = load_config(train_args.config, train_args.overrides);
      fs::create_directories(train_run_dir);
      RunLog log(train_run_dir / kRunLogFile, quiet);
      for (const auto& o : train_args.overrides) log.info("override " + o);
      TrainRunOptions opts{train_run_dir, !no_eval};
      const TrainingHistory history = cmd_train(config, opts, log);
      out << TrainingHistory::csv_header() << '\n';
      for (const auto& r : history.records) out << TrainingHistory::csv_row(r) << '\n';
    });
  }
  if (*eval_cmd) {
    return guarded(err, [&] {
      RunLog log({}, quiet);
      std::optional<fs::path> data;
      if (!eval_data.empty()) data = eval_data;
      const MetricsReport report = cmd_evaluate(eval_run_dir, parse_split(eval_split), data, log);
      out << report.to_csv("", eval_split);
    });
  }
  if (*predict_cmd) {
    return guarded(err, [&] {
      const fs::path ckpt_path =
          fs::is_directory(pred_ckpt) ? pred_ckpt / kCheckpointFile : pred_ckpt;
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      PredictOptions opts;
      if (!pred_composite.empty()) opts.composite_path = pred_composite;
      if (!pred_gt.empty()) opts.ground_truth_path = pred_gt;
      predict(ckpt, pred_image, pred_out, opts);
      out << pred_out.string() << '\n';
    });
  }
  if (*compare) {
    return guarded(err, [&] {
      RunLog log({}, quiet);
      auto rows = collect_compare_rows(cmp_runs, log);
      if (!cmp_ref.empty()) {
        auto ref = load_reference_rows(cmp_ref);
        rows.insert(rows.end(), ref.begin(), ref.end());
      }
      write_text(cmp_out / "compare.csv", compare_csv(rows));
      const std::string md = compare_markdown(rows);
      write_text(cmp_out / "compare.md", md);
      out << md;
    });
  }
  if (*plot) {
    return guarded(err, [&] {
      const PlotFiles files = cmd_plot_history(plot_run, plot_out.empty() ? plot_run : plot_out);
      out << files.iou.string() << '\n' << files.dice_loss.string() << '\n';
    });
  }
  return kUsage;
}

}  // namespace footprint::cli
