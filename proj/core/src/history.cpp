#include "footprint/history.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "footprint/errors.hpp"

namespace footprint {

std::optional<EpochRecord> TrainingHistory::best() const {
  std::optional<EpochRecord> out;
  for (const auto& r : records) {
    if (!out || r.val_iou > out->val_iou) out = r;
  }
  return out;
}

std::string TrainingHistory::csv_header() {
  return "epoch,train_dice_loss,val_dice_loss,train_iou,val_iou,train_dice_loss_median,"
         "train_objective";
}

std::string TrainingHistory::csv_row(const EpochRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.epoch,
                r.train_dice_loss, r.val_dice_loss, r.train_iou, r.val_iou,
                r.train_dice_loss_median, r.train_objective);
  return buf;
}

std::string TrainingHistory::to_csv() const {
  std::string out = csv_header() + "\n";
  for (const auto& r : records) out += csv_row(r) + "\n";
  return out;
}

namespace {

bool parse_double(std::string_view s, double& out) {
  // strtod accepts the %.17g output including inf/nan spellings.
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return !tmp.empty() && end == tmp.c_str() + tmp.size();
}

}  // namespace

TrainingHistory TrainingHistory::from_csv(std::string_view text) {
  TrainingHistory h;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line.rfind("epoch,", 0) != 0) {
        throw Error(ErrorKind::kIo, "history line " + std::to_string(line_no) +
                                        ": expected header starting with 'epoch,'");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    const auto bad = [&](const std::string& why) {
      return Error(ErrorKind::kIo, "history line " + std::to_string(line_no) + ": " + why);
    };
    if (cells.size() < 5) throw bad("expected at least 5 columns, got " + std::to_string(cells.size()));
    EpochRecord r;
    auto [ptr, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), r.epoch);
    if (ec != std::errc() || ptr != cells[0].data() + cells[0].size()) throw bad("bad epoch '" + cells[0] + "'");
    double* fields[] = {&r.train_dice_loss, &r.val_dice_loss, &r.train_iou, &r.val_iou,
                        &r.train_dice_loss_median, &r.train_objective};
    for (std::size_t i = 1; i < cells.size() && i <= 6; ++i) {
      if (!parse_double(cells[i], *fields[i - 1])) throw bad("bad number '" + cells[i] + "'");
    }
    if (cells.size() < 6) r.train_dice_loss_median = r.train_dice_loss;
    if (cells.size() < 7) r.train_objective = r.train_dice_loss;
    if (!h.records.empty() && r.epoch <= h.records.back().epoch) {
      throw bad("epochs must be strictly increasing");
    }
    h.records.push_back(r);
  }
  if (!header_seen) throw Error(ErrorKind::kIo, "history is empty");
  return h;
}

TrainingHistory TrainingHistory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read history " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

}  // namespace footprint
