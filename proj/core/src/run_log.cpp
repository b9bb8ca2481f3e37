#include "footprint/run_log.hpp"

#include <chrono>
#include <ctime>
#include <iostream>

namespace footprint {

RunLog::RunLog(const std::filesystem::path& file, bool quiet) : quiet_(quiet) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  file_.open(file, std::ios::app);
}

void RunLog::info(std::string_view message) { write("INFO", message); }
void RunLog::warn(std::string_view message) { write("WARN", message); }

void RunLog::write(std::string_view level, std::string_view message) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
  std::string line = std::string(level) + " " + std::string(message);

  std::lock_guard lock(mutex_);
  lines_.push_back(line);
  if (file_.is_open()) file_ << stamp << ' ' << line << '\n' << std::flush;
  if (!quiet_) std::cerr << line << '\n';
}

std::vector<std::string> RunLog::lines() const {
  std::lock_guard lock(mutex_);
  return lines_;
}

bool RunLog::contains(std::string_view needle) const {
  std::lock_guard lock(mutex_);
  for (const auto& l : lines_) {
    if (l.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace footprint
