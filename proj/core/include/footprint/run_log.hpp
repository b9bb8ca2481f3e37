#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace footprint {

// Line-oriented run log. Every line goes to the optional file and, unless
// quiet, to stderr; the in-memory copy lets callers and tests inspect what
// was reported.
class RunLog {
 public:
  RunLog() = default;
  explicit RunLog(const std::filesystem::path& file, bool quiet = false);

  void info(std::string_view message);
  void warn(std::string_view message);

  std::vector<std::string> lines() const;
  bool contains(std::string_view needle) const;

 private:
  void write(std::string_view level, std::string_view message);

  mutable std::mutex mutex_;
  std::ofstream file_;
  bool quiet_ = true;
  std::vector<std::string> lines_;
};

}  // namespace footprint
