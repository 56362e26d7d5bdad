#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "aquilt/util.hpp"

namespace aquilt::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("aquilt-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

  std::filesystem::path write(const std::string& rel, const std::string& content) const {
    const auto p = path_ / rel;
    std::filesystem::create_directories(p.parent_path());
    io::write_file_atomic(p, content);
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return AQUILT_SOURCE_DIR; }
inline std::filesystem::path asset_dir() { return AQUILT_ASSET_DIR; }
inline std::filesystem::path fixture_dir() { return AQUILT_FIXTURE_DIR; }

}  // namespace aquilt::testing
