#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "safenav/common/rng.hpp"

namespace testing {

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(SAFENAV_DATA_DIR) / rel; }

inline std::filesystem::path golden_path(const std::string& rel) {
  return std::filesystem::path(SAFENAV_GOLDEN_DIR) / rel;
}

inline Eigen::VectorXd random_vector(safenav::Rng& rng, int n, double lo = 0.0, double hi = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("safenav-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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

 private:
  std::filesystem::path path_;
};

}  // namespace testing
