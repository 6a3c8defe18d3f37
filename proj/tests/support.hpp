#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include "pmseg/trajectory.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("pmseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline pmseg::Matrix gaussian(pmseg::Index rows, pmseg::Index cols, std::mt19937_64& rng,
                              double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  pmseg::Matrix m(rows, cols);
  for (pmseg::Index r = 0; r < rows; ++r)
    for (pmseg::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

// Random valid segmentation over `frames` frames with labels in [0, labels).
inline pmseg::Segmentation random_segmentation(pmseg::Index frames, std::mt19937_64& rng,
                                               int max_segments = 8, int labels = 4) {
  std::uniform_int_distribution<int> count(1, max_segments);
  std::uniform_int_distribution<pmseg::Index> cut(1, frames - 1);
  std::uniform_int_distribution<int> lab(0, labels - 1);
  std::vector<pmseg::Index> cuts;
  const int n = count(rng);
  for (int i = 1; i < n; ++i) cuts.push_back(cut(rng));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  pmseg::Segmentation seg;
  pmseg::Index start = 0;
  for (pmseg::Index c : cuts) {
    seg.segments.push_back({start, c - 1, lab(rng)});
    start = c;
  }
  seg.segments.push_back({start, frames - 1, lab(rng)});
  return seg;
}

}  // namespace testing
