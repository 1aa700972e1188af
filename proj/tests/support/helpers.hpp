#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "sflda/dataset.hpp"
#include "sflda/rng.hpp"

namespace testutil {

// Gaussian data with per-group mean shifts `shift * k` on the first `r` features.
inline sflda::Dataset random_dataset(sflda::Index n_per_group, sflda::Index p, int g, std::uint64_t seed,
                                     double shift = 1.0, sflda::Index r = -1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  if (r < 0) r = p;
  sflda::Matrix X(n_per_group * g, p);
  std::vector<int> labels;
  for (int k = 0; k < g; ++k)
    for (sflda::Index i = 0; i < n_per_group; ++i) {
      const sflda::Index row = k * n_per_group + i;
      for (sflda::Index j = 0; j < p; ++j) X(row, j) = N(rng) + (j < r ? shift * k * (1.0 + 0.3 * static_cast<double>(j % 5)) : 0.0);
      labels.push_back(k);
    }
  return sflda::Dataset::create(std::move(X), std::move(labels));
}

inline sflda::Dataset centered(const sflda::Dataset& d) {
  return d.with_features(d.X().rowwise() - d.X().colwise().mean(), d.feature_names());
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("sflda_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& f) const { return path / f; }
};

}  // namespace testutil
