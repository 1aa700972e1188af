#pragma once

#include <cstdint>
#include <vector>

#include "sflda/common.hpp"
#include "sflda/dataset.hpp"

namespace sflda {

struct ClusterMap {
  int k = 0;
  std::vector<int> assignment;  // feature -> cluster id in 0..k-1
  Matrix centers;               // k x d, in profile space
  std::vector<Index> sizes;
  double inertia = 0.0;

  // Member features of cluster c, ascending.
  IndexList members(int c) const;
  void validate(Index p) const;
};

// Feature profiles clustered by k-means: for two groups the standardized
// mean difference (mean_1 - mean_0) / s_j; otherwise the g-vector of group
// means divided by s_j. Features with s_j = 0 get the zero profile.
Matrix feature_profiles(const Dataset& data);

struct ClusterOptions {
  int k = 0;  // 0: max(2, ceil(0.01 p)), capped at p
  int restarts = 100;
  int max_iterations = 100;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

// k-means (Lloyd, k-means++ seeding) over feature profiles; best inertia of
// `restarts` runs with ties going to the lowest restart. k == p returns the
// identity map. Empty clusters are refilled from the largest cluster.
ClusterMap cluster_features(const Dataset& data, const ClusterOptions& options);

// Same algorithm on an explicit profile matrix (rows are features).
ClusterMap cluster_profiles(const Matrix& profiles, const ClusterOptions& options);

// n x k dataset whose column c averages the features of cluster c.
Dataset build_meta_features(const Dataset& data, const ClusterMap& map);

// Union of member features of the given clusters, ascending.
IndexList expand_support(const IndexList& clusters, const ClusterMap& map);

int default_cluster_count(Index p);

}  // namespace sflda
