#include "sflda/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sflda/parallel.hpp"
#include "sflda/rng.hpp"
#include "sflda/scatter.hpp"

namespace sflda {

IndexList ClusterMap::members(int c) const {
  IndexList out;
  for (std::size_t j = 0; j < assignment.size(); ++j)
    if (assignment[j] == c) out.push_back(static_cast<Index>(j));
  return out;
}

void ClusterMap::validate(Index p) const {
  if (static_cast<Index>(assignment.size()) != p) throw ValidationError("cluster map covers the wrong number of features");
  std::vector<Index> count(static_cast<std::size_t>(k), 0);
  for (int a : assignment) {
    if (a < 0 || a >= k) throw ValidationError("cluster id out of range");
    ++count[static_cast<std::size_t>(a)];
  }
  for (Index c : count)
    if (c == 0) throw ValidationError("cluster map has an empty cluster");
}

int default_cluster_count(Index p) {
  const int k = std::max(2, static_cast<int>(std::ceil(0.01 * static_cast<double>(p))));
  return static_cast<int>(std::min<Index>(k, p));
}

Matrix feature_profiles(const Dataset& data) {
  const ScatterSet sc = compute_scatter(data);
  const int g = data.g();
  Matrix means(data.p(), g);
  for (int i = 0; i < g; ++i) {
    const IndexList rows = data.group_rows(i);
    Vector m = Vector::Zero(data.p());
    for (Index r : rows) m += data.X().row(r).transpose();
    means.col(i) = m / static_cast<double>(rows.size());
  }
  Matrix prof(data.p(), g == 2 ? 1 : g);
  for (Index j = 0; j < data.p(); ++j) {
    const double sj = sc.s[j];
    if (sj == 0.0) {
      prof.row(j).setZero();
    } else if (g == 2) {
      prof(j, 0) = (means(j, 1) - means(j, 0)) / sj;
    } else {
      prof.row(j) = means.row(j) / sj;
    }
  }
  return prof;
}

namespace {

struct Run {
  std::vector<int> assignment;
  Matrix centers;
  double inertia = std::numeric_limits<double>::infinity();
};

Run lloyd(const Matrix& X, int k, int max_iter, std::uint64_t seed) {
  const Index p = X.rows();
  SplitMix64 rng(seed);
  Run run;
  run.centers.resize(k, X.cols());

  // k-means++ seeding
  Vector d2 = Vector::Constant(p, std::numeric_limits<double>::infinity());
  Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
  run.centers.row(0) = X.row(first);
  for (int c = 1; c < k; ++c) {
    for (Index j = 0; j < p; ++j) d2[j] = std::min(d2[j], (X.row(j) - run.centers.row(c - 1)).squaredNorm());
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < p - 1; ++pick) {
        u -= d2[pick];
        if (u < 0) break;
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p)));
    }
    run.centers.row(c) = X.row(pick);
  }

  run.assignment.assign(static_cast<std::size_t>(p), -1);
  std::vector<Index> sizes(static_cast<std::size_t>(k));
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index j = 0; j < p; ++j) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (X.row(j) - run.centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (run.assignment[static_cast<std::size_t>(j)] != best) {
        run.assignment[static_cast<std::size_t>(j)] = best;
        changed = true;
      }
    }

    // Refill empty clusters with the farthest member of the largest one.
    std::fill(sizes.begin(), sizes.end(), 0);
    for (int a : run.assignment) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      const int big = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      Index far = -1;
      double fd = -1.0;
      for (Index j = 0; j < p; ++j) {
        if (run.assignment[static_cast<std::size_t>(j)] != big) continue;
        const double d = (X.row(j) - run.centers.row(big)).squaredNorm();
        if (d > fd) {
          fd = d;
          far = j;
        }
      }
      run.assignment[static_cast<std::size_t>(far)] = c;
      --sizes[static_cast<std::size_t>(big)];
      sizes[static_cast<std::size_t>(c)] = 1;
      changed = true;
    }

    run.centers.setZero();
    for (Index j = 0; j < p; ++j) run.centers.row(run.assignment[static_cast<std::size_t>(j)]) += X.row(j);
    for (int c = 0; c < k; ++c) run.centers.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
    if (!changed) break;
  }

  run.inertia = 0.0;
  for (Index j = 0; j < p; ++j)
    run.inertia += (X.row(j) - run.centers.row(run.assignment[static_cast<std::size_t>(j)])).squaredNorm();
  return run;
}

}  // namespace

ClusterMap cluster_profiles(const Matrix& profiles, const ClusterOptions& options) {
  const Index p = profiles.rows();
  const int k = options.k > 0 ? options.k : default_cluster_count(p);
  if (k > p) throw ValidationError("number of clusters exceeds number of features");
  if (k < 1) throw ValidationError("number of clusters must be positive");
  if (options.restarts < 1) throw ValidationError("restarts must be at least 1");

  ClusterMap map;
  map.k = k;
  if (k == p) {
    map.assignment.resize(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) map.assignment[static_cast<std::size_t>(j)] = static_cast<int>(j);
    map.centers = profiles;
    map.sizes.assign(static_cast<std::size_t>(p), 1);
    return map;
  }

  std::vector<Run> runs(static_cast<std::size_t>(options.restarts));
  parallel_for(runs.size(), options.threads, [&](std::size_t r) {
    runs[r] = lloyd(profiles, k, options.max_iterations, derive_seed(options.seed, r));
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia) best = r;

  map.assignment = std::move(runs[best].assignment);
  map.centers = std::move(runs[best].centers);
  map.inertia = runs[best].inertia;
  map.sizes.assign(static_cast<std::size_t>(k), 0);
  for (int a : map.assignment) ++map.sizes[static_cast<std::size_t>(a)];
  return map;
}

ClusterMap cluster_features(const Dataset& data, const ClusterOptions& options) {
  if (options.k != 0 && options.k < 2) throw ValidationError("need at least 2 clusters");
  return cluster_profiles(feature_profiles(data), options);
}

Dataset build_meta_features(const Dataset& data, const ClusterMap& map) {
  map.validate(data.p());
  Matrix M = Matrix::Zero(data.n(), map.k);
  for (Index j = 0; j < data.p(); ++j) M.col(map.assignment[static_cast<std::size_t>(j)]) += data.X().col(j);
  std::vector<std::string> names;
  for (int c = 0; c < map.k; ++c) {
    M.col(c) /= static_cast<double>(map.sizes[static_cast<std::size_t>(c)]);
    names.push_back("cluster" + std::to_string(c));
  }
  return data.with_features(std::move(M), std::move(names));
}

IndexList expand_support(const IndexList& clusters, const ClusterMap& map) {
  std::vector<bool> chosen(static_cast<std::size_t>(map.k), false);
  for (Index c : clusters) {
    if (c < 0 || c >= map.k) throw ValidationError("cluster index out of range");
    chosen[static_cast<std::size_t>(c)] = true;
  }
  IndexList out;
  for (std::size_t j = 0; j < map.assignment.size(); ++j)
    if (chosen[static_cast<std::size_t>(map.assignment[j])]) out.push_back(static_cast<Index>(j));
  return out;
}

}  // namespace sflda
