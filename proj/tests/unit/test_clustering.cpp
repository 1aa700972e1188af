#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sflda/clustering.hpp"
#include "sflda/theory.hpp"

using namespace sflda;

namespace {

// Two-group data whose features fall into profile blocks: feature j gets mean
// shift profile[j] between the groups.
Dataset profile_dataset(const std::vector<double>& profile, Index n_per_group, std::uint64_t seed, double noise = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  const Index p = static_cast<Index>(profile.size());
  Matrix X(2 * n_per_group, p);
  std::vector<int> labels;
  for (Index i = 0; i < 2 * n_per_group; ++i) {
    const int k = i < n_per_group ? 0 : 1;
    for (Index j = 0; j < p; ++j) X(i, j) = noise * N(rng) + k * profile[static_cast<std::size_t>(j)];
    labels.push_back(k);
  }
  return Dataset::create(std::move(X), std::move(labels));
}

std::vector<int> canonical(const std::vector<int>& a) {
  std::vector<int> relabel(a.size(), -1), out(a.size());
  int next = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    int& r = relabel[static_cast<std::size_t>(a[i])];
    if (r < 0) r = next++;
    out[i] = r;
  }
  return out;
}

}  // namespace

TEST_CASE("k = p returns the identity map") {
  const Dataset d = testutil::random_dataset(5, 7, 2, 1);
  ClusterOptions opt;
  opt.k = 7;
  const ClusterMap m = cluster_features(d, opt);
  CHECK(m.k == 7);
  for (int j = 0; j < 7; ++j) CHECK(m.assignment[static_cast<std::size_t>(j)] == j);
  const Dataset meta = build_meta_features(d, m);
  CHECK(meta.X() == d.X());
  CHECK(meta.labels() == d.labels());
}

TEST_CASE("two separated profile blobs are recovered exactly") {
  std::vector<int> truth;
  Matrix prof(30, 2);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 0.1);
    truth.clear();
    for (Index j = 0; j < 30; ++j) {
      const int blob = static_cast<int>(rng() % 2);
      truth.push_back(blob);
      prof(j, 0) = (blob ? 5.0 : -5.0) + N(rng);
      prof(j, 1) = (blob ? 1.0 : -2.0) + N(rng);
    }
    ClusterOptions opt;
    opt.k = 2;
    opt.restarts = 5;
    opt.seed = seed;
    const ClusterMap m = cluster_profiles(prof, opt);
    CHECK(canonical(m.assignment) == canonical(truth));
    m.validate(30);
  }
}

TEST_CASE("two-group profiles are standardized mean differences") {
  const Dataset d = testutil::random_dataset(8, 5, 2, 3, 0.9);
  const Matrix P = feature_profiles(d);
  REQUIRE(P.cols() == 1);
  const ScatterSet s = compute_scatter(d);
  Matrix M = Matrix::Zero(2, 5);
  for (Index i = 0; i < d.n(); ++i) M.row(d.labels()[static_cast<std::size_t>(i)]) += d.X().row(i) / 8.0;
  for (Index j = 0; j < 5; ++j) CHECK(P(j, 0) == doctest::Approx((M(1, j) - M(0, j)) / s.s[j]));
}

TEST_CASE("clustering from data recovers duplicated profile groups") {
  std::vector<double> profile;
  for (int j = 0; j < 12; ++j) profile.push_back(j < 6 ? 2.0 : 0.0);
  const Dataset d = profile_dataset(profile, 200, 5, 0.3);
  ClusterOptions opt;
  opt.k = 2;
  opt.seed = 2;
  const ClusterMap m = cluster_features(d, opt);
  for (int j = 1; j < 6; ++j) CHECK(m.assignment[static_cast<std::size_t>(j)] == m.assignment[0]);
  for (int j = 7; j < 12; ++j) CHECK(m.assignment[static_cast<std::size_t>(j)] == m.assignment[6]);
  CHECK(m.assignment[0] != m.assignment[6]);
}

TEST_CASE("clustering is deterministic for a fixed seed") {
  const Dataset d = testutil::random_dataset(10, 60, 3, 8, 0.5);
  ClusterOptions opt;
  opt.k = 6;
  opt.restarts = 20;
  opt.seed = 11;
  const ClusterMap a = cluster_features(d, opt);
  opt.threads = 1;
  const ClusterMap b = cluster_features(d, opt);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centers == b.centers);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("cluster map invariants") {
  const Dataset d = testutil::random_dataset(6, 40, 2, 4);
  ClusterOptions opt;
  opt.k = 9;
  opt.seed = 3;
  const ClusterMap m = cluster_features(d, opt);
  m.validate(40);
  Index total = 0;
  for (int c = 0; c < m.k; ++c) {
    CHECK(m.sizes[static_cast<std::size_t>(c)] > 0);
    CHECK(static_cast<Index>(m.members(c).size()) == m.sizes[static_cast<std::size_t>(c)]);
    total += m.sizes[static_cast<std::size_t>(c)];
  }
  CHECK(total == 40);
  CHECK(m.centers.rows() == 9);
}

TEST_CASE("cluster count errors and default") {
  const Dataset d = testutil::random_dataset(5, 6, 2, 1);
  ClusterOptions opt;
  opt.k = 7;
  CHECK_THROWS_AS(cluster_features(d, opt), ValidationError);
  opt.k = 1;
  CHECK_THROWS_AS(cluster_features(d, opt), ValidationError);
  opt.k = 3;
  opt.restarts = 0;
  CHECK_THROWS_AS(cluster_features(d, opt), ValidationError);
  CHECK(default_cluster_count(800) == 8);
  CHECK(default_cluster_count(18954) == 190);
  CHECK(default_cluster_count(50) == 2);
  CHECK(default_cluster_count(1) == 1);
}

TEST_CASE("meta-features") {
  SUBCASE("duplicate columns average to the column") {
    Dataset d = testutil::random_dataset(5, 4, 2, 2);
    Matrix X = d.X();
    X.col(3) = X.col(1);
    d = d.with_features(X);
    ClusterMap m;
    m.k = 3;
    m.assignment = {0, 1, 2, 1};
    m.sizes = {1, 2, 1};
    m.centers = Matrix::Zero(3, 1);
    const Dataset meta = build_meta_features(d, m);
    CHECK(meta.X().col(1) == X.col(1));
    CHECK(meta.X().col(0) == X.col(0));
  }
  SUBCASE("random 20 x 10 with k = 3 matches a direct average") {
    const Dataset d = testutil::random_dataset(10, 10, 2, 9);
    ClusterOptions opt;
    opt.k = 3;
    opt.seed = 4;
    const ClusterMap m = cluster_features(d, opt);
    const Dataset meta = build_meta_features(d, m);
    CHECK(meta.n() == 20);
    CHECK(meta.p() == 3);
    CHECK((meta.X() - oracle::group_average(d.X(), m.assignment, 3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(meta.labels() == d.labels());
  }
}

TEST_CASE("expand support") {
  ClusterMap m;
  m.k = 3;
  m.assignment = {0, 1, 1, 0, 2, 1, 0, 1, 2};
  m.sizes = {3, 4, 2};
  m.centers = Matrix::Zero(3, 1);
  CHECK(expand_support({}, m).empty());
  const IndexList e = expand_support({0, 1}, m);
  CHECK(e.size() == 7);
  CHECK(e == IndexList{0, 1, 2, 3, 5, 6, 7});
  CHECK(expand_support({0, 1, 2}, m).size() == 9);
  CHECK_THROWS_AS(expand_support({3}, m), ValidationError);
}

TEST_CASE("clustering lowers the minimum non-zero support on near-duplicate profiles") {
  // p = 20: ten features near the first profile value of the second p = 2
  // geometry and ten near the second.
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.01);
    std::vector<double> profile;
    for (int j = 0; j < 20; ++j) profile.push_back((j < 10 ? 0.6 : 0.5) + jitter(rng));
    const Dataset d = testutil::centered(profile_dataset(profile, 40, seed));
    SolverConfig cfg;
    cfg.diagonal_mode = true;
    auto min_support = [&](const Dataset& data) {
      const ScatterSet s = compute_scatter(data);
      const WithinMatrix D = diagonal_within(s);
      const PathTable t = solution_path(s, D, linear_grid(lambda_max(s, initial_vector(s, D)), 100), cfg);
      return t.min_nonzero_support.value_or(0);
    };
    ClusterOptions opt;
    opt.k = 2;
    opt.seed = seed;
    const ClusterMap m = cluster_features(d, opt);
    const Index raw = min_support(d);
    const Index clustered = min_support(testutil::centered(build_meta_features(d, m)));
    CHECK(clustered <= raw);
    ok += clustered < raw;
  }
  CHECK(ok >= 1);
}
