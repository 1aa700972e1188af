#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sflda/common.hpp"
#include "sflda/dataset.hpp"
#include "sflda/scatter.hpp"
#include "sflda/shrinkage.hpp"
#include "sflda/solver.hpp"

namespace sflda {

// ((sum delta)^2 - sum delta^2) / ((p - 1) sum delta^2): equicorrelation
// above this value improves the squared Mahalanobis distance.
double cochran_threshold(const Vector& delta);

// Pooled two-sample t-statistics (g = 2), group 1 minus group 0.
Vector t_statistics(const Dataset& data);

// Indices of the k largest |l_i| / s_i (equivalently |t_i|), ordered by
// decreasing magnitude; ties broken by lower index.
IndexList ttest_support(const Dataset& data, Index k);

// Rank-one between-group structure sorted by decreasing |l_i|.
struct SortedEigen {
  double gamma = 0.0;
  Vector l;            // sorted, unit norm
  IndexList order;     // l[k] = original l[order[k]]
};

SortedEigen sort_eigen(double gamma, const Vector& l);

struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
};

// Bounds on F_j, the best objective gamma (l^T v)^2 - lambda ||v||_1 over
// ||v||_2 <= 1 with v supported on the first j coordinates (1-based j):
//   lower = gamma ||l^j||^2 - lambda ||l^j||_1 / ||l^j||_2
//   upper = max(0, gamma ||l^j||^2 - lambda ||l^j||_2 / |l_1|)
// Throws when l is not sorted by decreasing magnitude.
BoundPair fj_bounds(double gamma, const Vector& l, double lambda, Index j);

// Smallest j with ||l^j||_2 > lambda / (gamma |l_1|); nullopt when none
// (the penalized solution is then exactly zero).
std::optional<Index> m_lambda(double gamma, const Vector& l, double lambda);

// Largest j in 1..p-1 such that some r > j has
//   ||l^j||_2 <= ||l^r||_2^3 / (|l_1| ||l^r||_1),
// 0 when there is none.
Index m_prime(const Vector& l);

struct TheoryReport {
  double gamma = 0.0;
  Vector l;
  IndexList order;
  double lambda = 0.0;        // in the reduced (W = I) scale
  Vector F_lower, F_upper;    // index j-1 holds the bounds for F_j
  std::optional<Index> m_lambda;
  Index m_prime = 0;
  std::optional<Index> min_support;  // max(m' + 1, m_lambda); nullopt when the solution must be zero
};

TheoryReport theory_report(double gamma, const Vector& l, double lambda);

// Two-group data with the diagonal within operator, mapped to the reduced
// problem through z_j = sqrt(W_jj) v_j: B' = D^{-1/2} B D^{-1/2} and
// lambda' = lambda / sqrt(n - g) (since s_j = sqrt(W_jj / (n - g))).
TheoryReport theory_report(const ScatterSet& scatter, double lambda);

struct PathRow {
  double lambda = 0.0;
  Index support_size = 0;
  double objective = 0.0;
  double l1_norm = 0.0;
  bool converged = true;
};

struct PathTable {
  std::vector<PathRow> rows;
  std::optional<double> drop_lambda;          // smallest lambda where the support has collapsed to 0
  std::optional<Index> min_nonzero_support;   // over converged rows
  double lambda_max = 0.0;
};

// One warm-started solve per grid point (grid ascending). The drop is
// located between the largest lambda with non-zero support and the next
// zero row, then bisected to 1e-3 * lambda_max.
PathTable solution_path(const ScatterSet& scatter, const WithinMatrix& W, const std::vector<double>& grid,
                        const SolverConfig& config);

// `count` equispaced values on [0, lambda_max] (inclusive).
std::vector<double> linear_grid(double lambda_max, int count);

enum class DualityVerdict { Holds, Violated, Inconclusive };

struct DualityOptions {
  int grid_points = 401;     // per axis, used for p <= grid_max_dim
  Index grid_max_dim = 2;
  int starts = 10000;        // projected-gradient multistart
  int ascent_steps = 40;
  int projection_sweeps = 60;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  unsigned threads = 0;
  Index max_dim = 8;
};

struct DualityCheck {
  DualityVerdict verdict = DualityVerdict::Inconclusive;
  double t = 0.0;            // ||v_lambda||_1
  double value = 0.0;        // v_lambda^T B v_lambda
  double best_found = 0.0;   // best v^T B v over the feasible set found by the search
  int feasible_starts = 0;
};

// Searches {v : v^T W v <= 1, ||v||_1 <= t} with t = ||v_lambda||_1 for a
// point whose v^T B v exceeds that of v_lambda by more than the tolerance.
// Inconclusive (never Violated) when the search cannot certify feasibility.
DualityCheck duality_forward_check(const Vector& v_lambda, const ScatterSet& scatter, const WithinMatrix& W,
                                   const DualityOptions& options = {});

}  // namespace sflda
