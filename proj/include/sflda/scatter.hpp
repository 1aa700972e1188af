#pragma once

#include <vector>

#include "sflda/common.hpp"
#include "sflda/dataset.hpp"

namespace sflda {

// Above this dimension no p x p matrix is ever formed.
inline constexpr Index kDefaultDenseLimit = 2000;

// Scatter matrices in factored form.
//
//   W = sum_i G_i^T G_i     (G_i: n_i x p rows of group i centered at the group mean)
//   B = H^T H               (row i of H: sqrt(n_i) * (mean_i - grand mean))
//   T = W + B
//
// `centered` stacks the G_i by group; rows of group i occupy
// [group_offsets[i], group_offsets[i+1]).
struct ScatterSet {
  Index n = 0;
  Index p = 0;
  int g = 0;
  std::vector<Index> group_counts;
  std::vector<Index> group_offsets;
  Matrix centered;
  Matrix H;
  Vector within_diag;  // diag(W)
  Vector s;            // s_j = sqrt(W_jj / (n - g))
  IndexList zero_variance;  // features with s_j == 0

  // Between-group operator built directly from factors, with no sample rows.
  // Used for analytic instances (B = H^T H, diag(W) given, penalty weights s).
  static ScatterSet from_factors(Matrix H, Vector within_diag, Vector s);

  bool has_samples() const { return centered.rows() > 0; }

  // B v = H^T (H v).
  Vector between_times(const Vector& v) const { return H.transpose() * (H * v); }
  double between_quad(const Vector& v) const { return (H * v).squaredNorm(); }

  Matrix dense_within(Index dense_limit = kDefaultDenseLimit) const;
  Matrix dense_between(Index dense_limit = kDefaultDenseLimit) const;

  // Number of singular values of H above tol * largest.
  Index between_rank(double tol = 1e-10) const;
};

ScatterSet compute_scatter(const Dataset& data);

struct BetweenEigen {
  std::vector<double> gamma;  // descending, all > 0
  std::vector<Vector> l;      // unit eigenvectors of B, largest-|component| positive
};

// Positive eigenpairs of B from the g x g matrix H H^T. Empty when B = 0.
BetweenEigen between_eigen(const ScatterSet& scatter, double rel_tol = 1e-12);

// Flips v so that its largest-magnitude component is positive (ties: lowest index).
void fix_sign(Vector& v);

}  // namespace sflda
