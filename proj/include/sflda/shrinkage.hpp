#pragma once

#include <optional>

#include "sflda/common.hpp"
#include "sflda/dataset.hpp"
#include "sflda/scatter.hpp"

namespace sflda {

// Symmetric PSD p x p operator in one of three storages:
//   Diagonal: diag(base)
//   Factored: diag(base) + R^T diag(weight) R    (R: m x p, weight >= 0)
//   Dense:    explicit matrix
// Every storage exposes its full diagonal, products and linear solves.
class WithinMatrix {
 public:
  enum class Kind { Diagonal, Factored, Dense };

  WithinMatrix() = default;
  static WithinMatrix diagonal(Vector d);
  static WithinMatrix factored(Vector base, Matrix rows, Vector row_weight);
  static WithinMatrix dense(Matrix w);
  static WithinMatrix identity(Index p) { return diagonal(Vector::Ones(p)); }

  Kind kind() const { return kind_; }
  Index dim() const { return diag_.size(); }
  const Vector& diag() const { return diag_; }

  // Factored-form pieces (base() is the whole matrix for Diagonal).
  const Vector& base() const { return base_; }
  const Matrix& rows() const { return rows_; }
  const Vector& row_weight() const { return weight_; }
  const Matrix& dense_matrix() const { return dense_; }

  Vector multiply(const Vector& q) const;
  double quad(const Vector& v) const;
  Vector column(Index j) const;
  Matrix materialize(Index dense_limit = kDefaultDenseLimit) const;

  // Dense copy when that makes coordinate updates cheaper (p <= limit and
  // p no larger than twice the number of weighted rows); otherwise *this.
  WithinMatrix for_coordinate_updates(Index dense_limit = kDefaultDenseLimit) const;

  // W^{-1} rhs. Coordinates whose diagonal entry is zero (isolated zero
  // rows/columns of a PSD matrix) are treated as absent and come back zero.
  // Factored storage uses the Woodbury identity; throws NumericalError when
  // the matrix is not positive definite on the remaining coordinates.
  Matrix solve(const Matrix& rhs, Index dense_limit = kDefaultDenseLimit) const;

 private:
  Kind kind_ = Kind::Diagonal;
  Vector diag_;
  Vector base_;
  Matrix rows_;
  Vector weight_;
  Matrix dense_;
};

// Shrinkage intensity for one group's centered rows (n_i x p) toward the
// diagonal, unequal-variance target:
//
//   tau = sum_{j != k} Var(s_jk) / sum_{j != k} s_jk^2,  clipped to [0, 1],
//
// with s_jk the unbiased sample covariance and
// Var(s_jk) = n/(n-1)^3 * sum_r (w_rjk - mean_r w_rjk)^2, w_rjk = x_rj x_rk.
// Returns 1 when every off-diagonal covariance vanishes. Evaluated through
// the n_i x n_i Gram matrix in O(n_i^2 p).
double estimate_tau(const Matrix& centered_group);

struct ShrinkageOptions {
  std::optional<double> tau_override;  // nullopt = "auto"
  Index p_dense = kDefaultDenseLimit;
};

struct ShrunkenWithin {
  Vector tau;  // one per group
  WithinMatrix W;
};

// W~ = sum_i n_i (tau_i diag(S_i) + (1 - tau_i) S_i), kept factored.
ShrunkenWithin shrunken_within(const ScatterSet& scatter, const ShrinkageOptions& options = {});
ShrunkenWithin shrunken_within(const Dataset& data, const ShrinkageOptions& options = {});

// diag(W): the within operator of the diagonal-penalized baseline.
WithinMatrix diagonal_within(const ScatterSet& scatter);

}  // namespace sflda
