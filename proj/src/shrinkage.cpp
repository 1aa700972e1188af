#include "sflda/shrinkage.hpp"

#include <algorithm>
#include <cmath>

namespace sflda {

WithinMatrix WithinMatrix::diagonal(Vector d) {
  if ((d.array() < 0.0).any()) throw ValidationError("diagonal within matrix has negative entries");
  WithinMatrix w;
  w.kind_ = Kind::Diagonal;
  w.diag_ = d;
  w.base_ = std::move(d);
  return w;
}

WithinMatrix WithinMatrix::factored(Vector base, Matrix rows, Vector row_weight) {
  if (rows.cols() != base.size() || rows.rows() != row_weight.size())
    throw ValidationError("factored within matrix dimensions disagree");
  if ((row_weight.array() < 0.0).any() || (base.array() < 0.0).any())
    throw ValidationError("factored within matrix needs non-negative weights");
  WithinMatrix w;
  w.kind_ = Kind::Factored;
  w.diag_ = base + (rows.array().square().colwise() * row_weight.array()).colwise().sum().transpose().matrix();
  w.base_ = std::move(base);
  w.rows_ = std::move(rows);
  w.weight_ = std::move(row_weight);
  return w;
}

WithinMatrix WithinMatrix::dense(Matrix m) {
  if (m.rows() != m.cols()) throw ValidationError("dense within matrix must be square");
  WithinMatrix w;
  w.kind_ = Kind::Dense;
  w.diag_ = m.diagonal();
  w.dense_ = std::move(m);
  return w;
}

Vector WithinMatrix::multiply(const Vector& q) const {
  switch (kind_) {
    case Kind::Diagonal:
      return base_.cwiseProduct(q);
    case Kind::Factored:
      return base_.cwiseProduct(q) + rows_.transpose() * (weight_.cwiseProduct(rows_ * q));
    case Kind::Dense:
      return dense_ * q;
  }
  return {};
}

double WithinMatrix::quad(const Vector& v) const {
  switch (kind_) {
    case Kind::Diagonal:
      return (base_.array() * v.array().square()).sum();
    case Kind::Factored: {
      const Vector r = rows_ * v;
      return (base_.array() * v.array().square()).sum() + (weight_.array() * r.array().square()).sum();
    }
    case Kind::Dense:
      return v.dot(dense_ * v);
  }
  return 0.0;
}

Vector WithinMatrix::column(Index j) const {
  switch (kind_) {
    case Kind::Diagonal: {
      Vector c = Vector::Zero(dim());
      c[j] = base_[j];
      return c;
    }
    case Kind::Factored: {
      Vector c = rows_.transpose() * (weight_.cwiseProduct(rows_.col(j)));
      c[j] += base_[j];
      return c;
    }
    case Kind::Dense:
      return dense_.col(j);
  }
  return {};
}

Matrix WithinMatrix::materialize(Index dense_limit) const {
  if (kind_ == Kind::Dense) return dense_;
  if (dim() > dense_limit) throw ValidationError("refusing to materialize within matrix above p_dense");
  Matrix m = base_.asDiagonal();
  if (kind_ == Kind::Factored) m.noalias() += rows_.transpose() * weight_.asDiagonal() * rows_;
  return m;
}

WithinMatrix WithinMatrix::for_coordinate_updates(Index dense_limit) const {
  if (kind_ != Kind::Factored || dim() > dense_limit) return *this;
  const Index weighted = (weight_.array() > 0.0).count();
  if (dim() > 2 * weighted) return *this;
  return dense(materialize(dense_limit));
}

Matrix WithinMatrix::solve(const Matrix& rhs, Index dense_limit) const {
  const Index p = dim();
  if (rhs.rows() != p) throw ValidationError("solve: right-hand side has wrong dimension");
  const Eigen::Array<bool, Eigen::Dynamic, 1> absent = diag_.array() <= 0.0;
  Matrix b = rhs;
  for (Index j = 0; j < p; ++j)
    if (absent[j]) b.row(j).setZero();

  Matrix x;
  const bool woodbury = kind_ == Kind::Factored && ((base_.array() > 0.0) || absent).all();
  if (kind_ == Kind::Diagonal) {
    x = b;
    for (Index j = 0; j < p; ++j) x.row(j) = absent[j] ? Vector::Zero(b.cols()).transpose() : (b.row(j) / base_[j]).eval();
  } else if (woodbury) {
    // (D + R^T C R)^{-1} = D^{-1} - D^{-1} R^T (C^{-1} + R D^{-1} R^T)^{-1} R D^{-1}
    Vector dinv(p);
    for (Index j = 0; j < p; ++j) dinv[j] = absent[j] ? 0.0 : 1.0 / base_[j];
    IndexList keep;
    for (Index r = 0; r < rows_.rows(); ++r)
      if (weight_[r] > 0.0) keep.push_back(r);
    x = dinv.asDiagonal() * b;
    if (!keep.empty()) {
      Matrix R(static_cast<Index>(keep.size()), p);
      Vector cinv(static_cast<Index>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) {
        R.row(static_cast<Index>(k)) = rows_.row(keep[k]);
        cinv[static_cast<Index>(k)] = 1.0 / weight_[keep[k]];
      }
      Matrix small = R * dinv.asDiagonal() * R.transpose();
      small.diagonal() += cinv;
      Eigen::LLT<Matrix> llt(small);
      if (llt.info() != Eigen::Success) throw NumericalError("Woodbury capacitance matrix is not positive definite");
      x.noalias() -= dinv.asDiagonal() * (R.transpose() * llt.solve(R * x));
    }
  } else {
    Matrix m = materialize(dense_limit);
    for (Index j = 0; j < p; ++j)
      if (absent[j]) m(j, j) = 1.0;
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw NumericalError("within matrix is not positive definite");
    x = llt.solve(b);
  }
  for (Index j = 0; j < p; ++j)
    if (absent[j]) x.row(j).setZero();
  return x;
}

double estimate_tau(const Matrix& X) {
  const Index n = X.rows();
  if (n < 2) throw ValidationError("estimate_tau needs at least two rows");
  const double nd = static_cast<double>(n);

  const Matrix gram = X * X.transpose();                      // n x n
  const Vector col_sq = X.colwise().squaredNorm().transpose();  // (X^T X)_jj
  const Vector row_sq = X.rowwise().squaredNorm();

  // sum_{j,k} (X^T X)_jk^2 = ||X X^T||_F^2
  const double cross_all = gram.squaredNorm();
  const double cross_off = cross_all - col_sq.squaredNorm();

  // sum_r sum_{j != k} w_rjk^2
  const double w2_off = row_sq.squaredNorm() - X.array().pow(4).sum();
  // sum_r sum_{j != k} (w_rjk - wbar_jk)^2 = sum w^2 - n * sum wbar^2
  const double dev_off = w2_off - cross_off / nd;

  const double var_sum = nd / std::pow(nd - 1.0, 3) * dev_off;
  const double cov_sq_sum = cross_off / ((nd - 1.0) * (nd - 1.0));

  if (!(cov_sq_sum > 1e-300 * std::max(1.0, cross_all))) return 1.0;
  return std::clamp(var_sum / cov_sq_sum, 0.0, 1.0);
}

ShrunkenWithin shrunken_within(const ScatterSet& scatter, const ShrinkageOptions& options) {
  if (!scatter.has_samples()) throw ValidationError("shrunken_within needs sample rows");
  if (options.tau_override && (*options.tau_override < 0.0 || *options.tau_override > 1.0))
    throw ValidationError("tau override must lie in [0, 1]");
  ShrunkenWithin out;
  out.tau.resize(scatter.g);
  Vector base = Vector::Zero(scatter.p);
  Vector weight(scatter.n);
  for (int i = 0; i < scatter.g; ++i) {
    const Index lo = scatter.group_offsets[static_cast<std::size_t>(i)];
    const Index hi = scatter.group_offsets[static_cast<std::size_t>(i) + 1];
    const auto block = scatter.centered.middleRows(lo, hi - lo);
    const double tau = options.tau_override ? *options.tau_override : estimate_tau(block);
    out.tau[i] = tau;
    base += tau * block.colwise().squaredNorm().transpose();
    weight.segment(lo, hi - lo).setConstant(1.0 - tau);
  }
  if ((out.tau.array() == 1.0).all()) {
    out.W = diagonal_within(scatter);  // pure target: exactly diag(W)
  } else {
    out.W = WithinMatrix::factored(std::move(base), scatter.centered, std::move(weight));
  }
  return out;
}

ShrunkenWithin shrunken_within(const Dataset& data, const ShrinkageOptions& options) {
  return shrunken_within(compute_scatter(data), options);
}

WithinMatrix diagonal_within(const ScatterSet& scatter) { return WithinMatrix::diagonal(scatter.within_diag); }

}  // namespace sflda
