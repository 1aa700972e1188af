#include "sflda/scatter.hpp"

#include <cmath>

namespace sflda {

ScatterSet ScatterSet::from_factors(Matrix H, Vector within_diag, Vector s) {
  if (H.cols() != within_diag.size() || s.size() != within_diag.size())
    throw ValidationError("factor dimensions disagree");
  ScatterSet out;
  out.p = H.cols();
  out.g = static_cast<int>(H.rows()) + 1;
  out.H = std::move(H);
  out.within_diag = std::move(within_diag);
  out.s = std::move(s);
  out.group_offsets = {0};
  for (Index j = 0; j < out.p; ++j)
    if (out.s[j] == 0.0) out.zero_variance.push_back(j);
  return out;
}

ScatterSet compute_scatter(const Dataset& data) {
  ScatterSet sc;
  sc.n = data.n();
  sc.p = data.p();
  sc.g = data.g();
  sc.group_counts = data.group_counts();

  const Matrix& X = data.X();
  const Vector grand = X.colwise().mean().transpose();

  sc.centered.resize(sc.n, sc.p);
  sc.H.resize(sc.g, sc.p);
  sc.group_offsets.assign(1, 0);
  Index row = 0;
  for (int i = 0; i < sc.g; ++i) {
    const IndexList rows = data.group_rows(i);
    const auto ni = static_cast<Index>(rows.size());
    Vector mean = Vector::Zero(sc.p);
    for (Index r : rows) mean += X.row(r).transpose();
    mean /= static_cast<double>(ni);
    for (Index r : rows) sc.centered.row(row++) = X.row(r) - mean.transpose();
    sc.group_offsets.push_back(row);
    sc.H.row(i) = std::sqrt(static_cast<double>(ni)) * (mean - grand).transpose();
  }

  sc.within_diag = sc.centered.colwise().squaredNorm().transpose();
  sc.s = (sc.within_diag / static_cast<double>(sc.n - sc.g)).cwiseSqrt();
  for (Index j = 0; j < sc.p; ++j)
    if (sc.s[j] == 0.0) sc.zero_variance.push_back(j);
  return sc;
}

Matrix ScatterSet::dense_within(Index dense_limit) const {
  if (p > dense_limit) throw ValidationError("refusing to form a dense p x p within-group matrix above p_dense");
  if (!has_samples()) return within_diag.asDiagonal();
  Matrix W = Matrix::Zero(p, p);
  W.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  return W.selfadjointView<Eigen::Lower>();
}

Matrix ScatterSet::dense_between(Index dense_limit) const {
  if (p > dense_limit) throw ValidationError("refusing to form a dense p x p between-group matrix above p_dense");
  return H.transpose() * H;
}

Index ScatterSet::between_rank(double tol) const {
  Eigen::JacobiSVD<Matrix> svd(H);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0;
  Index r = 0;
  for (Index k = 0; k < sv.size(); ++k)
    if (sv[k] > tol * sv[0]) ++r;
  return r;
}

void fix_sign(Vector& v) {
  if (v.size() == 0) return;
  Index arg = 0;
  for (Index j = 1; j < v.size(); ++j)
    if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
  if (v[arg] < 0) v = -v;
}

BetweenEigen between_eigen(const ScatterSet& scatter, double rel_tol) {
  const Matrix M = scatter.H * scatter.H.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  BetweenEigen out;
  const Vector& ev = es.eigenvalues();
  if (ev.size() == 0) return out;
  const double top = ev[ev.size() - 1];
  if (!(top > 0.0)) return out;
  for (Index k = ev.size() - 1; k >= 0; --k) {
    if (ev[k] <= rel_tol * top) break;
    Vector l = scatter.H.transpose() * es.eigenvectors().col(k);
    const double norm = l.norm();
    if (norm == 0.0) continue;
    l /= norm;
    fix_sign(l);
    out.gamma.push_back(ev[k]);
    out.l.push_back(std::move(l));
  }
  return out;
}

}  // namespace sflda
