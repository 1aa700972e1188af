#include "sflda/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sflda/parallel.hpp"
#include "sflda/rng.hpp"

namespace sflda {

double cochran_threshold(const Vector& delta) {
  const Index p = delta.size();
  if (p < 2) throw ValidationError("cochran_threshold needs p >= 2");
  const double sq = delta.squaredNorm();
  if (sq == 0.0) throw ValidationError("cochran_threshold needs a non-zero mean difference");
  const double total = delta.sum();
  return (total * total - sq) / (static_cast<double>(p - 1) * sq);
}

Vector t_statistics(const Dataset& data) {
  if (data.g() != 2) throw ValidationError("t-statistics need exactly two groups");
  const IndexList r0 = data.group_rows(0), r1 = data.group_rows(1);
  const double n0 = static_cast<double>(r0.size()), n1 = static_cast<double>(r1.size());
  Vector t(data.p());
  for (Index j = 0; j < data.p(); ++j) {
    double m0 = 0, m1 = 0;
    for (Index r : r0) m0 += data.X()(r, j);
    for (Index r : r1) m1 += data.X()(r, j);
    m0 /= n0;
    m1 /= n1;
    double ss = 0;
    for (Index r : r0) ss += (data.X()(r, j) - m0) * (data.X()(r, j) - m0);
    for (Index r : r1) ss += (data.X()(r, j) - m1) * (data.X()(r, j) - m1);
    const double pooled = ss / (n0 + n1 - 2.0);
    const double se = std::sqrt(pooled * (1.0 / n0 + 1.0 / n1));
    t[j] = se > 0 ? (m1 - m0) / se : 0.0;
  }
  return t;
}

IndexList ttest_support(const Dataset& data, Index k) {
  if (data.g() != 2) throw ValidationError("ttest_support needs exactly two groups");
  if (k < 0 || k > data.p()) throw ValidationError("ttest_support: k exceeds the number of features");
  const ScatterSet sc = compute_scatter(data);
  const BetweenEigen be = between_eigen(sc);
  Vector score = Vector::Zero(data.p());
  if (!be.l.empty())
    for (Index j = 0; j < data.p(); ++j) score[j] = sc.s[j] > 0 ? std::abs(be.l[0][j]) / sc.s[j] : 0.0;
  IndexList idx(static_cast<std::size_t>(data.p()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return score[a] > score[b]; });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

SortedEigen sort_eigen(double gamma, const Vector& l) {
  SortedEigen out;
  out.gamma = gamma;
  out.order.resize(static_cast<std::size_t>(l.size()));
  std::iota(out.order.begin(), out.order.end(), Index{0});
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](Index a, Index b) { return std::abs(l[a]) > std::abs(l[b]); });
  out.l.resize(l.size());
  for (Index k = 0; k < l.size(); ++k) out.l[k] = l[out.order[static_cast<std::size_t>(k)]];
  return out;
}

namespace {

void require_sorted(const Vector& l) {
  for (Index k = 1; k < l.size(); ++k)
    if (std::abs(l[k]) > std::abs(l[k - 1])) throw ValidationError("eigenvector must be sorted by decreasing magnitude");
}

}  // namespace

BoundPair fj_bounds(double gamma, const Vector& l, double lambda, Index j) {
  require_sorted(l);
  if (j < 1 || j > l.size()) throw ValidationError("fj_bounds: j outside 1..p");
  const auto head = l.head(j);
  const double l2 = head.norm();
  const double l1 = head.lpNorm<1>();
  const double top = std::abs(l[0]);
  BoundPair b;
  b.lower = gamma * l2 * l2 - lambda * l1 / l2;
  b.upper = std::max(0.0, gamma * l2 * l2 - lambda * l2 / top);
  return b;
}

std::optional<Index> m_lambda(double gamma, const Vector& l, double lambda) {
  require_sorted(l);
  if (l.size() == 0) return std::nullopt;
  const double threshold = lambda / (gamma * std::abs(l[0]));
  double acc = 0.0;
  for (Index j = 0; j < l.size(); ++j) {
    acc += l[j] * l[j];
    if (std::sqrt(acc) > threshold) return j + 1;
  }
  return std::nullopt;
}

Index m_prime(const Vector& l) {
  require_sorted(l);
  const Index p = l.size();
  if (p < 2) return 0;
  const double top = std::abs(l[0]);
  Vector l2(p), rhs(p);
  double sq = 0.0, abs_sum = 0.0;
  for (Index r = 0; r < p; ++r) {
    sq += l[r] * l[r];
    abs_sum += std::abs(l[r]);
    l2[r] = std::sqrt(sq);
    rhs[r] = l2[r] * l2[r] * l2[r] / (top * abs_sum);
  }
  // best[j] = max_{r > j} rhs[r] (0-based r)
  Index result = 0;
  double suffix = -1.0;
  for (Index j = p - 2; j >= 0; --j) {
    suffix = std::max(suffix, rhs[j + 1]);
    if (l2[j] <= suffix) {
      result = std::max(result, j + 1);
    }
  }
  return result;
}

TheoryReport theory_report(double gamma, const Vector& l, double lambda) {
  const SortedEigen se = sort_eigen(gamma, l);
  TheoryReport rep;
  rep.gamma = gamma;
  rep.l = se.l;
  rep.order = se.order;
  rep.lambda = lambda;
  const Index p = l.size();
  rep.F_lower.resize(p);
  rep.F_upper.resize(p);
  for (Index j = 1; j <= p; ++j) {
    const BoundPair b = fj_bounds(gamma, rep.l, lambda, j);
    rep.F_lower[j - 1] = b.lower;
    rep.F_upper[j - 1] = b.upper;
  }
  rep.m_lambda = m_lambda(gamma, rep.l, lambda);
  rep.m_prime = m_prime(rep.l);
  if (rep.m_lambda) rep.min_support = std::max(rep.m_prime + 1, *rep.m_lambda);
  return rep;
}

TheoryReport theory_report(const ScatterSet& scatter, double lambda) {
  if (scatter.H.rows() == 0) throw ValidationError("theory report needs between-group structure");
  Vector inv_sqrt(scatter.p);
  double lambda_scale = -1.0;
  for (Index j = 0; j < scatter.p; ++j) {
    const double w = scatter.within_diag[j];
    inv_sqrt[j] = w > 0 ? 1.0 / std::sqrt(w) : 0.0;
    if (w > 0 && lambda_scale < 0) lambda_scale = scatter.s[j] / std::sqrt(w);
  }
  if (lambda_scale < 0) throw ValidationError("theory report: every feature has zero within-group variance");
  const ScatterSet reduced = ScatterSet::from_factors(scatter.H * inv_sqrt.asDiagonal(), Vector::Ones(scatter.p),
                                                      Vector::Ones(scatter.p));
  const BetweenEigen be = between_eigen(reduced);
  if (be.gamma.empty()) throw ValidationError("theory report: B = 0");
  if (be.gamma.size() > 1) throw ValidationError("theory report applies to rank-one B (two groups)");
  return theory_report(be.gamma[0], be.l[0], lambda * lambda_scale);
}

std::vector<double> linear_grid(double lambda_max, int count) {
  if (count < 1) throw ValidationError("grid needs at least one point");
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = lambda_max * k / (count - 1);
  return grid;
}

PathTable solution_path(const ScatterSet& scatter, const WithinMatrix& W, const std::vector<double>& grid,
                        const SolverConfig& config) {
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw ValidationError("lambda grid must be strictly increasing");

  PathTable table;
  const Vector v0 = initial_vector(scatter, W);
  table.lambda_max = lambda_max(scatter, v0);

  Vector warm = v0;
  std::vector<Vector> solutions;
  for (double lambda : grid) {
    SolverConfig cfg = config;
    cfg.lambda = lambda;
    const SolveResult res = solve_discriminant(scatter, W, cfg, warm.isZero(0.0) ? &v0 : &warm);
    PathRow row;
    row.lambda = lambda;
    row.support_size = static_cast<Index>(support_of(res.v).size());
    row.objective = res.diagnostics.penalized_objective;
    row.l1_norm = res.v.lpNorm<1>();
    row.converged = res.diagnostics.converged;
    table.rows.push_back(row);
    solutions.push_back(res.v);
    if (!res.v.isZero(0.0)) warm = res.v;
  }

  for (const PathRow& row : table.rows) {
    if (!row.converged || row.support_size == 0) continue;
    if (!table.min_nonzero_support || row.support_size < *table.min_nonzero_support)
      table.min_nonzero_support = row.support_size;
  }

  // Drop: last converged non-zero row followed by a converged zero row.
  std::optional<std::size_t> last_nonzero;
  for (std::size_t k = 0; k < table.rows.size(); ++k)
    if (table.rows[k].converged && table.rows[k].support_size > 0) last_nonzero = k;
  std::optional<std::size_t> first_zero_after;
  const std::size_t from = last_nonzero ? *last_nonzero + 1 : 0;
  for (std::size_t k = from; k < table.rows.size(); ++k)
    if (table.rows[k].converged && table.rows[k].support_size == 0) {
      first_zero_after = k;
      break;
    }
  if (!first_zero_after) return table;
  if (!last_nonzero) {
    table.drop_lambda = table.rows[*first_zero_after].lambda;
    return table;
  }

  double lo = table.rows[*last_nonzero].lambda;
  double hi = table.rows[*first_zero_after].lambda;
  Vector lo_v = solutions[*last_nonzero];
  const double resolution = 1e-3 * std::max(table.lambda_max, hi);
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    SolverConfig cfg = config;
    cfg.lambda = mid;
    const SolveResult res = solve_discriminant(scatter, W, cfg, &lo_v);
    if (!res.diagnostics.converged) break;
    if (res.v.isZero(0.0)) {
      hi = mid;
    } else {
      lo = mid;
      lo_v = res.v;
    }
  }
  table.drop_lambda = hi;
  return table;
}

namespace {

// Euclidean projections used by the multistart search. The ellipsoid uses
// W = Q diag(ev) Q^T.
struct FeasibleSet {
  Matrix Q;
  Vector ev;
  Matrix W;
  double t = 0.0;

  Vector project_ellipsoid(const Vector& y) const {
    if (y.dot(W * y) <= 1.0) return y;
    const Vector c = Q.transpose() * y;
    double mu = 0.0;
    for (int it = 0; it < 100; ++it) {
      double g = -1.0, dg = 0.0;
      for (Index i = 0; i < c.size(); ++i) {
        const double d = 1.0 + mu * ev[i];
        g += ev[i] * c[i] * c[i] / (d * d);
        dg += -2.0 * ev[i] * ev[i] * c[i] * c[i] / (d * d * d);
      }
      if (std::abs(g) < 1e-14 || dg == 0.0) break;
      mu -= g / dg;
    }
    Vector x = c;
    for (Index i = 0; i < c.size(); ++i) x[i] /= 1.0 + mu * ev[i];
    return Q * x;
  }

  Vector project_l1(const Vector& y) const {
    if (y.lpNorm<1>() <= t) return y;
    std::vector<double> a(static_cast<std::size_t>(y.size()));
    for (Index i = 0; i < y.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(y[i]);
    std::sort(a.begin(), a.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      cum += a[k];
      const double cand = (cum - t) / static_cast<double>(k + 1);
      if (a[k] - cand > 0) theta = cand;
    }
    Vector x(y.size());
    for (Index i = 0; i < y.size(); ++i) x[i] = (y[i] > 0 ? 1.0 : -1.0) * std::max(std::abs(y[i]) - theta, 0.0);
    return x;
  }

  // Dykstra's alternating projection, then a radial pull-in so the returned
  // point satisfies both constraints exactly.
  Vector project(const Vector& y, int sweeps) const {
    Vector x = y, pe = Vector::Zero(y.size()), pl = Vector::Zero(y.size());
    for (int k = 0; k < sweeps; ++k) {
      const Vector a = project_ellipsoid(x + pe);
      pe = x + pe - a;
      const Vector next = project_l1(a + pl);
      pl = a + pl - next;
      const double moved = (next - x).lpNorm<Eigen::Infinity>();
      x = next;
      if (moved < 1e-13) break;
    }
    return pull_in(x);
  }

  Vector pull_in(Vector x) const {
    const double q = x.dot(W * x);
    if (q > 1.0) x /= std::sqrt(q);
    const double l1 = x.lpNorm<1>();
    if (l1 > t) x *= t / l1;
    return x;
  }
};

}  // namespace

DualityCheck duality_forward_check(const Vector& v_lambda, const ScatterSet& scatter, const WithinMatrix& W,
                                   const DualityOptions& options) {
  DualityCheck out;
  const Index p = scatter.p;
  out.t = v_lambda.lpNorm<1>();
  out.value = scatter.between_quad(v_lambda);
  out.best_found = out.value;
  if (p > options.max_dim || p > W.dim()) return out;  // budget exceeded: inconclusive

  FeasibleSet set;
  set.W = W.materialize();
  set.t = out.t;
  Eigen::SelfAdjointEigenSolver<Matrix> es(set.W);
  set.Q = es.eigenvectors();
  set.ev = es.eigenvalues().cwiseMax(0.0);
  const Matrix B = scatter.dense_between();

  double best = -1.0;
  int feasible = 0;

  if (out.t == 0.0) {
    out.best_found = 0.0;
    out.verdict = DualityVerdict::Holds;
    return out;
  }

  if (p <= options.grid_max_dim && (set.ev.array() > 0).all()) {
    // Tensor grid on the z-ball, z = W^{1/2} v, pulled into the L1 ball.
    const Matrix w_inv_sqrt = set.Q * set.ev.cwiseSqrt().cwiseInverse().asDiagonal() * set.Q.transpose();
    const int m = options.grid_points;
    std::vector<int> idx(static_cast<std::size_t>(p), 0);
    Vector z(p);
    while (true) {
      for (Index i = 0; i < p; ++i) z[i] = -1.0 + 2.0 * idx[static_cast<std::size_t>(i)] / (m - 1);
      if (z.squaredNorm() <= 1.0) {
        const Vector v = set.pull_in(w_inv_sqrt * z);
        best = std::max(best, v.dot(B * v));
        ++feasible;
      }
      Index k = 0;
      while (k < p && ++idx[static_cast<std::size_t>(k)] == m) idx[static_cast<std::size_t>(k++)] = 0;
      if (k == p) break;
    }
  }

  const double bnorm = std::max(Eigen::SelfAdjointEigenSolver<Matrix>(B).eigenvalues().maxCoeff(), 1e-300);
  const double step = 1.0 / bnorm;
  std::vector<double> start_best(static_cast<std::size_t>(options.starts), -1.0);
  parallel_for(static_cast<std::size_t>(options.starts), options.threads, [&](std::size_t s) {
    SplitMix64 rng(derive_seed(options.seed, s));
    Vector x(p);
    for (Index i = 0; i < p; ++i) x[i] = 2.0 * rng.uniform() - 1.0;
    x = set.project(x, options.projection_sweeps);
    double val = x.dot(B * x);
    for (int it = 0; it < options.ascent_steps; ++it) {
      const Vector y = set.project(x + step * 2.0 * (B * x), options.projection_sweeps);
      const double yv = y.dot(B * y);
      const double moved = (y - x).lpNorm<Eigen::Infinity>();
      if (yv > val) {
        x = y;
        val = yv;
      }
      if (moved < 1e-12) break;
    }
    start_best[s] = val;
  });
  for (double v : start_best) {
    if (v >= 0.0) ++feasible;
    best = std::max(best, v);
  }

  out.feasible_starts = feasible;
  if (feasible == 0) return out;
  out.best_found = best;
  out.verdict = best > out.value + options.tolerance ? DualityVerdict::Violated : DualityVerdict::Holds;
  return out;
}

}  // namespace sflda
