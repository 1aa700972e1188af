#include "sflda/solver.hpp"

#include <cmath>
#include <limits>
#include <mutex>

namespace sflda {

void SolverConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite non-negative number");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (max_outer < 1 || max_inner < 1) throw ValidationError("iteration caps must be at least 1");
  if (cache_check_every < 1) throw ValidationError("cache_check_every must be at least 1");
}

SolverState::SolverState(const WithinMatrix& W, Vector v) : W_(&W), v_(std::move(v)) {
  if (v_.size() != W.dim()) throw ValidationError("solver start has wrong dimension");
  b_ = Vector::Zero(v_.size());
  set_q(v_);
}

void SolverState::set_q(Vector q) {
  q_ = std::move(q);
  if (W_->kind() == WithinMatrix::Kind::Factored) {
    rq_ = W_->rows() * q_;
  } else {
    wq_ = W_->multiply(q_);
  }
}

void SolverState::begin_step(const ScatterSet& scatter) { b_ = scatter.between_times(v_); }

double SolverState::normalize() {
  Vector next;
  if (q_.isZero(0.0)) {
    next = Vector::Zero(q_.size());
  } else {
    const double nrm2 = W_->quad(q_);
    if (!(nrm2 > 0.0)) throw NumericalError("q^T W q is not positive for non-zero q");
    next = q_ / std::sqrt(nrm2);
  }
  const double change = (next - v_).lpNorm<1>();
  v_ = std::move(next);
  return change;
}

double SolverState::Wq(Index j) const {
  if (W_->kind() == WithinMatrix::Kind::Factored) {
    const auto col = W_->rows().col(j);
    double acc = 0.0;
    const Vector& w = W_->row_weight();
    for (Index r = 0; r < col.size(); ++r) acc += col[r] * w[r] * rq_[r];
    return W_->base()[j] * q_[j] + acc;
  }
  return wq_[j];
}

void SolverState::update(Index j, double delta) {
  if (delta == 0.0) return;
  q_[j] += delta;
  switch (W_->kind()) {
    case WithinMatrix::Kind::Diagonal:
      wq_[j] += delta * W_->base()[j];
      break;
    case WithinMatrix::Kind::Dense:
      wq_.noalias() += delta * W_->dense_matrix().col(j);
      break;
    case WithinMatrix::Kind::Factored:
      rq_.noalias() += delta * W_->rows().col(j);
      break;
  }
}

Vector SolverState::Wq_full() const {
  if (W_->kind() == WithinMatrix::Kind::Factored)
    return W_->base().cwiseProduct(q_) + W_->rows().transpose() * W_->row_weight().cwiseProduct(rq_);
  return wq_;
}

double SolverState::resync() {
  const Vector fresh = W_->multiply(q_);
  const Vector cached = Wq_full();
  const double scale = std::max(1.0, fresh.lpNorm<Eigen::Infinity>());
  const double drift = fresh.size() ? (fresh - cached).lpNorm<Eigen::Infinity>() / scale : 0.0;
  set_q(q_);
  return drift;
}

double SolverState::objective(const Vector& s, double lambda) const {
  double quad = 0.0;
  if (W_->kind() == WithinMatrix::Kind::Factored) {
    quad = (W_->base().array() * q_.array().square()).sum() + (W_->row_weight().array() * rq_.array().square()).sum();
  } else {
    quad = q_.dot(wq_);
  }
  return 2.0 * b_.dot(q_) - lambda * s.cwiseProduct(q_).lpNorm<1>() - quad;
}

PassResult coordinate_pass(SolverState& state, const ScatterSet& scatter, const WithinMatrix& W,
                           const SolverConfig& config, SplitMix64& rng, const UpdateObserver* observer) {
  const Index p = W.dim();
  const Vector& s = scatter.s;
  const Vector& b = state.b();
  const double lambda = config.lambda;
  PassResult res;

  bool zero_optimal = true;
  for (Index j = 0; j < p && zero_optimal; ++j) {
    if (W.diag()[j] <= 0.0 || s[j] == 0.0) continue;
    if (std::abs(b[j]) > 0.5 * lambda * s[j]) zero_optimal = false;
  }
  if (zero_optimal) {
    res.D = state.q().lpNorm<1>();
    res.screened_zero = true;
    state.set_q(Vector::Zero(p));
    res.objective = 0.0;
    if (observer)
      for (Index j = 0; j < p; ++j) (*observer)(j, state.q());
    return res;
  }

  std::vector<Index> order;
  random_permutation(rng, order, p);
  double f = state.objective(s, lambda);
  for (Index j : order) {
    const double w = W.diag()[j];
    const double q_old = state.q()[j];
    double q_new = 0.0;
    double z = 0.0;
    if (w > 0.0 && s[j] > 0.0) {
      z = b[j] - (state.Wq(j) - w * q_old);
      q_new = soft_threshold(z, 0.5 * lambda * s[j]) / w;
    } else if (w > 0.0) {
      z = b[j] - (state.Wq(j) - w * q_old);
    }
    const double delta = q_new - q_old;
    if (delta != 0.0) {
      const double sj = s[j];
      const double gain = delta * (2.0 * z - w * (q_new + q_old)) - lambda * sj * (std::abs(q_new) - std::abs(q_old));
      f += gain;
      if (gain < 0.0) {
        const double ratio = -gain / std::max(std::abs(f), std::numeric_limits<double>::min());
        res.worst_decrease = std::max(res.worst_decrease, ratio);
      }
      state.update(j, delta);
      res.D += std::abs(delta);
    }
    if (observer) (*observer)(j, state.q());
  }
  res.objective = state.objective(s, lambda);
  return res;
}

Vector initial_vector(const ScatterSet& scatter, const WithinMatrix& W) {
  if (scatter.H.rows() == 0 || scatter.H.isZero(0.0)) throw NumericalError("no between-group signal (B = 0)");
  const Matrix Y = W.solve(scatter.H.transpose());  // W^{-1} H^T, p x g
  const Matrix M = scatter.H * Y;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
  const Index top = M.rows() - 1;
  if (!(es.eigenvalues()[top] > 0.0)) throw NumericalError("no between-group signal (B = 0)");
  Vector v = Y * es.eigenvectors().col(top);
  const double nrm2 = W.quad(v);
  if (!(nrm2 > 0.0)) throw NumericalError("initial vector has zero within-group norm");
  v /= std::sqrt(nrm2);
  fix_sign(v);
  return v;
}

double lambda_max(const ScatterSet& scatter, const Vector& v0) {
  const Vector Bv = scatter.between_times(v0);
  double best = 0.0;
  for (Index j = 0; j < Bv.size(); ++j)
    if (scatter.s[j] > 0.0) best = std::max(best, std::abs(Bv[j] / scatter.s[j]));
  return 2.0 * best;
}

double kkt_residual(const Vector& b, const Vector& Wq, const Vector& q, const Vector& s, double lambda) {
  double worst = 0.0;
  for (Index j = 0; j < q.size(); ++j) {
    const double grad = 2.0 * b[j] - 2.0 * Wq[j];
    double viol;
    if (s[j] == 0.0) {
      viol = 0.0;  // infinite penalty: any gradient is admissible
    } else if (q[j] > 0.0) {
      viol = std::abs(grad - lambda * s[j]);
    } else if (q[j] < 0.0) {
      viol = std::abs(grad + lambda * s[j]);
    } else {
      viol = std::max(0.0, std::abs(grad) - lambda * s[j]);
    }
    worst = std::max(worst, viol);
  }
  return worst;
}

double penalized_objective(const ScatterSet& scatter, const Vector& v, double lambda) {
  return scatter.between_quad(v) - lambda * scatter.s.cwiseProduct(v).lpNorm<1>();
}

SolveResult solve_discriminant(const ScatterSet& scatter, const WithinMatrix& W_in, const SolverConfig& config,
                               const Vector* start) {
  config.validate();
  if (W_in.dim() != scatter.p) throw ValidationError("within matrix and scatter disagree on p");
  const WithinMatrix W = W_in.for_coordinate_updates(config.dense_limit);

  Vector v0;
  if (start && start->size() == scatter.p && !start->isZero(0.0)) {
    v0 = *start / std::sqrt(W.quad(*start));
  } else {
    v0 = initial_vector(scatter, W);
  }

  SolveResult out;
  SolveDiagnostics& diag = out.diagnostics;
  diag.seed = config.seed;
  diag.lambda = config.lambda;

  SplitMix64 rng(config.seed);
  SolverState state(W, v0);

  Vector best_v = v0;
  double best_obj = -std::numeric_limits<double>::infinity();
  Vector last_b = Vector::Zero(scatter.p);
  Vector last_q = Vector::Zero(scatter.p);

  for (int outer = 0; outer < config.max_outer; ++outer) {
    diag.outer_iterations = outer + 1;
    state.begin_step(scatter);
    std::vector<double> f_trace, d_trace;
    bool inner_converged = false;
    for (int sweep = 0; sweep < config.max_inner; ++sweep) {
      const PassResult pr = coordinate_pass(state, scatter, W, config, rng);
      ++diag.total_sweeps;
      diag.worst_decrease = std::max(diag.worst_decrease, pr.worst_decrease);
      f_trace.push_back(pr.objective);
      d_trace.push_back(pr.D);
      if ((sweep + 1) % config.cache_check_every == 0)
        diag.max_cache_drift = std::max(diag.max_cache_drift, state.resync());
      if (pr.D < config.eps) {
        inner_converged = true;
        break;
      }
    }
    diag.objective_trace.push_back(std::move(f_trace));
    diag.d_trace.push_back(std::move(d_trace));
    last_b = state.b();
    last_q = state.q();

    const double change = state.normalize();
    const bool zero = state.v().isZero(0.0);
    const double obj = zero ? 0.0 : penalized_objective(scatter, state.v(), config.lambda);
    if (obj > best_obj) {
      best_obj = obj;
      best_v = state.v();
    }
    if (zero || (inner_converged && change < config.eps)) {
      diag.converged = inner_converged;
      break;
    }
  }

  out.v = diag.converged ? state.v() : best_v;

  const Vector Wq = W.multiply(last_q);
  diag.kkt_residual = kkt_residual(last_b, Wq, last_q, scatter.s, config.lambda);
  diag.kkt_scale = 2.0 * last_b.lpNorm<Eigen::Infinity>();

  if (!out.v.isZero(0.0) && config.zero_fallback && penalized_objective(scatter, out.v, config.lambda) < 0.0) {
    out.v.setZero();
    diag.zero_by_objective = true;
  }
  diag.zero_solution = out.v.isZero(0.0);
  diag.normalization = diag.zero_solution ? 0.0 : W.quad(out.v);
  diag.penalized_objective = diag.zero_solution ? 0.0 : penalized_objective(scatter, out.v, config.lambda);
  if (SolveAudit::enabled()) SolveAudit::record(diag);
  return out;
}

CertificateCheck check_certificates(const SolveDiagnostics& d) {
  CertificateCheck c;
  c.monotone = d.worst_decrease <= 1e-10;
  for (const auto& trace : d.objective_trace)
    for (std::size_t k = 1; k < trace.size(); ++k)
      if (trace[k] < trace[k - 1] - 1e-10 * std::abs(trace[k])) c.monotone = false;
  c.kkt = d.kkt_residual <= 1e-4 * d.kkt_scale;
  c.normalized = d.zero_solution || std::abs(d.normalization - 1.0) <= 1e-8;
  return c;
}

namespace {
std::atomic<bool> g_audit_enabled{false};
std::mutex g_audit_mutex;
SolveAudit::Counts g_audit_counts;
}  // namespace

void SolveAudit::enable(bool on) { g_audit_enabled = on; }
bool SolveAudit::enabled() { return g_audit_enabled; }

void SolveAudit::record(const SolveDiagnostics& d) {
  std::lock_guard<std::mutex> lock(g_audit_mutex);
  if (!d.converged) {
    ++g_audit_counts.nonconverged;
    return;
  }
  ++g_audit_counts.converged;
  const CertificateCheck c = check_certificates(d);
  if (!c.monotone) ++g_audit_counts.failed_monotone;
  if (!c.kkt) ++g_audit_counts.failed_kkt;
  if (!c.normalized) ++g_audit_counts.failed_normalization;
}

void SolveAudit::reset() {
  std::lock_guard<std::mutex> lock(g_audit_mutex);
  g_audit_counts = {};
}

SolveAudit::Counts SolveAudit::counts() {
  std::lock_guard<std::mutex> lock(g_audit_mutex);
  return g_audit_counts;
}

}  // namespace sflda
