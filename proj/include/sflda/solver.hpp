#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sflda/common.hpp"
#include "sflda/rng.hpp"
#include "sflda/scatter.hpp"
#include "sflda/shrinkage.hpp"

namespace sflda {

struct SolverConfig {
  double lambda = 0.0;
  double eps = 1e-6;      // threshold on D = sum_j |q_new - q_old| and on the outer L1 change
  int max_outer = 30;
  int max_inner = 100;
  std::uint64_t seed = 0;
  // Use diag(W) in place of W~ (callers pick the operator; this flag is
  // recorded for reporting and consumed by the pipeline).
  bool diagonal_mode = false;
  // Return v = 0 when the final iterate has negative penalized objective,
  // since v = 0 always attains objective 0.
  bool zero_fallback = true;
  int cache_check_every = 10;
  Index dense_limit = kDefaultDenseLimit;

  void validate() const;
};

// S(x, a) = sign(x) * max(|x| - a, 0)
inline double soft_threshold(double x, double a) {
  if (x > a) return x - a;
  if (x < -a) return x + a;
  return 0.0;
}

// Iterates of the alternating search. `b` holds B v for the current outer
// step (B^{1/2} u with u = B^{1/2} v, never forming B^{1/2}); `q` is the
// unnormalized Step-2 iterate and the cache tracks W~ q incrementally.
class SolverState {
 public:
  SolverState(const WithinMatrix& W, Vector v);

  const Vector& v() const { return v_; }
  const Vector& q() const { return q_; }
  const Vector& b() const { return b_; }

  // Starts a Step-2 solve: b <- B v.
  void begin_step(const ScatterSet& scatter);
  // v <- q / sqrt(q^T W~ q), or 0 when q = 0. Returns ||v_new - v_old||_1.
  double normalize();

  // (W~ q)_j from the cache.
  double Wq(Index j) const;
  // Adds delta to q_j and updates the cache.
  void update(Index j, double delta);
  // Replaces the cache with a full product; returns the max abs drift
  // relative to max(1, ||W~ q||_inf).
  double resync();
  Vector Wq_full() const;

  // f(q) = 2 b^T q - lambda * sum_j |s_j q_j| - q^T W~ q, from the cache.
  double objective(const Vector& s, double lambda) const;

  void set_q(Vector q);

 private:
  const WithinMatrix* W_;
  Vector v_, q_, b_;
  Vector wq_;  // Diagonal / Dense: W~ q
  Vector rq_;  // Factored: R q
};

// Called after every coordinate update with (j, q).
using UpdateObserver = std::function<void(Index, const Vector&)>;

struct PassResult {
  double D = 0.0;
  double objective = 0.0;      // f(q) after the pass
  double worst_decrease = 0.0;  // max over updates of -delta_f / max(|f|, tiny); <= 0 means monotone
  bool screened_zero = false;  // q = 0 certified optimal before any update
};

// One sweep over all coordinates in a fresh uniform random order:
//   q_j <- S(b_j - sum_{i != j} w_ji q_i, lambda s_j / 2) / w_jj,
// with coordinates having w_jj = 0 or s_j = 0 held at zero. When
// |b_j| <= lambda s_j / 2 for every j, q = 0 solves the Step-2 problem
// exactly and the pass sets it directly.
PassResult coordinate_pass(SolverState& state, const ScatterSet& scatter, const WithinMatrix& W,
                           const SolverConfig& config, SplitMix64& rng, const UpdateObserver* observer = nullptr);

// Leading eigenvector of W~^{-1} B via the g x g problem H W~^{-1} H^T,
// normalized to v^T W~ v = 1, largest-|component| positive.
Vector initial_vector(const ScatterSet& scatter, const WithinMatrix& W);

// 2 * max_j |(B v0)_j / s_j| over features with s_j > 0.
double lambda_max(const ScatterSet& scatter, const Vector& v0);

struct SolveDiagnostics {
  bool converged = false;
  bool zero_solution = false;
  bool zero_by_objective = false;  // zero_fallback fired
  int outer_iterations = 0;
  int total_sweeps = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::vector<std::vector<double>> objective_trace;  // per Step-2 solve, f(q) after each sweep
  std::vector<std::vector<double>> d_trace;
  double worst_decrease = 0.0;   // over all updates of all Step-2 solves
  double max_cache_drift = 0.0;
  double kkt_residual = 0.0;     // max_j violation of 2 b - 2 W~ q - lambda Gamma = 0
  double kkt_scale = 0.0;        // max_j |2 b_j|
  double normalization = 0.0;    // v^T W~ v
  double penalized_objective = 0.0;  // v^T B v - lambda sum_j s_j |v_j|
};

struct SolveResult {
  Vector v;
  SolveDiagnostics diagnostics;
};

// Alternating convex search: Step 1 u = B^{1/2} v (implicit), Step 2 the
// coordinate passes until D < eps or max_inner, then v <- q / sqrt(q^T W~ q).
// Stops when ||v_new - v_old||_1 < eps (or v = 0) or after max_outer steps;
// on non-convergence returns the best iterate seen. `start` (normalized
// internally) replaces the eigenvector start when non-null and non-zero.
SolveResult solve_discriminant(const ScatterSet& scatter, const WithinMatrix& W, const SolverConfig& config,
                               const Vector* start = nullptr);

// Step-2 stationarity residual for (b, q): for q_j != 0 the value
// |2 b_j - 2 (W q)_j - lambda s_j sign(q_j)|, for q_j = 0 the excess of
// |2 b_j - 2 (W q)_j| over lambda s_j.
double kkt_residual(const Vector& b, const Vector& Wq, const Vector& q, const Vector& s, double lambda);

// Penalized objective v^T B v - lambda * sum_j s_j |v_j|.
double penalized_objective(const ScatterSet& scatter, const Vector& v, double lambda);

struct CertificateCheck {
  bool monotone = true;
  bool kkt = true;
  bool normalized = true;
  bool ok() const { return monotone && kkt && normalized; }
};

// Tolerances: per-update decrease <= 1e-10 |f|, KKT residual <= 1e-4 max_j |2 b_j|,
// v^T W~ v in [1 - 1e-8, 1 + 1e-8] unless v = 0.
CertificateCheck check_certificates(const SolveDiagnostics& d);

// Process-wide tally of certificate checks over converged solves, used by
// test harnesses to audit every solve they trigger.
struct SolveAudit {
  static void enable(bool on);
  static bool enabled();
  static void record(const SolveDiagnostics& d);
  static void reset();
  struct Counts {
    std::uint64_t converged = 0;
    std::uint64_t failed_monotone = 0;
    std::uint64_t failed_kkt = 0;
    std::uint64_t failed_normalization = 0;
    std::uint64_t nonconverged = 0;
  };
  static Counts counts();
};

}  // namespace sflda
