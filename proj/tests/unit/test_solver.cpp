#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sflda/shrinkage.hpp"
#include "sflda/solver.hpp"
#include "sflda/theory.hpp"

using namespace sflda;

namespace {

struct Instance {
  ScatterSet scatter;
  WithinMatrix W;
};

Instance data_instance(Index n_per_group, Index p, int g, std::uint64_t seed, double shift = 0.8) {
  const Dataset d = testutil::centered(testutil::random_dataset(n_per_group, p, g, seed, shift, std::max<Index>(1, p / 3)));
  Instance in;
  in.scatter = compute_scatter(d);
  ShrinkageOptions opt;
  opt.tau_override = 0.4;
  in.W = shrunken_within(in.scatter, opt).W;
  return in;
}

Instance rank_one(const Vector& l, double gamma = 1.0) {
  Instance in;
  in.scatter = ScatterSet::from_factors(std::sqrt(gamma) * l.transpose(), Vector::Ones(l.size()), Vector::Ones(l.size()));
  in.W = WithinMatrix::identity(l.size());
  return in;
}

Vector random_unit(Index p, std::uint64_t seed, bool sorted_positive = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  Vector l(p);
  for (Index i = 0; i < p; ++i) l[i] = sorted_positive ? U(rng) : N(rng);
  if (sorted_positive) std::sort(l.data(), l.data() + p, std::greater<double>());
  return l.normalized();
}

}  // namespace

TEST_CASE("soft threshold") {
  CHECK(soft_threshold(3, 1) == 2);
  CHECK(soft_threshold(-0.5, 1) == 0);
  CHECK(soft_threshold(-3, 1) == -2);
  CHECK(soft_threshold(1, 1) == 0);
}

TEST_CASE("config validation") {
  SolverConfig c;
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.lambda = 0;
  c.eps = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.eps = 1e-6;
  c.max_inner = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("initial vector: identity within matrix gives l") {
  const Vector l = random_unit(7, 3);
  const Instance in = rank_one(l, 2.5);
  Vector expect = l;
  fix_sign(expect);
  CHECK((initial_vector(in.scatter, in.W) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("initial vector matches a dense generalized eigensolver") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance in = data_instance(6, 10, 2 + static_cast<int>(seed % 2), seed);
    const Vector v0 = initial_vector(in.scatter, in.W);
    const Vector oracle_v = oracle::generalized_top(in.scatter.dense_between(), in.W.materialize());
    CHECK((v0 - oracle_v).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(in.W.quad(v0) - 1.0) < 1e-10);
  }
}

TEST_CASE("initial vector normalization on factored, diagonal and dense storage") {
  const Instance in = data_instance(5, 60, 3, 4);
  for (const WithinMatrix& W : {in.W, WithinMatrix::dense(in.W.materialize()), diagonal_within(in.scatter)}) {
    const Vector v0 = initial_vector(in.scatter, W);
    CHECK(std::abs(W.quad(v0) - 1.0) < 1e-10);
  }
}

TEST_CASE("initial vector without between-group signal is an error") {
  const ScatterSet s = ScatterSet::from_factors(Matrix::Zero(1, 3), Vector::Ones(3), Vector::Ones(3));
  CHECK_THROWS_AS(initial_vector(s, WithinMatrix::identity(3)), NumericalError);
}

TEST_CASE("lambda_max formula") {
  const ScatterSet zero = ScatterSet::from_factors(Matrix::Zero(1, 3), Vector::Ones(3), Vector::Ones(3));
  CHECK(lambda_max(zero, Vector::Ones(3)) == 0.0);
  Vector l(3);
  l << 1, 0, 0;
  const Instance in = rank_one(l);
  CHECK(lambda_max(in.scatter, l) == doctest::Approx(2.0).epsilon(1e-15));
  // Zero-SD coordinates are excluded from the max.
  Matrix H(1, 2);
  H << 1, 5;
  const ScatterSet s = ScatterSet::from_factors(H, Vector::Ones(2), Vector(Vector::Unit(2, 0)));
  Vector v(2);
  v << 1, 1;
  CHECK(lambda_max(s, v) == doctest::Approx(12.0));
}

TEST_CASE("a pass at lambda >= lambda_max zeroes every coordinate") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Instance in = data_instance(6, 20, 2, seed);
    const Vector v0 = initial_vector(in.scatter, in.W);
    SolverConfig cfg;
    cfg.lambda = lambda_max(in.scatter, v0) * 1.0000001;
    SolverState st(in.W, v0);
    st.begin_step(in.scatter);
    SplitMix64 rng(seed);
    const PassResult pr = coordinate_pass(st, in.scatter, in.W, cfg, rng);
    CHECK(st.q().isZero(0.0));
    CHECK(pr.D == doctest::Approx(v0.lpNorm<1>()).epsilon(1e-14));
    CHECK(pr.screened_zero);
  }
}

TEST_CASE("one pass with a diagonal within matrix reaches the closed form") {
  const Instance in = data_instance(6, 5, 2, 8);
  const WithinMatrix D = diagonal_within(in.scatter);
  const Vector v0 = initial_vector(in.scatter, D);
  SolverConfig cfg;
  cfg.lambda = 0.3 * lambda_max(in.scatter, v0);
  SolverState st(D, v0);
  st.begin_step(in.scatter);
  SplitMix64 rng(1);
  coordinate_pass(st, in.scatter, D, cfg, rng);
  const Vector b = in.scatter.between_times(v0);
  for (Index j = 0; j < 5; ++j) {
    const double expect = soft_threshold(b[j], 0.5 * cfg.lambda * in.scatter.s[j]) / in.scatter.within_diag[j];
    CHECK(st.q()[j] == doctest::Approx(expect).epsilon(1e-13));
  }
}

TEST_CASE("every single coordinate update is non-decreasing in the step-2 objective") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Instance in = data_instance(4, 6, 2, seed);
    const Matrix Wd = in.W.materialize();
    const Vector v0 = initial_vector(in.scatter, in.W);
    SolverConfig cfg;
    cfg.lambda = 0.2 * lambda_max(in.scatter, v0);
    for (const WithinMatrix& W : {in.W, WithinMatrix::dense(Wd)}) {
      SolverState st(W, v0);
      st.begin_step(in.scatter);
      const Vector b = st.b();
      double prev = oracle::step2_objective(b, Wd, in.scatter.s, cfg.lambda, st.q());
      int violations = 0, updates = 0;
      UpdateObserver obs = [&](Index, const Vector& q) {
        const double f = oracle::step2_objective(b, Wd, in.scatter.s, cfg.lambda, q);
        if (f < prev - 1e-10 * std::abs(prev)) ++violations;
        prev = f;
        ++updates;
      };
      SplitMix64 rng(seed);
      for (int sweep = 0; sweep < 5; ++sweep) coordinate_pass(st, in.scatter, W, cfg, rng, &obs);
      CHECK(updates == 30);
      CHECK(violations == 0);
    }
  }
}

TEST_CASE("lambda = 0 returns the unpenalized Fisher direction") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Instance in = data_instance(8, 12, 2, seed);
    SolverConfig cfg;
    cfg.lambda = 0;
    const SolveResult r = solve_discriminant(in.scatter, in.W, cfg);
    CHECK(r.diagnostics.converged);
    CHECK((r.v - initial_vector(in.scatter, in.W)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("lambda just above lambda_max gives v = 0") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Instance in = data_instance(6, 15, 2 + static_cast<int>(seed % 3), seed);
    SolverConfig cfg;
    cfg.lambda = 1.001 * lambda_max(in.scatter, initial_vector(in.scatter, in.W));
    cfg.seed = seed;
    const SolveResult r = solve_discriminant(in.scatter, in.W, cfg);
    CHECK(r.v.isZero(0.0));
    CHECK(r.diagnostics.converged);
    CHECK(r.diagnostics.outer_iterations == 1);
  }
}

TEST_CASE("lambda at half of lambda_max keeps a non-zero iterate without the zero fallback") {
  int nonzero = 0, fallback_nonzero = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset d = testutil::centered(testutil::random_dataset(10, 15, 2 + static_cast<int>(seed % 3), seed, 0.8, 5));
    const ScatterSet s = compute_scatter(d);
    const WithinMatrix W = shrunken_within(s).W;
    SolverConfig cfg;
    cfg.lambda = 0.5 * lambda_max(s, initial_vector(s, W));
    cfg.seed = seed;
    cfg.zero_fallback = false;
    nonzero += !solve_discriminant(s, W, cfg).v.isZero(0.0);
    cfg.zero_fallback = true;
    const SolveResult f = solve_discriminant(s, W, cfg);
    CHECK(f.diagnostics.zero_solution == f.v.isZero(0.0));
    if (f.diagnostics.zero_by_objective) CHECK(f.diagnostics.penalized_objective == 0.0);
    fallback_nonzero += !f.v.isZero(0.0);
  }
  CHECK(nonzero == 20);
  MESSAGE("non-zero with zero fallback: " << fallback_nonzero << " of 20");
}

TEST_CASE("rank-one identity problem: solver objective matches brute force") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Vector l = random_unit(4, seed);
    const Instance in = rank_one(l);
    const double lmax = lambda_max(in.scatter, initial_vector(in.scatter, in.W));
    for (double frac : {0.05, 0.2, 0.4}) {
      SolverConfig cfg;
      cfg.lambda = frac * lmax;
      cfg.seed = seed;
      const SolveResult r = solve_discriminant(in.scatter, in.W, cfg);
      const double got = penalized_objective(in.scatter, r.v, cfg.lambda);
      // Brute force over the signed unit ball, with coordinates sorted by |l|.
      const SortedEigen se = sort_eigen(1.0, l);
      const double best = oracle::fj_bruteforce(1.0, se.l, cfg.lambda, 4, seed);
      CHECK(got == doctest::Approx(best).epsilon(1e-3).scale(1.0));
    }
  }
}

TEST_CASE("solves are deterministic given the seed") {
  const Instance in = data_instance(7, 40, 3, 2);
  SolverConfig cfg;
  cfg.lambda = 0.2 * lambda_max(in.scatter, initial_vector(in.scatter, in.W));
  cfg.seed = 99;
  const SolveResult a = solve_discriminant(in.scatter, in.W, cfg);
  const SolveResult b = solve_discriminant(in.scatter, in.W, cfg);
  CHECK(a.v == b.v);
  CHECK(a.diagnostics.objective_trace == b.diagnostics.objective_trace);
  CHECK(a.diagnostics.total_sweeps == b.diagnostics.total_sweeps);
}

TEST_CASE("certificates on converged solves across storages") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const Instance in = data_instance(10, 30, 2 + static_cast<int>(seed % 2), seed);
    for (const WithinMatrix& W : {in.W, WithinMatrix::dense(in.W.materialize()), diagonal_within(in.scatter)}) {
      for (double frac : {0.0, 0.1, 0.3}) {
        SolverConfig cfg;
        cfg.lambda = frac * lambda_max(in.scatter, initial_vector(in.scatter, W));
        cfg.seed = seed;
        cfg.cache_check_every = 2;
        cfg.dense_limit = 0;  // keep the factored storage
        const SolveResult r = solve_discriminant(in.scatter, W, cfg);
        if (!r.diagnostics.converged) continue;
        const CertificateCheck c = check_certificates(r.diagnostics);
        CHECK(c.monotone);
        CHECK(c.kkt);
        CHECK(c.normalized);
        CHECK(r.diagnostics.max_cache_drift < 1e-8);
        for (const auto& trace : r.diagnostics.objective_trace)
          for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] >= trace[k - 1] - 1e-10 * std::abs(trace[k]));
      }
    }
  }
}

TEST_CASE("kkt residual definition") {
  Vector b(3), Wq(3), q(3), s(3);
  b << 1, 1, 1;
  Wq << 0, 0.5, 0.2;
  q << 0.5, 0, -1;
  s << 1, 1, 1;
  // grad = 2b - 2Wq = (2, 1, 1.6); lambda = 1
  // j0: |2 - 1| = 1, j1: max(0, 1 - 1) = 0, j2: |1.6 + 1| = 2.6
  CHECK(kkt_residual(b, Wq, q, s, 1.0) == doctest::Approx(2.6));
}

TEST_CASE("zero within-variance features are held at zero") {
  Dataset d = testutil::random_dataset(6, 8, 2, 5, 1.0);
  Matrix X = d.X();
  X.col(2).setConstant(1.5);
  d = testutil::centered(d.with_features(X));
  const ScatterSet s = compute_scatter(d);
  const WithinMatrix W = shrunken_within(s).W;
  SolverConfig cfg;
  cfg.lambda = 0.1 * lambda_max(s, initial_vector(s, W));
  const SolveResult r = solve_discriminant(s, W, cfg);
  CHECK(r.v[2] == 0.0);
  CHECK(!r.v.isZero(0.0));
}

TEST_CASE("diagonal mode selects a prefix of the |t| ordering") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Dataset d = testutil::centered(testutil::random_dataset(10, 25, 2, seed, 0.4, 10));
    const ScatterSet s = compute_scatter(d);
    const WithinMatrix D = diagonal_within(s);
    const double lmax = lambda_max(s, initial_vector(s, D));
    const Vector t = oracle::t_statistics(d.X(), d.labels());
    for (double frac : {0.05, 0.15, 0.3}) {
      SolverConfig cfg;
      cfg.lambda = frac * lmax;
      cfg.diagonal_mode = true;
      const SolveResult r = solve_discriminant(s, D, cfg);
      const IndexList supp = support_of(r.v);
      if (supp.empty()) continue;
      double min_in = 1e300, max_out = 0;
      for (Index j = 0; j < 25; ++j) {
        const bool in = std::binary_search(supp.begin(), supp.end(), j);
        if (in) min_in = std::min(min_in, std::abs(t[j]));
        else max_out = std::max(max_out, std::abs(t[j]));
      }
      CHECK(min_in > max_out);
    }
  }
}

TEST_CASE("warm start from a previous solution") {
  const Instance in = data_instance(8, 20, 2, 6);
  SolverConfig cfg;
  cfg.lambda = 0.15 * lambda_max(in.scatter, initial_vector(in.scatter, in.W));
  const SolveResult cold = solve_discriminant(in.scatter, in.W, cfg);
  const Vector start = 3.0 * cold.v;
  const SolveResult warm = solve_discriminant(in.scatter, in.W, cfg, &start);
  CHECK(warm.diagnostics.converged);
  CHECK(warm.diagnostics.outer_iterations <= 2);
  CHECK((warm.v - cold.v).cwiseAbs().maxCoeff() < 1e-5);
}
