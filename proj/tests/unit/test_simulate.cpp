#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sflda/simulate.hpp"
#include "sflda/theory.hpp"

using namespace sflda;

TEST_CASE("structure names") {
  CHECK(parse_structure("diagonal") == CovarianceStructure::Diagonal);
  CHECK(parse_structure("block_network") == CovarianceStructure::BlockNetwork);
  CHECK(parse_structure("external_matrix") == CovarianceStructure::External);
  CHECK(to_string(CovarianceStructure::BlockNetwork) == "block_network");
  CHECK_THROWS_AS(parse_structure("banded"), ValidationError);
}

TEST_CASE("mean ladder") {
  const Vector m = mean_ladder(5, 0.2, 0.6);
  CHECK(m[0] == doctest::Approx(0.2));
  CHECK(m[2] == doctest::Approx(0.4));
  CHECK(m[4] == doctest::Approx(0.6));
  CHECK(mean_ladder(1, 0.2, 0.6)[0] == doctest::Approx(0.2));
  CHECK(mean_ladder(0, 0.2, 0.6).size() == 0);
}

TEST_CASE("block network: scaled geometry at p = 160") {
  const BlockNetworkCov b = make_block_network_cov(160, 3, 8, 1);
  CHECK(b.block_starts.size() == 8);
  CHECK(b.cross_pairs.size() == 1);
  CHECK(!b.repaired);
  Index count = 0;
  for (Index i = 0; i < 160; ++i)
    for (Index j = 0; j < 160; ++j)
      if (i != j && b.cov(i, j) == 0.75) ++count;
  CHECK(count == 96);
  Index cross = 0;
  for (Index i = 0; i < 160; ++i)
    for (Index j = 0; j < 160; ++j)
      if (b.cov(i, j) == 0.7) ++cross;
  CHECK(cross == 32);
  CHECK(b.cov.diagonal().isOnes());
  CHECK(b.cov == b.cov.transpose());
  for (Index s : b.block_starts) CHECK(s % 4 == 0);
  // Default scaling for p = 160 gives the same counts.
  const BlockNetworkCov d = make_block_network_cov(160, 3);
  CHECK(d.block_starts.size() == 8);
  CHECK(d.cross_pairs.size() == 1);
}

TEST_CASE("block network: zero blocks give the identity") {
  const BlockNetworkCov b = make_block_network_cov(50, 1, 0, 0);
  CHECK(b.cov == Matrix::Identity(50, 50));
  CHECK_THROWS_AS(make_block_network_cov(8, 1, 3, 0), ValidationError);
  CHECK_THROWS_AS(make_block_network_cov(40, 1, 2, 3), ValidationError);
}

TEST_CASE("block network: full size is symmetric positive definite") {
  const BlockNetworkCov b = make_block_network_cov(800, 1);
  CHECK(b.block_starts.size() == 40);
  CHECK(b.cross_pairs.size() == 5);
  CHECK((b.cov - b.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(b.cov);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  if (!b.repaired) CHECK(b.min_eigenvalue > 0.0);
}

TEST_CASE("forced repair floors the eigenvalues") {
  // Two cross pairs over three blocks form a chain whose block-constant
  // direction has eigenvalue 3.25 - 2.8 sqrt(2) < 0.
  const BlockNetworkCov b = make_block_network_cov(12, 2, 3, 2);
  Eigen::SelfAdjointEigenSolver<Matrix> es(b.cov);
  CHECK(b.repaired);
  CHECK(b.min_eigenvalue == doctest::Approx(3.25 - 2.8 * std::sqrt(2.0)));
  CHECK(es.eigenvalues().minCoeff() >= 1e-6 * (1 - 1e-9));
}

TEST_CASE("equicorrelation") {
  const Matrix E = equicorrelation(4, 0.3);
  CHECK(E(0, 0) == 1.0);
  CHECK(E(1, 3) == 0.3);
}

TEST_CASE("null scenario: t-statistics are calibrated") {
  Index exceed = 0, total = 0;
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    ScenarioSpec spec;
    spec.p = 200;
    spec.r = 0;
    spec.n_train = 50;
    spec.n_test = 2;
    spec.seed = seed;
    const ScenarioSample s = sample_scenario(spec, 0);
    const Vector t = oracle::t_statistics(s.train.X(), s.train.labels());
    for (Index j = 0; j < t.size(); ++j) exceed += std::abs(t[j]) > 1.96;
    total += t.size();
    worst = std::max(worst, t.cwiseAbs().maxCoeff());
  }
  const double rate = static_cast<double>(exceed) / static_cast<double>(total);
  // Two-sided 5% normal level; Student-t with 98 df sits at about 5.3%.
  CHECK(rate > 0.04);
  CHECK(rate < 0.066);
  // Bonferroni bound for 5000 null draws.
  CHECK(worst < 5.0);
}

TEST_CASE("large-sample group means follow the ladder") {
  ScenarioSpec spec;
  spec.p = 20;
  spec.r = 5;
  spec.n_train = 10000;
  spec.n_test = 2;
  spec.seed = 4;
  const ScenarioSample s = sample_scenario(spec, 0);
  const Vector ladder = mean_ladder(5, 0.2, 0.6);
  Vector mean = Vector::Zero(20);
  for (Index i = 0; i < s.train.n(); ++i)
    if (s.train.labels()[static_cast<std::size_t>(i)] == 1) mean += s.train.X().row(i).transpose();
  mean /= 10000.0;
  const double se = 1.0 / std::sqrt(10000.0);
  for (Index j = 0; j < 20; ++j) CHECK(std::abs(mean[j] - (j < 5 ? ladder[j] : 0.0)) < 3 * se);
  CHECK(s.truth_support == IndexList{0, 1, 2, 3, 4});
}

TEST_CASE("sampling is deterministic per seed and replicate") {
  ScenarioSpec spec;
  spec.p = 60;
  spec.r = 6;
  spec.n_train = 10;
  spec.n_test = 5;
  spec.structure = CovarianceStructure::BlockNetwork;
  const ScenarioSample a = sample_scenario(spec, 3);
  const ScenarioSample b = sample_scenario(spec, 3);
  CHECK(a.train.X() == b.train.X());
  CHECK(a.test.X() == b.test.X());
  CHECK(a.train.X() != sample_scenario(spec, 4).train.X());
  // The covariance is fixed by the scenario seed, not the replicate.
  CHECK(build_scenario(spec).cov == build_scenario(spec).cov);
  CHECK(a.train.n() == 20);
  CHECK(a.test.n() == 10);
  CHECK(a.train.group_names() == std::vector<std::string>{"0", "1"});
}

TEST_CASE("sample covariance converges to the block covariance") {
  ScenarioSpec spec;
  spec.p = 40;
  spec.r = 4;
  spec.n_train = 50000;
  spec.n_test = 2;
  spec.structure = CovarianceStructure::BlockNetwork;
  spec.seed = 6;
  const Scenario sc = build_scenario(spec);
  const ScenarioSample s = sample_scenario(sc, 0);
  const Matrix W = oracle::within_scatter(s.train.X(), s.train.labels(), 2) / static_cast<double>(s.train.n() - 2);
  CHECK((W - sc.cov).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("external covariance") {
  ScenarioSpec spec;
  spec.p = 3;
  spec.r = 1;
  spec.n_train = 5;
  spec.n_test = 5;
  spec.structure = CovarianceStructure::External;
  Matrix bad(3, 3);
  bad << 1, 2, 0, 2, 1, 0, 0, 0, 1;
  spec.external = bad;
  CHECK_THROWS_AS(build_scenario(spec), ValidationError);
  Matrix asym = Matrix::Identity(3, 3);
  asym(0, 1) = 0.1;
  spec.external = asym;
  CHECK_THROWS_AS(build_scenario(spec), ValidationError);
  spec.external = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(build_scenario(spec), ValidationError);
  spec.external.reset();
  testutil::TempDir dir("ext");
  {
    std::ofstream f(dir / "cov.csv");
    f << "2,0.5,0\n0.5,1,0\n0,0,1\n";
  }
  spec.external_path = dir / "cov.csv";
  const Scenario sc = build_scenario(spec);
  CHECK(sc.cov(0, 1) == 0.5);
  CHECK((sc.factor * sc.factor.transpose() - sc.cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scenario spec files") {
  testutil::TempDir dir("spec");
  {
    std::ofstream f(dir / "s.cfg");
    f << "# block scenario\np = 120\nr = 12  # shifted\nstructure = block_network\nn_train = 30\n\nseed = 9\n";
  }
  const ScenarioSpec s = load_scenario_spec(dir / "s.cfg");
  CHECK(s.p == 120);
  CHECK(s.r == 12);
  CHECK(s.structure == CovarianceStructure::BlockNetwork);
  CHECK(s.n_train == 30);
  CHECK(s.n_test == 500);
  CHECK(s.seed == 9);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "p = 10\ncolour = red\n";
  }
  CHECK_THROWS_AS(load_scenario_spec(dir / "bad.cfg"), ValidationError);
  {
    std::ofstream f(dir / "bad2.cfg");
    f << "p = ten\n";
  }
  CHECK_THROWS_AS(load_scenario_spec(dir / "bad2.cfg"), ValidationError);
  CHECK_THROWS_AS(load_scenario_spec(dir / "missing.cfg"), ValidationError);
}

TEST_CASE("spec validation") {
  ScenarioSpec s;
  s.r = 900;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.r = 80;
  s.shift_high = 0.9;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("correlation benefit threshold on the scenario ladder") {
  // Equal shifts on r of p features: the Cochran threshold is (r - 1) / (p - 1).
  Vector d = Vector::Zero(800);
  d.head(80) = mean_ladder(80, 0.4, 0.4);
  CHECK(cochran_threshold(d) == doctest::Approx(79.0 / 799.0));
}
