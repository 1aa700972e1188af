#include "sflda/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace sflda {

std::string to_string(CovarianceStructure s) {
  switch (s) {
    case CovarianceStructure::Diagonal:
      return "diagonal";
    case CovarianceStructure::BlockNetwork:
      return "block_network";
    case CovarianceStructure::External:
      return "external";
  }
  return "?";
}

CovarianceStructure parse_structure(const std::string& name) {
  if (name == "diagonal") return CovarianceStructure::Diagonal;
  if (name == "block_network" || name == "block") return CovarianceStructure::BlockNetwork;
  if (name == "external" || name == "external_matrix") return CovarianceStructure::External;
  throw ValidationError("unknown covariance structure '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (p < 1 || r < 0 || r > p) throw ValidationError("scenario: need 0 <= r <= p");
  if (n_train < 2 || n_test < 1) throw ValidationError("scenario: need n_train >= 2 and n_test >= 1 per group");
  if (!(shift_low >= 0.2 - 1e-12 && shift_high <= 0.6 + 1e-12 && shift_low <= shift_high))
    throw ValidationError("scenario: mean shifts must lie within [0.2, 0.6]");
  if (structure == CovarianceStructure::External && !external && external_path.empty())
    throw ValidationError("scenario: external structure needs a covariance matrix");
}

ScenarioSpec load_scenario_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path.string());
  ScenarioSpec spec;
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("scenario file line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "p") spec.p = std::stol(value);
      else if (key == "n_train") spec.n_train = std::stol(value);
      else if (key == "n_test") spec.n_test = std::stol(value);
      else if (key == "r") spec.r = std::stol(value);
      else if (key == "structure") spec.structure = parse_structure(value);
      else if (key == "external_path") spec.external_path = value;
      else if (key == "shift_low") spec.shift_low = std::stod(value);
      else if (key == "shift_high") spec.shift_high = std::stod(value);
      else if (key == "blocks") spec.blocks = std::stoi(value);
      else if (key == "cross_pairs") spec.cross_pairs = std::stoi(value);
      else if (key == "seed") spec.seed = std::stoull(value);
      else throw ValidationError("scenario file line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ValidationError*>(&e)) throw;
      throw ValidationError("scenario file line " + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  return spec;
}

Matrix equicorrelation(Index p, double rho) {
  Matrix m = Matrix::Constant(p, p, rho);
  m.diagonal().setOnes();
  return m;
}

Vector mean_ladder(Index r, double low, double high) {
  Vector v(r);
  for (Index k = 0; k < r; ++k) v[k] = r == 1 ? low : low + (high - low) * static_cast<double>(k) / static_cast<double>(r - 1);
  return v;
}

BlockNetworkCov make_block_network_cov(Index p, std::uint64_t seed, int blocks, int pairs) {
  constexpr Index kBlock = 4;
  if (blocks < 0) blocks = static_cast<int>(std::lround(40.0 * static_cast<double>(p) / 800.0));
  if (pairs < 0) pairs = blocks >= 2 ? std::max(1, static_cast<int>(std::lround(5.0 * static_cast<double>(p) / 800.0))) : 0;
  const Index slots = p / kBlock;
  if (blocks > slots) throw ValidationError("block placement infeasible: more blocks than free positions");
  const long max_pairs = static_cast<long>(blocks) * (blocks - 1) / 2;
  if (pairs > max_pairs) throw ValidationError("block placement infeasible: more cross pairs than block pairs");

  SplitMix64 rng(seed);
  BlockNetworkCov out;
  out.cov = Matrix::Identity(p, p);

  std::vector<Index> slot_ids(static_cast<std::size_t>(slots));
  for (Index k = 0; k < slots; ++k) slot_ids[static_cast<std::size_t>(k)] = k;
  for (int b = 0; b < blocks; ++b) {
    const auto pick = b + static_cast<Index>(rng.below(static_cast<std::uint64_t>(slots - b)));
    std::swap(slot_ids[static_cast<std::size_t>(b)], slot_ids[static_cast<std::size_t>(pick)]);
    out.block_starts.push_back(slot_ids[static_cast<std::size_t>(b)] * kBlock);
  }
  for (Index start : out.block_starts)
    for (Index a = 0; a < kBlock; ++a)
      for (Index c = 0; c < kBlock; ++c)
        if (a != c) out.cov(start + a, start + c) = 0.75;

  std::set<std::pair<int, int>> chosen;
  while (static_cast<int>(chosen.size()) < pairs) {
    int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(blocks)));
    int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(blocks)));
    if (a == c) continue;
    if (a > c) std::swap(a, c);
    if (!chosen.insert({a, c}).second) continue;
    out.cross_pairs.emplace_back(a, c);
    const Index sa = out.block_starts[static_cast<std::size_t>(a)];
    const Index sc = out.block_starts[static_cast<std::size_t>(c)];
    for (Index i = 0; i < kBlock; ++i)
      for (Index j = 0; j < kBlock; ++j) {
        out.cov(sa + i, sc + j) = 0.7;
        out.cov(sc + j, sa + i) = 0.7;
      }
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(out.cov);
  out.min_eigenvalue = es.eigenvalues().minCoeff();
  if (out.min_eigenvalue < 1e-6) {
    out.cov = es.eigenvectors() * es.eigenvalues().cwiseMax(1e-6).asDiagonal() * es.eigenvectors().transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
    out.repaired = true;
  }
  return out;
}

Scenario build_scenario(const ScenarioSpec& spec) {
  spec.validate();
  Scenario sc;
  sc.spec = spec;
  switch (spec.structure) {
    case CovarianceStructure::Diagonal:
      sc.cov = Matrix::Identity(spec.p, spec.p);
      break;
    case CovarianceStructure::BlockNetwork: {
      BlockNetworkCov bn = make_block_network_cov(spec.p, spec.seed, spec.blocks, spec.cross_pairs);
      sc.cov = std::move(bn.cov);
      sc.repaired = bn.repaired;
      break;
    }
    case CovarianceStructure::External:
      sc.cov = spec.external ? *spec.external : load_matrix_csv(spec.external_path);
      if (sc.cov.rows() != spec.p || sc.cov.cols() != spec.p)
        throw ValidationError("external covariance must be p x p");
      if (!sc.cov.isApprox(sc.cov.transpose(), 1e-12)) throw ValidationError("external covariance is not symmetric");
      break;
  }
  Eigen::LLT<Matrix> llt(sc.cov);
  if (llt.info() != Eigen::Success) throw ValidationError("covariance matrix is not positive definite");
  sc.factor = llt.matrixL();
  sc.mu2 = Vector::Zero(spec.p);
  sc.mu2.head(spec.r) = mean_ladder(spec.r, spec.shift_low, spec.shift_high);
  for (Index j = 0; j < spec.r; ++j) sc.truth_support.push_back(j);
  return sc;
}

double NormalSampler::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * rng_.uniform() - 1.0;
    v = 2.0 * rng_.uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

namespace {

Dataset draw(const Scenario& sc, Index per_group, NormalSampler& normal) {
  const Index p = sc.spec.p;
  Matrix Z(2 * per_group, p);
  for (Index i = 0; i < Z.rows(); ++i)
    for (Index j = 0; j < p; ++j) Z(i, j) = normal();
  Matrix X = Z * sc.factor.transpose();
  std::vector<int> labels(static_cast<std::size_t>(2 * per_group));
  for (Index i = per_group; i < 2 * per_group; ++i) {
    X.row(i) += sc.mu2.transpose();
    labels[static_cast<std::size_t>(i)] = 1;
  }
  return Dataset::create(std::move(X), std::move(labels), {}, {"0", "1"});
}

}  // namespace

ScenarioSample sample_scenario(const Scenario& scenario, std::uint64_t replicate) {
  NormalSampler normal(derive_seed(scenario.spec.seed, replicate));
  ScenarioSample out{draw(scenario, scenario.spec.n_train, normal), draw(scenario, scenario.spec.n_test, normal),
                     scenario.truth_support};
  return out;
}

ScenarioSample sample_scenario(const ScenarioSpec& spec, std::uint64_t replicate) {
  return sample_scenario(build_scenario(spec), replicate);
}

}  // namespace sflda
