#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sflda/common.hpp"
#include "sflda/dataset.hpp"
#include "sflda/rng.hpp"

namespace sflda {

enum class CovarianceStructure { Diagonal, BlockNetwork, External };

std::string to_string(CovarianceStructure s);
CovarianceStructure parse_structure(const std::string& name);

// Two-group Gaussian scenario: mu_1 = 0, mu_2 non-zero on the first r
// features (an equispaced ladder over [shift_low, shift_high]), common
// within-group covariance.
struct ScenarioSpec {
  Index p = 800;
  Index n_train = 100;  // per group
  Index n_test = 500;   // per group
  Index r = 80;
  CovarianceStructure structure = CovarianceStructure::Diagonal;
  std::filesystem::path external_path;   // for External when `external` is empty
  std::optional<Matrix> external;
  double shift_low = 0.2;
  double shift_high = 0.6;
  int blocks = -1;       // BlockNetwork: -1 scales 40 blocks per 800 features
  int cross_pairs = -1;  // BlockNetwork: -1 scales 5 pairs per 800 features
  std::uint64_t seed = 1;  // fixes the covariance; replicates only change the noise

  void validate() const;
};

// Reads `key = value` lines ('#' starts a comment). Keys match the field
// names above; `structure` takes diagonal | block_network | external and
// `external_path` a CSV matrix path.
ScenarioSpec load_scenario_spec(const std::filesystem::path& path);

struct BlockNetworkCov {
  Matrix cov;
  std::vector<Index> block_starts;              // first feature of each 4-block
  std::vector<std::pair<int, int>> cross_pairs;  // indices into block_starts
  bool repaired = false;                        // eigenvalue floor applied
  double min_eigenvalue = 0.0;                  // before repair
};

// Identity plus `blocks` non-overlapping 4 x 4 blocks (off-diagonal 0.75) at
// random aligned positions, and `pairs` random block pairs whose cross
// entries are 0.7. Projected onto eigenvalues >= 1e-6 when indefinite.
BlockNetworkCov make_block_network_cov(Index p, std::uint64_t seed, int blocks = -1, int pairs = -1);

// Equicorrelation matrix: 1 on the diagonal, rho elsewhere.
Matrix equicorrelation(Index p, double rho);

// r values equispaced over [low, high] (a single value sits at low).
Vector mean_ladder(Index r, double low, double high);

struct Scenario {
  ScenarioSpec spec;
  Matrix cov;
  Matrix factor;  // cov = factor * factor^T
  Vector mu2;
  IndexList truth_support;
  bool repaired = false;
};

Scenario build_scenario(const ScenarioSpec& spec);

struct ScenarioSample {
  Dataset train;
  Dataset test;
  IndexList truth_support;
};

// Draws one replicate; the stream depends only on (spec.seed, replicate).
ScenarioSample sample_scenario(const Scenario& scenario, std::uint64_t replicate = 0);
ScenarioSample sample_scenario(const ScenarioSpec& spec, std::uint64_t replicate = 0);

// Standard normal draws (Marsaglia polar), reproducible across platforms.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}
  double operator()();

 private:
  SplitMix64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sflda
