#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sflda/clustering.hpp"
#include "sflda/common.hpp"
#include "sflda/dataset.hpp"
#include "sflda/model.hpp"
#include "sflda/shrinkage.hpp"
#include "sflda/solver.hpp"

namespace sflda {

enum class LambdaRule { Fixed, Fraction, CrossValidated };
enum class Strategy { AllGroupsSequential, MergeSequential };
enum class CVRule { OneSE, Min };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

struct CVOptions {
  int folds = 5;
  int grid_size = 30;
  std::uint64_t seed = 0;
  CVRule rule = CVRule::OneSE;
  unsigned threads = 0;
};

struct FitConfig {
  SolverConfig solver;  // solver.lambda is the penalty under LambdaRule::Fixed
  LambdaRule lambda_rule = LambdaRule::Fixed;
  double lambda_fraction = 0.5;  // LambdaRule::Fraction: lambda = fraction * lambda_max of each step
  ShrinkageOptions shrinkage;
  bool diagonal_mode = false;  // diag(W) in place of W~
  int n_vectors = 1;
  bool use_clustering = false;
  ClusterOptions clustering;
  Strategy strategy = Strategy::AllGroupsSequential;
  CVOptions cv;

  void validate(int g) const;
};

struct StepReport {
  double lambda = 0.0;
  double lambda_max = 0.0;
  Index working_features = 0;  // features (or clusters) the step was fit on
  std::vector<double> tau;
  SolveDiagnostics diagnostics;
  std::optional<int> clusters;
};

struct CVResult {
  std::vector<double> grid;  // ascending
  Matrix fold_errors;        // folds x grid, rates in [0, 1]
  Vector mean_error;
  Vector se;
  double chosen_lambda = 0.0;
  Index chosen_index = 0;
  double lambda_max = 0.0;
  int nonconverged = 0;
};

struct FitReport {
  DiscriminantModel model;
  std::vector<StepReport> steps;
  std::vector<std::string> warnings;
  std::optional<CVResult> cv;
  bool converged = true;
};

// Stratified fold ids (0..folds-1) per row; depends only on (seed, labels).
// Throws ValidationError when a training part would keep fewer than two
// samples of some group.
std::vector<int> stratified_folds(const std::vector<int>& labels, int g, int folds, std::uint64_t seed);

// Sequential discriminant vectors: fit, drop the selected (original)
// features, refit on the rest. Features are centered with the training
// means; an optional clustering step replaces the working features by
// cluster averages at every step.
FitReport fit(const Dataset& data, const FitConfig& config);

// k-fold CV over a linear grid on [0, lambda_max] (lambda_max from the
// first step on the full data). Each fold solves the grid in descending
// order with warm starts.
CVResult cross_validate(const Dataset& data, const FitConfig& config);

struct Prediction {
  std::vector<int> labels;
  Matrix scores;  // n x d
};

// Nearest centroid in score space; ties go to the lowest group index; an
// all-zero model predicts the majority training class.
Prediction predict(const DiscriminantModel& model, const Matrix& X);

struct Metrics {
  double error_percent = 0.0;
  Index n_features = 0;
  std::optional<Index> correct_features;
  Index n_test = 0;
};

Metrics evaluate(const DiscriminantModel& model, const Dataset& test,
                 const std::optional<IndexList>& truth_support = std::nullopt);

}  // namespace sflda
