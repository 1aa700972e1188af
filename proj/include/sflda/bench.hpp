#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sflda/pipeline.hpp"
#include "sflda/simulate.hpp"

namespace sflda {

struct BenchOptions {
  ScenarioSpec scenario;
  std::string scenario_name;  // label for the output table; defaults to the structure name
  int replicates = 25;
  FitConfig fit;  // shared by both methods; diagonal_mode is set per method
  unsigned threads = 0;
};

struct MethodSummary {
  std::string method;  // "FLDA" or "FLDAdiag"
  std::string scenario;
  std::vector<double> errors;  // percent, per replicate
  std::vector<double> features;
  std::vector<double> correct;
  double error_mean = 0, error_sd = 0;
  double features_mean = 0, features_sd = 0;
  double correct_mean = 0, correct_sd = 0;
  int nonconverged = 0;     // final fits that hit the iteration cap
  int cv_nonconverged = 0;  // cross-validation fits that did
};

struct BenchResult {
  std::vector<MethodSummary> rows;  // FLDA first, then FLDAdiag
  bool covariance_repaired = false;
};

// Fits both the shrunken-covariance method and the diagonal baseline on each
// replicate (replicates run in parallel) and summarizes test error,
// selected features and correctly selected features.
BenchResult run_bench(const BenchOptions& options);

// CSV: method,scenario,error_mean,error_sd,features_mean,features_sd,correct_mean,correct_sd
void write_bench_csv(const BenchResult& result, const std::filesystem::path& path);
std::string bench_csv(const BenchResult& result);

}  // namespace sflda
