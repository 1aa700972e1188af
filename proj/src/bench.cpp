#include "sflda/bench.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sflda/parallel.hpp"

namespace sflda {

namespace {

void summarize(const std::vector<double>& x, double& mean, double& sd) {
  mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0;
  for (double v : x) ss += (v - mean) * (v - mean);
  sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
}

}  // namespace

BenchResult run_bench(const BenchOptions& options) {
  if (options.replicates < 1) throw ValidationError("bench needs at least one replicate");
  const Scenario scenario = build_scenario(options.scenario);
  const std::string name = options.scenario_name.empty() ? to_string(options.scenario.structure) : options.scenario_name;
  const auto R = static_cast<std::size_t>(options.replicates);

  BenchResult out;
  out.covariance_repaired = scenario.repaired;
  out.rows.resize(2);
  out.rows[0].method = "FLDA";
  out.rows[1].method = "FLDAdiag";
  for (auto& row : out.rows) {
    row.scenario = name;
    row.errors.assign(R, 0.0);
    row.features.assign(R, 0.0);
    row.correct.assign(R, 0.0);
  }
  std::vector<int> nonconv(2 * R, 0), cv_nonconv(2 * R, 0);

  parallel_for(R, options.threads, [&](std::size_t r) {
    const ScenarioSample sample = sample_scenario(scenario, r);
    for (int method = 0; method < 2; ++method) {
      FitConfig cfg = options.fit;
      cfg.diagonal_mode = method == 1;
      cfg.cv.threads = 1;
      cfg.clustering.threads = 1;
      cfg.cv.seed = derive_seed(options.fit.cv.seed, r);
      cfg.solver.seed = derive_seed(options.fit.solver.seed, r);
      const FitReport rep = fit(sample.train, cfg);
      const Metrics m = evaluate(rep.model, sample.test, sample.truth_support);
      auto& row = out.rows[static_cast<std::size_t>(method)];
      row.errors[r] = m.error_percent;
      row.features[r] = static_cast<double>(m.n_features);
      row.correct[r] = static_cast<double>(*m.correct_features);
      nonconv[2 * r + static_cast<std::size_t>(method)] = rep.converged ? 0 : 1;
      cv_nonconv[2 * r + static_cast<std::size_t>(method)] = rep.cv ? rep.cv->nonconverged : 0;
    }
  });

  for (int method = 0; method < 2; ++method) {
    auto& row = out.rows[static_cast<std::size_t>(method)];
    summarize(row.errors, row.error_mean, row.error_sd);
    summarize(row.features, row.features_mean, row.features_sd);
    summarize(row.correct, row.correct_mean, row.correct_sd);
    for (std::size_t r = 0; r < R; ++r) {
      row.nonconverged += nonconv[2 * r + static_cast<std::size_t>(method)];
      row.cv_nonconverged += cv_nonconv[2 * r + static_cast<std::size_t>(method)];
    }
  }
  return out;
}

std::string bench_csv(const BenchResult& result) {
  std::ostringstream os;
  os << "method,scenario,error_mean,error_sd,features_mean,features_sd,correct_mean,correct_sd\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : result.rows)
    os << r.method << ',' << r.scenario << ',' << r.error_mean << ',' << r.error_sd << ',' << r.features_mean << ','
       << r.features_sd << ',' << r.correct_mean << ',' << r.correct_sd << '\n';
  return os.str();
}

void write_bench_csv(const BenchResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << bench_csv(result);
}

}  // namespace sflda
