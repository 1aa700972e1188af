#include "sflda/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sflda/bench.hpp"
#include "sflda/parallel.hpp"
#include "sflda/pipeline.hpp"
#include "sflda/simulate.hpp"
#include "sflda/theory.hpp"

namespace sflda::cli {

using json = nlohmann::ordered_json;

namespace {

struct CommonOpts {
  std::string format = "json";
  std::string report;
  std::string log_level = "warn";
  unsigned threads = 0;
};

struct SolverOpts {
  double eps = 1e-6;
  int max_outer = 30;
  int max_inner = 100;
  std::uint64_t seed = 0;
  bool no_zero_fallback = false;
};

struct FitOpts {
  double lambda = 0.0;
  double fraction = 0.5;
  bool cv = false;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* fraction_opt = nullptr;
  int folds = 5;
  int grid = 30;
  std::uint64_t cv_seed = 0;
  std::string cv_rule = "1se";
  std::string tau = "auto";
  bool diagonal = false;
  int vectors = 1;
  bool cluster = false;
  int clusters = 0;
  int restarts = 100;
  std::uint64_t cluster_seed = 0;
  std::string strategy = "all-groups-sequential";
  bool allow_nonconverged = false;
};

struct ScenarioOpts {
  std::string scenario = "diagonal";
  std::string spec;
  std::string cov;
  Index p = 800;
  Index r = -1;
  Index n_train = 100;
  Index n_test = 500;
  int blocks = -1;
  int cross_pairs = -1;
  double shift_low = 0.2;
  double shift_high = 0.6;
  std::uint64_t seed = 1;
  std::map<std::string, CLI::Option*> given;
};

void add_common(CLI::App* app, CommonOpts& c) {
  app->add_option("--format", c.format, "Output view on stdout")->check(CLI::IsMember({"json", "text"}));
  app->add_option("--report", c.report, "Also write the JSON document to this file");
  app->add_option("--log-level", c.log_level, "quiet | warn | info")->check(CLI::IsMember({"quiet", "warn", "info"}));
  app->add_option("--threads", c.threads, "Worker threads (default: SPARSE_FLDA_THREADS or all cores)");
}

void add_solver(CLI::App* app, SolverOpts& s) {
  app->add_option("--eps", s.eps, "Convergence tolerance")->check(CLI::PositiveNumber);
  app->add_option("--max-outer", s.max_outer, "Maximum outer iterations")->check(CLI::PositiveNumber);
  app->add_option("--max-inner", s.max_inner, "Maximum coordinate sweeps per outer iteration")->check(CLI::PositiveNumber);
  app->add_option("--seed", s.seed, "Solver seed (coordinate orders)");
  app->add_flag("--no-zero-fallback", s.no_zero_fallback, "Keep a final iterate with negative penalized objective");
}

void add_fit(CLI::App* app, FitOpts& f, bool with_lambda) {
  if (with_lambda) {
    f.lambda_opt = app->add_option("--lambda", f.lambda, "Fixed penalty")->check(CLI::NonNegativeNumber);
    f.fraction_opt = app->add_option("--lambda-fraction", f.fraction, "Penalty as a fraction of each step's lambda_max")
                         ->check(CLI::NonNegativeNumber);
    auto* cv = app->add_flag("--cv", f.cv, "Choose the penalty by cross-validation (default)");
    f.lambda_opt->excludes(f.fraction_opt)->excludes(cv);
    f.fraction_opt->excludes(cv);
  }
  app->add_option("--folds", f.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  app->add_option("--grid", f.grid, "Cross-validation grid size")->check(CLI::Range(2, 100000));
  app->add_option("--cv-seed", f.cv_seed, "Fold assignment seed");
  app->add_option("--cv-rule", f.cv_rule, "1se | min")->check(CLI::IsMember({"1se", "min"}));
  app->add_option("--tau", f.tau, "Shrinkage intensity: auto or a value in [0, 1]");
  app->add_flag("--diagonal", f.diagonal, "Use diag(W) as the within-group operator");
  app->add_option("--vectors", f.vectors, "Number of discriminant vectors")->check(CLI::PositiveNumber);
  app->add_flag("--cluster", f.cluster, "Pre-cluster features into averaged meta-features");
  app->add_option("--clusters", f.clusters, "Cluster count (implies --cluster; default max(2, ceil(p/100)))")
      ->check(CLI::Range(2, 1 << 30));
  app->add_option("--restarts", f.restarts, "k-means restarts")->check(CLI::PositiveNumber);
  app->add_option("--cluster-seed", f.cluster_seed, "k-means seed");
  app->add_option("--strategy", f.strategy, "all-groups-sequential | merge-sequential")
      ->check(CLI::IsMember({"all-groups-sequential", "merge-sequential"}));
  app->add_flag("--allow-nonconverged", f.allow_nonconverged, "Do not fail when a solve hits its iteration limit");
}

void add_scenario(CLI::App* app, ScenarioOpts& s) {
  s.given["scenario"] = app->add_option("--scenario", s.scenario, "diagonal | block_network | external")
                            ->check(CLI::IsMember({"diagonal", "block_network", "block", "external", "external_matrix"}));
  app->add_option("--spec", s.spec, "Key-value scenario file; explicit flags override it")->check(CLI::ExistingFile);
  s.given["external_path"] = app->add_option("--cov", s.cov, "Covariance CSV for the external scenario")->check(CLI::ExistingFile);
  s.given["p"] = app->add_option("--p", s.p, "Number of features")->check(CLI::PositiveNumber);
  s.given["r"] = app->add_option("--r", s.r, "Shifted features (default p / 10)")->check(CLI::NonNegativeNumber);
  s.given["n_train"] = app->add_option("--n-train", s.n_train, "Training samples per group")->check(CLI::PositiveNumber);
  s.given["n_test"] = app->add_option("--n-test", s.n_test, "Test samples per group")->check(CLI::PositiveNumber);
  s.given["blocks"] = app->add_option("--blocks", s.blocks, "Correlated 4-blocks (default scales with p)");
  s.given["cross_pairs"] = app->add_option("--cross-pairs", s.cross_pairs, "Cross-correlated block pairs");
  s.given["shift_low"] = app->add_option("--shift-low", s.shift_low, "Smallest mean shift");
  s.given["shift_high"] = app->add_option("--shift-high", s.shift_high, "Largest mean shift");
  s.given["seed"] = app->add_option("--scenario-seed", s.seed, "Scenario seed (covariance and noise)");
}

ScenarioSpec make_scenario(const ScenarioOpts& s) {
  ScenarioSpec spec;
  if (!s.spec.empty()) spec = load_scenario_spec(s.spec);
  auto given = [&](const char* k) { return s.given.at(k)->count() > 0; };
  if (s.spec.empty() || given("scenario")) spec.structure = parse_structure(s.scenario);
  if (s.spec.empty() || given("p")) spec.p = s.p;
  if (given("r")) spec.r = s.r;
  else if (s.spec.empty()) spec.r = std::max<Index>(1, spec.p / 10);
  if (s.spec.empty() || given("n_train")) spec.n_train = s.n_train;
  if (s.spec.empty() || given("n_test")) spec.n_test = s.n_test;
  if (s.spec.empty() || given("blocks")) spec.blocks = s.blocks;
  if (s.spec.empty() || given("cross_pairs")) spec.cross_pairs = s.cross_pairs;
  if (s.spec.empty() || given("shift_low")) spec.shift_low = s.shift_low;
  if (s.spec.empty() || given("shift_high")) spec.shift_high = s.shift_high;
  const bool seed_given = given("seed") || (s.given.count("seed_alias") && s.given.at("seed_alias")->count() > 0);
  if (s.spec.empty() || seed_given) spec.seed = s.seed;
  if (given("external_path")) spec.external_path = s.cov;
  spec.validate();
  return spec;
}

json scenario_json(const ScenarioSpec& s) {
  return json{{"structure", to_string(s.structure)},
              {"p", s.p},
              {"r", s.r},
              {"n_train", s.n_train},
              {"n_test", s.n_test},
              {"blocks", s.blocks},
              {"cross_pairs", s.cross_pairs},
              {"shift_low", s.shift_low},
              {"shift_high", s.shift_high},
              {"mean_rule", "equispaced ladder"},
              {"external_path", s.external_path.string()},
              {"seed", s.seed}};
}

FitConfig make_fit_config(const FitOpts& f, const SolverOpts& s, unsigned threads) {
  FitConfig c;
  c.solver.eps = s.eps;
  c.solver.max_outer = s.max_outer;
  c.solver.max_inner = s.max_inner;
  c.solver.seed = s.seed;
  c.solver.zero_fallback = !s.no_zero_fallback;
  if (f.lambda_opt && f.lambda_opt->count()) {
    c.lambda_rule = LambdaRule::Fixed;
    c.solver.lambda = f.lambda;
  } else if (f.fraction_opt && f.fraction_opt->count()) {
    c.lambda_rule = LambdaRule::Fraction;
    c.lambda_fraction = f.fraction;
  } else {
    c.lambda_rule = LambdaRule::CrossValidated;
  }
  c.cv.folds = f.folds;
  c.cv.grid_size = f.grid;
  c.cv.seed = f.cv_seed;
  c.cv.rule = f.cv_rule == "min" ? CVRule::Min : CVRule::OneSE;
  c.cv.threads = threads;
  if (f.tau != "auto") {
    std::size_t used = 0;
    double t = 0;
    try {
      t = std::stod(f.tau, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != f.tau.size()) throw ValidationError("--tau must be 'auto' or a number in [0, 1]");
    c.shrinkage.tau_override = t;
  }
  c.diagonal_mode = f.diagonal;
  c.n_vectors = f.vectors;
  c.use_clustering = f.cluster || f.clusters > 0;
  c.clustering.k = f.clusters;
  c.clustering.restarts = f.restarts;
  c.clustering.seed = f.cluster_seed;
  c.clustering.threads = threads;
  c.strategy = parse_strategy(f.strategy);
  return c;
}

json fit_params_json(const FitConfig& c) {
  const char* rule = c.lambda_rule == LambdaRule::Fixed ? "fixed" : c.lambda_rule == LambdaRule::Fraction ? "fraction" : "cv";
  json j{{"lambda_rule", rule}};
  if (c.lambda_rule == LambdaRule::Fixed) j["lambda"] = c.solver.lambda;
  if (c.lambda_rule == LambdaRule::Fraction) j["lambda_fraction"] = c.lambda_fraction;
  j["eps"] = c.solver.eps;
  j["max_outer"] = c.solver.max_outer;
  j["max_inner"] = c.solver.max_inner;
  j["zero_fallback"] = c.solver.zero_fallback;
  j["tau"] = c.shrinkage.tau_override ? json(*c.shrinkage.tau_override) : json("auto");
  j["diagonal_mode"] = c.diagonal_mode;
  j["n_vectors"] = c.n_vectors;
  j["strategy"] = to_string(c.strategy);
  j["clustering"] = c.use_clustering ? json{{"k", c.clustering.k == 0 ? json("default") : json(c.clustering.k)},
                                            {"restarts", c.clustering.restarts}}
                                     : json(nullptr);
  j["cv"] = json{{"folds", c.cv.folds}, {"grid", c.cv.grid_size}, {"rule", c.cv.rule == CVRule::Min ? "min" : "1se"}};
  return j;
}

json seeds_json(const FitConfig& c) {
  return json{{"solver", c.solver.seed}, {"cv", c.cv.seed}, {"cluster", c.clustering.seed}};
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

json reproducibility(const std::string& sub, json params, json seeds, unsigned threads) {
  return json{{"tool", "sflda"},
              {"subcommand", sub},
              {"parameters", std::move(params)},
              {"seeds", std::move(seeds)},
              {"threads", resolve_threads(threads)}};
}

json index_list(const IndexList& v) {
  json a = json::array();
  for (Index i : v) a.push_back(i);
  return a;
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json std_vector_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

json diagnostics_json(const SolveDiagnostics& d) {
  const CertificateCheck c = check_certificates(d);
  return json{{"converged", d.converged},
              {"zero_solution", d.zero_solution},
              {"zero_by_objective", d.zero_by_objective},
              {"outer_iterations", d.outer_iterations},
              {"total_sweeps", d.total_sweeps},
              {"kkt_residual", d.kkt_residual},
              {"kkt_scale", d.kkt_scale},
              {"normalization", d.normalization},
              {"penalized_objective", d.penalized_objective},
              {"worst_decrease", d.worst_decrease},
              {"certificates_ok", c.ok()}};
}

json cv_json(const CVResult& cv) {
  json folds = json::array();
  for (Index f = 0; f < cv.fold_errors.rows(); ++f) folds.push_back(vector_json(cv.fold_errors.row(f).transpose()));
  return json{{"lambda_max", cv.lambda_max},
              {"grid", std_vector_json(cv.grid)},
              {"mean_error", vector_json(cv.mean_error)},
              {"se", vector_json(cv.se)},
              {"fold_errors", folds},
              {"chosen_lambda", cv.chosen_lambda},
              {"chosen_index", cv.chosen_index},
              {"nonconverged", cv.nonconverged}};
}

json metrics_json(const Metrics& m) {
  return json{{"error_percent", m.error_percent},
              {"n_test", m.n_test},
              {"features", m.n_features},
              {"correct_features", m.correct_features ? json(*m.correct_features) : json(nullptr)}};
}

json path_json(const PathTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows)
    rows.push_back(json{{"lambda", r.lambda},
                        {"support_size", r.support_size},
                        {"objective", r.objective},
                        {"l1_norm", r.l1_norm},
                        {"converged", r.converged}});
  return json{{"lambda_max", t.lambda_max},
              {"drop_lambda", t.drop_lambda ? json(*t.drop_lambda) : json(nullptr)},
              {"min_nonzero_support", t.min_nonzero_support ? json(*t.min_nonzero_support) : json(nullptr)},
              {"rows", rows}};
}

void write_path_csv(const PathTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << std::setprecision(17) << "lambda,support_size\n";
  for (const auto& r : t.rows) out << r.lambda << ',' << r.support_size << '\n';
}

// Flattens the document into aligned "key  value" lines.
void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& lines) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), lines);
  } else if (j.is_array() && !j.empty() && (j.front().is_object() || j.front().is_array())) {
    for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", lines);
  } else {
    lines.emplace_back(prefix, j.dump());
  }
}

void emit(json doc, const CommonOpts& c, std::ostream& out) {
  json full{{"generated_at", timestamp()}};
  for (auto it = doc.begin(); it != doc.end(); ++it) full[it.key()] = it.value();
  if (!c.report.empty()) {
    std::ofstream f(c.report);
    if (!f) throw ValidationError("cannot write " + c.report);
    f << full.dump(2) << '\n';
  }
  if (c.format == "text") {
    std::vector<std::pair<std::string, std::string>> lines;
    flatten(full, "", lines);
    std::size_t width = 0;
    for (const auto& l : lines) width = std::max(width, l.first.size());
    for (const auto& l : lines) out << std::left << std::setw(static_cast<int>(width) + 2) << l.first << l.second << '\n';
  } else {
    out << full.dump(2) << '\n';
  }
}

void warn(const CommonOpts& c, std::ostream& err, const std::string& msg) {
  if (c.log_level != "quiet") err << "warning: " << msg << '\n';
}

void info(const CommonOpts& c, std::ostream& err, const std::string& msg) {
  if (c.log_level == "info") err << "info: " << msg << '\n';
}

class NonConvergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

IndexList read_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open truth file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("truth file: ") + e.what());
  }
  const json& arr = j.is_object() ? j.at("truth_support") : j;
  IndexList out;
  for (const auto& v : arr) out.push_back(v.get<Index>());
  return out;
}

// ---- subcommands ----

int cmd_simulate(const ScenarioOpts& so, std::uint64_t replicate, const std::string& out_dir, const std::string& label_column,
                 const CommonOpts& c, std::ostream& out, std::ostream& err) {
  const ScenarioSpec spec = make_scenario(so);
  const Scenario sc = build_scenario(spec);
  if (sc.repaired) warn(c, err, "block covariance was indefinite; eigenvalues floored at 1e-6");
  const ScenarioSample sample = sample_scenario(sc, replicate);
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  save_dataset(sample.train, dir / "train.csv", label_column);
  save_dataset(sample.test, dir / "test.csv", label_column);
  json truth{{"truth_support", index_list(sample.truth_support)}, {"mu2", vector_json(sc.mu2.head(spec.r))}};
  {
    std::ofstream f(dir / "truth.json");
    if (!f) throw ValidationError("cannot write " + (dir / "truth.json").string());
    f << truth.dump(1) << '\n';
  }
  json params = scenario_json(spec);
  params["replicate"] = replicate;
  params["label_column"] = label_column;
  json doc{{"reproducibility", reproducibility("simulate", params, json{{"scenario", spec.seed}, {"replicate", replicate}}, c.threads)},
           {"outputs", json{{"train", (dir / "train.csv").string()}, {"test", (dir / "test.csv").string()},
                            {"truth", (dir / "truth.json").string()}}},
           {"covariance_repaired", sc.repaired},
           {"train_rows", sample.train.n()},
           {"test_rows", sample.test.n()}};
  emit(doc, c, out);
  return kExitOk;
}

int cmd_fit(const std::string& data_path, const std::string& label_column, const std::string& model_out, const FitOpts& fo,
            const SolverOpts& so, const CommonOpts& c, std::ostream& out, std::ostream& err) {
  const Dataset data = load_dataset(data_path, label_column);
  const FitConfig cfg = make_fit_config(fo, so, c.threads);
  info(c, err, "fitting " + std::to_string(data.n()) + " x " + std::to_string(data.p()) + " with " + std::to_string(data.g()) + " groups");
  const FitReport rep = fit(data, cfg);
  for (const auto& w : rep.warnings) warn(c, err, w);
  if (!rep.converged && !fo.allow_nonconverged)
    throw NonConvergence("solver did not converge (raise --max-outer/--max-inner or pass --allow-nonconverged)");
  save_model(rep.model, model_out);

  json steps = json::array();
  for (const auto& s : rep.steps)
    steps.push_back(json{{"lambda", s.lambda},
                         {"lambda_max", s.lambda_max},
                         {"working_features", s.working_features},
                         {"clusters", s.clusters ? json(*s.clusters) : json(nullptr)},
                         {"tau", std_vector_json(s.tau)},
                         {"diagnostics", diagnostics_json(s.diagnostics)}});
  json supports = json::array();
  for (const auto& s : rep.model.supports) supports.push_back(s.size());
  const Metrics train = evaluate(rep.model, data);
  json params = fit_params_json(cfg);
  params["data"] = data_path;
  params["label_column"] = label_column;
  params["model"] = model_out;
  json doc{{"reproducibility", reproducibility("fit", params, seeds_json(cfg), c.threads)},
           {"model", json{{"path", model_out},
                          {"vectors", rep.model.d()},
                          {"support_sizes", supports},
                          {"selected_features", rep.model.selected_features().size()},
                          {"lambda", std_vector_json(rep.model.lambda)},
                          {"zero_model", rep.model.is_zero()}}},
           {"training_error_percent", train.error_percent},
           {"steps", steps},
           {"cv", rep.cv ? cv_json(*rep.cv) : json(nullptr)},
           {"converged", rep.converged},
           {"warnings", rep.warnings}};
  emit(doc, c, out);
  return kExitOk;
}

int cmd_cv(const std::string& data_path, const std::string& label_column, const std::string& csv, const FitOpts& fo,
           const SolverOpts& so, const CommonOpts& c, std::ostream& out, std::ostream& err) {
  const Dataset data = load_dataset(data_path, label_column);
  FitConfig cfg = make_fit_config(fo, so, c.threads);
  cfg.lambda_rule = LambdaRule::CrossValidated;
  const CVResult cv = cross_validate(data, cfg);
  if (cv.nonconverged > 0) warn(c, err, std::to_string(cv.nonconverged) + " cross-validation solves hit the iteration cap");
  if (!csv.empty()) {
    std::ofstream f(csv);
    if (!f) throw ValidationError("cannot write " + csv);
    f << std::setprecision(17) << "lambda,mean_error,se\n";
    for (std::size_t k = 0; k < cv.grid.size(); ++k)
      f << cv.grid[k] << ',' << cv.mean_error[static_cast<Index>(k)] << ',' << cv.se[static_cast<Index>(k)] << '\n';
  }
  json params = fit_params_json(cfg);
  params["data"] = data_path;
  params["label_column"] = label_column;
  emit(json{{"reproducibility", reproducibility("cv", params, seeds_json(cfg), c.threads)}, {"cv", cv_json(cv)}}, c, out);
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& label_column,
                const std::string& csv, const CommonOpts& c, std::ostream& out, std::ostream& err) {
  const DiscriminantModel model = load_model(model_path);
  const FeatureTable table = load_feature_table(data_path, label_column, false);
  if (!model.feature_names.empty() && table.feature_names != model.feature_names &&
      table.X.cols() == model.p)
    warn(c, err, "feature names differ from the model's; columns are matched by position");
  const Prediction pred = predict(model, table.X);
  json labels = json::array();
  for (int l : pred.labels) labels.push_back(model.group_names[static_cast<std::size_t>(l)]);
  json scores = json::array();
  for (Index i = 0; i < pred.scores.rows(); ++i) scores.push_back(vector_json(pred.scores.row(i).transpose()));
  json doc{{"reproducibility", reproducibility("predict", json{{"model", model_path}, {"data", data_path}}, json::object(), c.threads)},
           {"n", table.X.rows()},
           {"predictions", labels},
           {"scores", scores}};
  if (table.labels) {
    Index wrong = 0;
    for (std::size_t i = 0; i < pred.labels.size(); ++i)
      wrong += model.group_names[static_cast<std::size_t>(pred.labels[i])] != (*table.labels)[i];
    doc["error_percent"] = table.X.rows() ? 100.0 * static_cast<double>(wrong) / static_cast<double>(table.X.rows()) : 0.0;
  }
  if (!csv.empty()) {
    std::ofstream f(csv);
    if (!f) throw ValidationError("cannot write " + csv);
    f << std::setprecision(17) << "row,predicted";
    for (Index k = 0; k < pred.scores.cols(); ++k) f << ",score_" << k + 1;
    f << '\n';
    for (Index i = 0; i < pred.scores.rows(); ++i) {
      f << i << ',' << model.group_names[static_cast<std::size_t>(pred.labels[static_cast<std::size_t>(i)])];
      for (Index k = 0; k < pred.scores.cols(); ++k) f << ',' << pred.scores(i, k);
      f << '\n';
    }
  }
  emit(doc, c, out);
  return kExitOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path, const std::string& label_column,
                 const std::string& truth, const CommonOpts& c, std::ostream& out) {
  const DiscriminantModel model = load_model(model_path);
  const Dataset test = load_dataset(data_path, label_column);
  std::optional<IndexList> truth_support;
  if (!truth.empty()) truth_support = read_truth(truth);
  const Metrics m = evaluate(model, test, truth_support);
  json params{{"model", model_path}, {"data", data_path}, {"label_column", label_column}, {"truth", truth}};
  emit(json{{"reproducibility", reproducibility("evaluate", params, json::object(), c.threads)}, {"metrics", metrics_json(m)}}, c,
       out);
  return kExitOk;
}

struct TheoryOpts {
  std::string data;
  std::string label_column = "label";
  Index uniform_p = 0;
  std::string l_values;
  double gamma = 1.0;
  std::uint64_t seed = 1;
  CLI::Option* lambda_opt = nullptr;
  double lambda = 0.0;
  double fraction = 0.5;
  int grid_points = 200;
  std::string csv;
};

int cmd_theory(const TheoryOpts& t, const SolverOpts& so, const CommonOpts& c, std::ostream& out, std::ostream& err) {
  ScatterSet scatter;
  WithinMatrix W;
  json source;
  double gamma = 0.0;
  Vector l;
  if (!t.data.empty()) {
    const Dataset data = load_dataset(t.data, t.label_column);
    if (data.g() != 2) throw ValidationError("theory-report needs exactly two groups");
    Vector mean = data.X().colwise().mean().transpose();
    scatter = compute_scatter(data.with_features(data.X().rowwise() - mean.transpose(), data.feature_names()));
    W = diagonal_within(scatter);
    source = json{{"data", t.data}, {"label_column", t.label_column}};
  } else {
    if (!t.l_values.empty()) {
      std::vector<double> vals;
      std::stringstream ss(t.l_values);
      std::string item;
      while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
      l = Eigen::Map<Vector>(vals.data(), static_cast<Index>(vals.size()));
    } else if (t.uniform_p > 0) {
      SplitMix64 rng(t.seed);
      l.resize(t.uniform_p);
      for (Index i = 0; i < t.uniform_p; ++i) l[i] = rng.uniform();
      std::sort(l.data(), l.data() + l.size(), std::greater<double>());
    } else {
      throw ValidationError("theory-report needs --data, --l or --uniform-p");
    }
    if (l.norm() == 0.0) throw ValidationError("l must be non-zero");
    l.normalize();
    if (!(t.gamma > 0.0)) throw ValidationError("--gamma must be positive");
    Matrix H = std::sqrt(t.gamma) * l.transpose();
    scatter = ScatterSet::from_factors(H, Vector::Ones(l.size()), Vector::Ones(l.size()));
    W = WithinMatrix::identity(l.size());
    gamma = t.gamma;
    source = json{{"gamma", t.gamma}, {"l", vector_json(l)}, {"seed", t.seed}};
  }
  const Vector v0 = initial_vector(scatter, W);
  const double lmax = lambda_max(scatter, v0);
  const double lambda = t.lambda_opt->count() ? t.lambda : t.fraction * lmax;
  const TheoryReport rep = t.data.empty() ? theory_report(gamma, l, lambda) : theory_report(scatter, lambda);
  SolverConfig cfg;
  cfg.eps = so.eps;
  cfg.max_outer = so.max_outer;
  cfg.max_inner = so.max_inner;
  cfg.seed = so.seed;
  cfg.zero_fallback = !so.no_zero_fallback;
  cfg.diagonal_mode = true;
  const PathTable path = solution_path(scatter, W, linear_grid(lmax, t.grid_points), cfg);
  if (!t.csv.empty()) write_path_csv(path, t.csv);

  // Floor check: every non-zero support on the path against max(m' + 1, m_lambda).
  Index violations = 0;
  for (const auto& r : path.rows) {
    if (r.support_size == 0) continue;
    const TheoryReport at = t.data.empty() ? theory_report(gamma, l, r.lambda) : theory_report(scatter, r.lambda);
    if (at.min_support && r.support_size < *at.min_support) ++violations;
  }
  if (violations > 0) warn(c, err, std::to_string(violations) + " path point(s) below the sparsity floor");

  json report{{"gamma", rep.gamma},
              {"l_sorted", vector_json(rep.l)},
              {"order", index_list(rep.order)},
              {"lambda", rep.lambda},
              {"F_lower", vector_json(rep.F_lower)},
              {"F_upper", vector_json(rep.F_upper)},
              {"m_lambda", rep.m_lambda ? json(*rep.m_lambda) : json(nullptr)},
              {"m_prime", rep.m_prime},
              {"min_support", rep.min_support ? json(*rep.min_support) : json(nullptr)}};
  json params = source;
  params["lambda"] = lambda;
  params["grid_points"] = t.grid_points;
  emit(json{{"reproducibility", reproducibility("theory-report", params, json{{"solver", so.seed}, {"l", t.seed}}, c.threads)},
            {"theory", report},
            {"path", path_json(path)},
            {"floor_violations", violations}},
       c, out);
  return kExitOk;
}

int cmd_path(const std::string& data_path, const std::string& label_column, int grid_points, const std::string& csv,
             const FitOpts& fo, const SolverOpts& so, const CommonOpts& c, std::ostream& out, std::ostream& err) {
  const Dataset data = load_dataset(data_path, label_column);
  FitConfig cfg = make_fit_config(fo, so, c.threads);
  Vector mean = data.X().colwise().mean().transpose();
  const ScatterSet scatter = compute_scatter(data.with_features(data.X().rowwise() - mean.transpose(), data.feature_names()));
  WithinMatrix W;
  if (cfg.diagonal_mode) {
    W = diagonal_within(scatter);
  } else {
    W = shrunken_within(scatter, cfg.shrinkage).W.for_coordinate_updates(cfg.solver.dense_limit);
  }
  cfg.solver.diagonal_mode = cfg.diagonal_mode;
  const double lmax = lambda_max(scatter, initial_vector(scatter, W));
  const PathTable path = solution_path(scatter, W, linear_grid(lmax, grid_points), cfg.solver);
  for (const auto& r : path.rows)
    if (!r.converged) {
      if (!fo.allow_nonconverged) throw NonConvergence("path solve at lambda " + std::to_string(r.lambda) + " did not converge");
      warn(c, err, "path solve at lambda " + std::to_string(r.lambda) + " did not converge");
    }
  if (!csv.empty()) write_path_csv(path, csv);
  json params = fit_params_json(cfg);
  params["data"] = data_path;
  params["grid_points"] = grid_points;
  emit(json{{"reproducibility", reproducibility("path", params, seeds_json(cfg), c.threads)}, {"path", path_json(path)}}, c, out);
  return kExitOk;
}

int cmd_bench(const ScenarioOpts& sco, int replicates, const std::string& csv, const FitOpts& fo, const SolverOpts& so,
              const CommonOpts& c, std::ostream& out, std::ostream& err) {
  BenchOptions b;
  b.scenario = make_scenario(sco);
  b.replicates = replicates;
  b.fit = make_fit_config(fo, so, 1);
  b.threads = c.threads;
  const BenchResult res = run_bench(b);
  if (res.covariance_repaired) warn(c, err, "block covariance was indefinite; eigenvalues floored at 1e-6");
  int nonconv = 0;
  for (const auto& r : res.rows) nonconv += r.nonconverged;
  if (nonconv > 0) {
    if (!fo.allow_nonconverged) throw NonConvergence(std::to_string(nonconv) + " bench solves did not converge");
    warn(c, err, std::to_string(nonconv) + " bench solves did not converge");
  }
  write_bench_csv(res, csv);
  json rows = json::array();
  for (const auto& r : res.rows)
    rows.push_back(json{{"method", r.method},
                        {"scenario", r.scenario},
                        {"error_mean", r.error_mean},
                        {"error_sd", r.error_sd},
                        {"features_mean", r.features_mean},
                        {"features_sd", r.features_sd},
                        {"correct_mean", r.correct_mean},
                        {"correct_sd", r.correct_sd},
                        {"nonconverged", r.nonconverged},
                        {"cv_nonconverged", r.cv_nonconverged}});
  json params = fit_params_json(b.fit);
  params["scenario"] = scenario_json(b.scenario);
  params["replicates"] = replicates;
  params["csv"] = csv;
  json seeds = seeds_json(b.fit);
  seeds["scenario"] = b.scenario.seed;
  emit(json{{"reproducibility", reproducibility("bench", params, seeds, c.threads)},
            {"covariance_repaired", res.covariance_repaired},
            {"rows", rows}},
       c, out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse L1-penalized Fisher discriminant analysis", "sflda"};
  app.require_subcommand(1);

  CommonOpts common;
  SolverOpts solver;
  FitOpts fit_opts, cv_opts, path_opts, bench_opts;
  ScenarioOpts sim_scen, bench_scen;
  std::string data, label_column = "label", model = "model.json", out_dir = "sim", csv, truth;
  std::uint64_t replicate = 0;
  int replicates = 25, grid_points = 200;
  TheoryOpts theory;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic train/test scenario");
  add_scenario(sim, sim_scen);
  sim->add_option("--replicate", replicate, "Replicate index (noise stream)");
  sim->add_option("--out-dir", out_dir, "Directory for train.csv, test.csv and truth.json");
  sim->add_option("--label-column", label_column, "Label column name");
  sim_scen.given["seed_alias"] =
      sim->add_option("--seed", sim_scen.seed, "Alias of --scenario-seed")->excludes(sim_scen.given["seed"]);
  add_common(sim, common);

  auto* fitc = app.add_subcommand("fit", "Fit discriminant vectors and save a model");
  fitc->add_option("--data", data, "Training CSV")->required()->check(CLI::ExistingFile);
  fitc->add_option("--label-column", label_column, "Label column name");
  fitc->add_option("--out", model, "Model JSON path");
  add_fit(fitc, fit_opts, true);
  add_solver(fitc, solver);
  add_common(fitc, common);

  auto* cvc = app.add_subcommand("cv", "Cross-validate the penalty");
  cvc->add_option("--data", data, "Training CSV")->required()->check(CLI::ExistingFile);
  cvc->add_option("--label-column", label_column, "Label column name");
  cvc->add_option("--csv", csv, "Write lambda, mean_error, se as CSV");
  add_fit(cvc, cv_opts, false);
  add_solver(cvc, solver);
  add_common(cvc, common);

  auto* pred = app.add_subcommand("predict", "Classify rows with a saved model");
  pred->add_option("--model", model, "Model JSON")->required()->check(CLI::ExistingFile);
  pred->add_option("--data", data, "CSV with the model's feature columns")->required()->check(CLI::ExistingFile);
  pred->add_option("--label-column", label_column, "Label column to ignore (reported as error when present)");
  pred->add_option("--out", csv, "Write row, predicted, scores as CSV");
  add_common(pred, common);

  auto* eval = app.add_subcommand("evaluate", "Error rate and selected features on labelled data");
  eval->add_option("--model", model, "Model JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Labelled test CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--label-column", label_column, "Label column name");
  eval->add_option("--truth", truth, "truth.json with the informative features")->check(CLI::ExistingFile);
  add_common(eval, common);

  auto* th = app.add_subcommand("theory-report", "Sparsity bounds and the support path of the rank-one problem");
  auto* th_data = th->add_option("--data", theory.data, "Two-group CSV (reduced through the diagonal within operator)")
                      ->check(CLI::ExistingFile);
  th->add_option("--label-column", theory.label_column, "Label column name");
  auto* th_l = th->add_option("--l", theory.l_values, "Comma-separated eigenvector l (normalized)");
  auto* th_u = th->add_option("--uniform-p", theory.uniform_p, "Draw p uniform values for l")->check(CLI::PositiveNumber);
  th_data->excludes(th_l)->excludes(th_u);
  th_l->excludes(th_u);
  th->add_option("--gamma", theory.gamma, "Eigenvalue of B");
  th->add_option("--l-seed", theory.seed, "Seed for --uniform-p");
  theory.lambda_opt = th->add_option("--lambda", theory.lambda, "Penalty for the bounds")->check(CLI::NonNegativeNumber);
  th->add_option("--lambda-fraction", theory.fraction, "Penalty as a fraction of lambda_max")
      ->check(CLI::NonNegativeNumber)
      ->excludes(theory.lambda_opt);
  th->add_option("--grid-points", theory.grid_points, "Path grid size")->check(CLI::Range(2, 1000000));
  th->add_option("--csv", theory.csv, "Write lambda, support_size as CSV");
  add_solver(th, solver);
  add_common(th, common);

  auto* pathc = app.add_subcommand("path", "Support path over a linear lambda grid");
  pathc->add_option("--data", data, "Training CSV")->required()->check(CLI::ExistingFile);
  pathc->add_option("--label-column", label_column, "Label column name");
  pathc->add_option("--grid-points", grid_points, "Grid size")->check(CLI::Range(2, 1000000));
  pathc->add_option("--csv", csv, "Write lambda, support_size as CSV");
  add_fit(pathc, path_opts, false);
  add_solver(pathc, solver);
  add_common(pathc, common);

  auto* bench = app.add_subcommand("bench", "Replicate study of both methods on a synthetic scenario");
  add_scenario(bench, bench_scen);
  bench->add_option("--replicates", replicates, "Replicates")->check(CLI::PositiveNumber);
  bench->add_option("--out", csv = "bench.csv", "Table CSV path");
  add_fit(bench, bench_opts, true);
  add_solver(bench, solver);
  add_common(bench, common);

  std::vector<const char*> argv{"sflda"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitValidation;
  }

  try {
    if (*sim) return cmd_simulate(sim_scen, replicate, out_dir, label_column, common, out, err);
    if (*fitc) return cmd_fit(data, label_column, model, fit_opts, solver, common, out, err);
    if (*cvc) return cmd_cv(data, label_column, csv, cv_opts, solver, common, out, err);
    if (*pred) return cmd_predict(model, data, label_column, csv, common, out, err);
    if (*eval) return cmd_evaluate(model, data, label_column, truth, common, out);
    if (*th) return cmd_theory(theory, solver, common, out, err);
    if (*pathc) return cmd_path(data, label_column, grid_points, csv, path_opts, solver, common, out, err);
    if (*bench) return cmd_bench(bench_scen, replicates, csv, bench_opts, solver, common, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace sflda::cli
