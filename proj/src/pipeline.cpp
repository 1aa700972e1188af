#include "sflda/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "sflda/parallel.hpp"
#include "sflda/rng.hpp"
#include "sflda/scatter.hpp"
#include "sflda/theory.hpp"

namespace sflda {

std::string to_string(Strategy s) {
  return s == Strategy::MergeSequential ? "merge-sequential" : "all-groups-sequential";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "all-groups-sequential") return Strategy::AllGroupsSequential;
  if (name == "merge-sequential") return Strategy::MergeSequential;
  throw ValidationError("unknown strategy '" + name + "' (all-groups-sequential | merge-sequential)");
}

void FitConfig::validate(int g) const {
  solver.validate();
  if (n_vectors < 1 || n_vectors > g - 1)
    throw ValidationError("n_vectors must lie in 1.." + std::to_string(g - 1) + " for " + std::to_string(g) + " groups");
  if (lambda_rule == LambdaRule::Fraction && !(lambda_fraction >= 0.0 && std::isfinite(lambda_fraction)))
    throw ValidationError("lambda fraction must be a finite value >= 0");
  if (lambda_rule == LambdaRule::CrossValidated) {
    if (cv.folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
    if (cv.grid_size < 2) throw ValidationError("cross-validation grid needs at least 2 points");
  }
  if (shrinkage.tau_override && !(*shrinkage.tau_override >= 0.0 && *shrinkage.tau_override <= 1.0))
    throw ValidationError("tau must lie in [0, 1]");
  if (use_clustering && clustering.k != 0 && clustering.k < 2) throw ValidationError("cluster count must be >= 2");
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int g, int folds, std::uint64_t seed) {
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
  std::vector<int> fold(labels.size(), 0);
  for (int grp = 0; grp < g; ++grp) {
    IndexList rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == grp) rows.push_back(static_cast<Index>(i));
    const auto n_i = static_cast<Index>(rows.size());
    const Index largest_fold = (n_i + folds - 1) / folds;
    if (n_i - largest_fold < 2)
      throw ValidationError("stratified " + std::to_string(folds) + "-fold split leaves fewer than 2 training samples in group " +
                            std::to_string(grp) + " (" + std::to_string(n_i) + " samples); use fewer folds");
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(grp)));
    IndexList perm;
    random_permutation(rng, perm, n_i);
    for (Index k = 0; k < n_i; ++k) fold[static_cast<std::size_t>(rows[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])])] =
        static_cast<int>(k % folds);
  }
  return fold;
}

namespace {

// Working problem for one sequential step.
struct StepSetup {
  IndexList features;  // original features in play, ascending
  std::optional<ClusterMap> map;
  ScatterSet scatter;
  WithinMatrix W;
  std::vector<double> tau;
  Vector v0;  // empty when B = 0
  double lambda_max = 0.0;
};

Dataset center_columns(const Dataset& data, Vector& mean) {
  mean = data.X().colwise().mean().transpose();
  Matrix Xc = data.X().rowwise() - mean.transpose();
  return data.with_features(std::move(Xc), data.feature_names());
}

// Rows and labels seen by step `step` (0-based).
Dataset step_rows(const Dataset& data, int step, Strategy strategy) {
  if (strategy == Strategy::AllGroupsSequential) return data;
  const int added = step + 1;
  IndexList rows;
  std::vector<int> labels;
  for (Index i = 0; i < data.n(); ++i) {
    const int l = data.labels()[static_cast<std::size_t>(i)];
    if (l > added) continue;
    rows.push_back(i);
    labels.push_back(l == added ? 1 : 0);
  }
  Matrix X(static_cast<Index>(rows.size()), data.p());
  for (std::size_t r = 0; r < rows.size(); ++r) X.row(static_cast<Index>(r)) = data.X().row(rows[r]);
  const auto& names = data.group_names();
  std::string merged;
  for (int l = 0; l < added; ++l) merged += (l ? "+" : "") + names[static_cast<std::size_t>(l)];
  return Dataset::create(std::move(X), std::move(labels), data.feature_names(),
                         {merged, names[static_cast<std::size_t>(added)]});
}

StepSetup setup_step(const Dataset& centered, const IndexList& features, int step, const FitConfig& config,
                     unsigned cluster_threads) {
  StepSetup st;
  st.features = features;
  Dataset working = step_rows(centered, step, config.strategy).subset_columns(features);
  const auto p_step = static_cast<Index>(features.size());
  if (config.use_clustering && p_step >= 2) {
    ClusterOptions opts = config.clustering;
    if (opts.k == 0) opts.k = default_cluster_count(p_step);
    opts.k = static_cast<int>(std::min<Index>(opts.k, p_step));
    opts.seed = derive_seed(config.clustering.seed, static_cast<std::uint64_t>(step));
    opts.threads = cluster_threads;
    st.map = cluster_features(working, opts);
    working = build_meta_features(working, *st.map);
  }
  st.scatter = compute_scatter(working);
  if (config.diagonal_mode) {
    st.W = diagonal_within(st.scatter);
  } else {
    ShrunkenWithin sw = shrunken_within(st.scatter, config.shrinkage);
    st.tau.assign(sw.tau.data(), sw.tau.data() + sw.tau.size());
    st.W = sw.W.for_coordinate_updates(config.solver.dense_limit);
  }
  if (st.scatter.between_rank() > 0) {
    try {
      st.v0 = initial_vector(st.scatter, st.W);
      st.lambda_max = lambda_max(st.scatter, st.v0);
    } catch (const NumericalError&) {
      st.v0.resize(0);
    }
  }
  return st;
}

Vector expand_vector(const StepSetup& st, const Vector& v_work, Index p) {
  Vector v = Vector::Zero(p);
  for (std::size_t i = 0; i < st.features.size(); ++i) {
    const Index f = st.features[i];
    if (st.map) {
      const int c = st.map->assignment[i];
      v[f] = v_work[c] / static_cast<double>(st.map->sizes[static_cast<std::size_t>(c)]);
    } else {
      v[f] = v_work[static_cast<Index>(i)];
    }
  }
  return v;
}

struct Sequence {
  std::vector<Vector> vectors;
  std::vector<double> lambdas;
  std::vector<StepReport> steps;
  std::vector<VectorClusterMap> maps;
  std::vector<std::string> warnings;
  Vector first_working;  // step-0 solution in working coordinates (warm start)
  bool converged = true;
};

// `lambda` overrides the configured rule when set.
Sequence fit_sequence(const Dataset& centered, const FitConfig& config, const StepSetup* first,
                      const Vector* warm_first, std::optional<double> lambda, unsigned cluster_threads) {
  Sequence out;
  const Index p = centered.p();
  IndexList features(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) features[static_cast<std::size_t>(j)] = j;

  for (int step = 0; step < config.n_vectors; ++step) {
    if (features.empty()) {
      out.warnings.push_back("features exhausted after " + std::to_string(step) + " vector(s); model truncated");
      break;
    }
    StepSetup local;
    if (step > 0 || !first) local = setup_step(centered, features, step, config, cluster_threads);
    const StepSetup& st = (step == 0 && first) ? *first : local;

    StepReport rep;
    rep.lambda_max = st.lambda_max;
    rep.working_features = st.scatter.p;
    rep.tau = st.tau;
    if (st.map) rep.clusters = st.map->k;

    if (st.v0.size() == 0) {
      out.warnings.push_back("vector " + std::to_string(step + 1) + ": no between-group signal on the remaining features");
      if (step == 0) {
        out.vectors.push_back(Vector::Zero(p));
        out.lambdas.push_back(lambda.value_or(config.solver.lambda));
        out.steps.push_back(rep);
      }
      break;
    }

    double lam = config.solver.lambda;
    if (lambda) lam = *lambda;
    else if (config.lambda_rule == LambdaRule::Fraction) lam = config.lambda_fraction * st.lambda_max;
    rep.lambda = lam;

    SolverConfig sc = config.solver;
    sc.lambda = lam;
    sc.diagonal_mode = config.diagonal_mode;
    sc.seed = derive_seed(config.solver.seed, static_cast<std::uint64_t>(step));
    const Vector* start = (step == 0 && warm_first && warm_first->size() == st.scatter.p) ? warm_first : nullptr;
    SolveResult res = solve_discriminant(st.scatter, st.W, sc, start);
    rep.diagnostics = res.diagnostics;
    out.converged = out.converged && res.diagnostics.converged;
    if (step == 0) out.first_working = res.v;

    Vector v = expand_vector(st, res.v, p);
    const IndexList supp = support_of(v);
    if (supp.empty() && step > 0) {
      out.warnings.push_back("vector " + std::to_string(step + 1) + " is zero; model truncated");
      out.steps.push_back(rep);
      break;
    }
    out.vectors.push_back(v);
    out.lambdas.push_back(lam);
    out.steps.push_back(rep);
    if (st.map) {
      VectorClusterMap vm;
      vm.k = st.map->k;
      vm.assignment.assign(static_cast<std::size_t>(p), -1);
      for (std::size_t i = 0; i < st.features.size(); ++i) vm.assignment[static_cast<std::size_t>(st.features[i])] = st.map->assignment[i];
      out.maps.push_back(std::move(vm));
    }
    if (supp.empty()) break;  // zero first vector: nothing more to extract
    IndexList rest;
    std::set_difference(features.begin(), features.end(), supp.begin(), supp.end(), std::back_inserter(rest));
    features = std::move(rest);
  }
  return out;
}

int majority_of(const std::vector<Index>& counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

DiscriminantModel assemble(const Dataset& train, const Dataset& centered, const Vector& center, const FitConfig& config,
                           const Sequence& seq) {
  DiscriminantModel m;
  m.p = train.p();
  m.vectors = seq.vectors;
  for (const auto& v : m.vectors) m.supports.push_back(support_of(v));
  m.lambda = seq.lambdas;
  m.center = center;
  m.scale = Vector::Ones(train.p());
  if (config.use_clustering && !seq.maps.empty()) m.cluster_map = seq.maps;
  m.group_names = train.group_names();
  m.feature_names = train.feature_names();
  m.majority_class = majority_of(train.group_counts());
  m.strategy = to_string(config.strategy);
  m.diagonal_mode = config.diagonal_mode;

  const Index d = static_cast<Index>(m.vectors.size());
  Matrix V(train.p(), d);
  for (Index k = 0; k < d; ++k) V.col(k) = m.vectors[static_cast<std::size_t>(k)];
  const Matrix scores = centered.X() * V;
  m.centroids = Matrix::Zero(train.g(), d);
  for (Index i = 0; i < train.n(); ++i) m.centroids.row(train.labels()[static_cast<std::size_t>(i)]) += scores.row(i);
  for (int grp = 0; grp < train.g(); ++grp)
    m.centroids.row(grp) /= static_cast<double>(train.group_counts()[static_cast<std::size_t>(grp)]);
  return m;
}

}  // namespace

CVResult cross_validate(const Dataset& data, const FitConfig& config) {
  config.validate(data.g());
  const CVOptions& cv = config.cv;
  CVResult out;

  Vector center;
  const Dataset centered = center_columns(data, center);
  IndexList all(static_cast<std::size_t>(data.p()));
  for (Index j = 0; j < data.p(); ++j) all[static_cast<std::size_t>(j)] = j;
  const unsigned threads = resolve_threads(cv.threads);
  const StepSetup full = setup_step(centered, all, 0, config, threads);
  out.lambda_max = full.lambda_max;
  out.grid = linear_grid(full.lambda_max, cv.grid_size);

  const auto fold_of = stratified_folds(data.labels(), data.g(), cv.folds, cv.seed);
  const auto G = static_cast<Index>(out.grid.size());
  out.fold_errors = Matrix::Zero(cv.folds, G);
  std::atomic<int> nonconverged{0};
  const unsigned inner_threads = threads > 1 ? 1u : threads;

  parallel_for(static_cast<std::size_t>(cv.folds), threads, [&](std::size_t f) {
    IndexList train_rows, test_rows;
    for (Index i = 0; i < data.n(); ++i)
      (fold_of[static_cast<std::size_t>(i)] == static_cast<int>(f) ? test_rows : train_rows).push_back(i);
    const Dataset train = data.subset_rows(train_rows);
    Matrix X_test(static_cast<Index>(test_rows.size()), data.p());
    std::vector<int> y_test(test_rows.size());
    for (std::size_t r = 0; r < test_rows.size(); ++r) {
      X_test.row(static_cast<Index>(r)) = data.X().row(test_rows[r]);
      y_test[r] = data.labels()[static_cast<std::size_t>(test_rows[r])];
    }
    Vector c;
    const Dataset train_c = center_columns(train, c);
    const StepSetup first = setup_step(train_c, all, 0, config, inner_threads);
    Vector warm;
    for (Index gi = G - 1; gi >= 0; --gi) {
      const Sequence seq = fit_sequence(train_c, config, &first, warm.size() ? &warm : nullptr,
                                        out.grid[static_cast<std::size_t>(gi)], inner_threads);
      if (!seq.converged) ++nonconverged;
      if (seq.first_working.size() && seq.first_working.squaredNorm() > 0) warm = seq.first_working;
      const DiscriminantModel model = assemble(train, train_c, c, config, seq);
      const Prediction pred = predict(model, X_test);
      Index wrong = 0;
      for (std::size_t r = 0; r < y_test.size(); ++r) wrong += pred.labels[r] != y_test[r];
      out.fold_errors(static_cast<Index>(f), gi) =
          y_test.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(y_test.size());
    }
  });
  out.nonconverged = nonconverged.load();

  out.mean_error = out.fold_errors.colwise().mean().transpose();
  out.se.resize(G);
  for (Index k = 0; k < G; ++k) {
    const double var = (out.fold_errors.col(k).array() - out.mean_error[k]).square().sum() / (cv.folds - 1);
    out.se[k] = std::sqrt(var / cv.folds);
  }
  Index best = 0;
  for (Index k = 1; k < G; ++k)
    if (out.mean_error[k] <= out.mean_error[best]) best = k;
  out.chosen_index = best;
  if (cv.rule == CVRule::OneSE) {
    const double limit = out.mean_error[best] + out.se[best];
    for (Index k = G - 1; k >= 0; --k)
      if (out.mean_error[k] <= limit) {
        out.chosen_index = k;
        break;
      }
  }
  out.chosen_lambda = out.grid[static_cast<std::size_t>(out.chosen_index)];
  return out;
}

FitReport fit(const Dataset& data, const FitConfig& config) {
  config.validate(data.g());
  FitReport report;
  std::optional<double> lambda;
  if (config.lambda_rule == LambdaRule::CrossValidated) {
    report.cv = cross_validate(data, config);
    lambda = report.cv->chosen_lambda;
    if (report.cv->nonconverged > 0)
      report.warnings.push_back(std::to_string(report.cv->nonconverged) + " cross-validation fit(s) hit the iteration cap");
  }
  Vector center;
  const Dataset centered = center_columns(data, center);
  Sequence seq = fit_sequence(centered, config, nullptr, nullptr, lambda, resolve_threads(config.clustering.threads));
  report.model = assemble(data, centered, center, config, seq);
  report.steps = std::move(seq.steps);
  report.converged = seq.converged;
  report.warnings.insert(report.warnings.end(), seq.warnings.begin(), seq.warnings.end());
  if (report.model.is_zero()) report.warnings.push_back("all discriminant vectors are zero; predictions fall back to the majority class");
  return report;
}

Prediction predict(const DiscriminantModel& model, const Matrix& X) {
  if (X.cols() != model.p)
    throw ValidationError("input has " + std::to_string(X.cols()) + " columns, model expects " + std::to_string(model.p));
  Prediction out;
  const Index n = X.rows();
  const Index d = model.d();
  out.labels.assign(static_cast<std::size_t>(n), model.majority_class);
  Matrix V(model.p, d);
  for (Index k = 0; k < d; ++k) V.col(k) = model.vectors[static_cast<std::size_t>(k)];
  const Matrix Xs = (X.rowwise() - model.center.transpose()).array().rowwise() / model.scale.transpose().array();
  out.scores = Xs * V;
  if (model.is_zero()) return out;
  for (Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int grp = 0; grp < model.centroids.rows(); ++grp) {
      const double dist = (out.scores.row(i) - model.centroids.row(grp)).squaredNorm();
      if (dist < best) {
        best = dist;
        out.labels[static_cast<std::size_t>(i)] = grp;
      }
    }
  }
  return out;
}

Metrics evaluate(const DiscriminantModel& model, const Dataset& test, const std::optional<IndexList>& truth_support) {
  Metrics m;
  // Test labels are matched to the model's groups by name.
  std::vector<int> to_model(test.group_names().size());
  for (std::size_t t = 0; t < to_model.size(); ++t) {
    const auto it = std::find(model.group_names.begin(), model.group_names.end(), test.group_names()[t]);
    if (it == model.group_names.end()) throw ValidationError("test group '" + test.group_names()[t] + "' is unknown to the model");
    to_model[t] = static_cast<int>(it - model.group_names.begin());
  }
  const Prediction pred = predict(model, test.X());
  Index wrong = 0;
  for (Index i = 0; i < test.n(); ++i)
    wrong += pred.labels[static_cast<std::size_t>(i)] != to_model[static_cast<std::size_t>(test.labels()[static_cast<std::size_t>(i)])];
  m.n_test = test.n();
  m.error_percent = 100.0 * static_cast<double>(wrong) / static_cast<double>(test.n());
  const IndexList sel = model.selected_features();
  m.n_features = static_cast<Index>(sel.size());
  if (truth_support) {
    IndexList truth = *truth_support;
    std::sort(truth.begin(), truth.end());
    IndexList both;
    std::set_intersection(sel.begin(), sel.end(), truth.begin(), truth.end(), std::back_inserter(both));
    m.correct_features = static_cast<Index>(both.size());
  }
  return m;
}

}  // namespace sflda
