#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "bforest/dataset.hpp"
#include "bforest/ebf.hpp"
#include "bforest/error.hpp"
#include "bforest/forest.hpp"
#include "bforest/metrics.hpp"
#include "bforest/rng.hpp"

namespace bforest {

enum class Metric { kRmse, kMcr };

enum class ModelKind { kDt, kBf, kRf, kEbf, kSsf };

inline std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDt: return "DT";
    case ModelKind::kBf: return "BF";
    case ModelKind::kRf: return "RF";
    case ModelKind::kEbf: return "EBF";
    case ModelKind::kSsf: return "SSF";
  }
  return "?";
}

/// One model entry of an experiment. Defaults mirror the reference setup:
/// minimum leaf of 3, 100 trees per ensemble, five-leaf EBF trunks, five SSF
/// chunks.
struct ModelSpec {
  ModelKind kind = ModelKind::kBf;
  std::string name;  // defaults to the kind name
  FitConfig tree{3, std::nullopt, std::nullopt, std::nullopt, 0};
  std::uint32_t n_trees = 100;
  TrunkConfig trunk{std::nullopt, 5u, 3u};
  std::uint32_t chunks = 5;

  std::string display_name() const { return name.empty() ? model_kind_name(kind) : name; }
};

struct ModelResult {
  std::string name;
  double mean = 0.0;
  std::vector<double> per_fold;
  double pct_wtb = 0.0;
};

struct ResultsTable {
  Metric metric = Metric::kRmse;
  std::vector<ModelResult> models;

  /// Aligned text table, best model first by input order retained.
  std::string format() const {
    std::ostringstream out;
    const char* metric_name = metric == Metric::kRmse ? "rmse" : "mcr";
    out << std::left << std::setw(10) << "model" << std::right << std::setw(12) << metric_name
        << std::setw(10) << "%WTB" << '\n';
    for (const auto& m : models) {
      out << std::left << std::setw(10) << m.name << std::right << std::setw(12) << std::fixed
          << std::setprecision(4) << m.mean << std::setw(10) << std::setprecision(1) << m.pct_wtb
          << '\n';
    }
    return out.str();
  }
};

namespace detail {

inline void finish_results(ResultsTable& table) {
  double best = std::numeric_limits<double>::infinity();
  for (auto& m : table.models) {
    m.mean = mean_of(m.per_fold);
    best = std::min(best, m.mean);
  }
  for (auto& m : table.models)
    m.pct_wtb = best > 0.0 ? 100.0 * (m.mean - best) / best : 0.0;
}

}  // namespace detail

using FittedModel = std::variant<Forest, EBFModel>;

inline FittedModel fit_model(const Dataset& train, const ModelSpec& spec, std::uint64_t seed,
                             unsigned n_threads) {
  switch (spec.kind) {
    case ModelKind::kDt: {
      ForestConfig config{1, WeightMode::kUnit, spec.tree, seed};
      return fit_forest(train, config, n_threads);
    }
    case ModelKind::kBf: {
      ForestConfig config{spec.n_trees, WeightMode::kExponential, spec.tree, seed};
      return fit_forest(train, config, n_threads);
    }
    case ModelKind::kRf: {
      ForestConfig config{spec.n_trees, WeightMode::kMultinomial, spec.tree, seed};
      return fit_forest(train, config, n_threads);
    }
    case ModelKind::kSsf: {
      ForestConfig config{spec.n_trees, WeightMode::kExponential, spec.tree, seed};
      return fit_ssf(train, spec.chunks, config, seed, n_threads);
    }
    case ModelKind::kEbf: {
      ForestConfig config{spec.n_trees, WeightMode::kExponential, spec.tree, seed};
      return fit_ebf(train, spec.trunk, config, n_threads);
    }
  }
  throw ConfigError("unknown model kind");
}

inline double eval_model(const FittedModel& model, const Dataset& test, Metric metric,
                         unsigned n_threads) {
  if (metric == Metric::kRmse) {
    const auto pred = std::holds_alternative<Forest>(model)
                          ? predict_forest(std::get<Forest>(model), test, n_threads)
                          : predict_ebf(std::get<EBFModel>(model), test, n_threads);
    return rmse(pred, test.response());
  }
  const auto proba = std::holds_alternative<Forest>(model)
                         ? predict_forest_proba(std::get<Forest>(model), test, n_threads)
                         : predict_ebf_proba(std::get<EBFModel>(model), test, n_threads);
  return mcr_from_proba(proba, test);
}


/// k-fold cross-validation: one shared fold assignment, one shared seed per
/// fold across all models (so identical specs give identical results), mean
/// metric per model and % worse-than-best.
inline ResultsTable run_cv_experiment(const Dataset& ds, const std::vector<ModelSpec>& models,
                                      std::uint32_t k, std::uint64_t seed, Metric metric,
                                      unsigned n_threads = 0) {
  if (models.empty()) throw ConfigError("run_cv_experiment: need at least one model");
  if (metric == Metric::kMcr && ds.task() != Task::kClassification)
    throw ConfigError("run_cv_experiment: MCR requires a classification dataset");
  const auto folds = kfold_split(ds.n_rows(), k, seed);

  ResultsTable table;
  table.metric = metric;
  for (const auto& spec : models) table.models.push_back({spec.display_name(), 0.0, {}, 0.0});

  for (std::uint32_t f = 0; f < k; ++f) {
    const Dataset train = subset(ds, folds.train_rows(f));
    const Dataset test = subset(ds, folds.test_rows(f));
    const std::uint64_t fold_seed = derive_seed(seed, f + 1);
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto fitted = fit_model(train, models[m], fold_seed, n_threads);
      table.models[m].per_fold.push_back(eval_model(fitted, test, metric, n_threads));
    }
  }
  detail::finish_results(table);
  return table;
}

/// Friedman test function: f(x) = 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2
/// + 10 x4 + 5 x5, features i.i.d. uniform on (0,1), y = f + noise.
struct FriedmanSample {
  Dataset data;
  std::vector<double> true_f;
};

inline FriedmanSample friedman_sample(std::size_t n, std::uint32_t p, double noise_sd,
                                      std::uint64_t seed) {
  if (p < 5) throw ConfigError("friedman_sample: needs at least 5 features");
  if (noise_sd < 0.0) throw ConfigError("friedman_sample: noise_sd must be nonnegative");
  // Features and noise come from separate derived streams, so the drawn x
  // locations (and f) do not depend on the noise level.
  Rng feature_rng(derive_seed(seed, 1));
  Rng noise_rng(derive_seed(seed, 2));
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  std::vector<std::string> names(p);
  for (std::uint32_t j = 0; j < p; ++j) names[j] = "x" + std::to_string(j + 1);
  std::vector<double> f(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < p; ++j) cols[j][i] = feature_rng.next_unit();
    const double x1 = cols[0][i], x2 = cols[1][i], x3 = cols[2][i];
    f[i] = 10.0 * std::sin(std::numbers::pi * x1 * x2) + 20.0 * (x3 - 0.5) * (x3 - 0.5) +
           10.0 * cols[3][i] + 5.0 * cols[4][i];
    y[i] = noise_sd > 0.0 ? f[i] + noise_sd * noise_rng.next_normal() : f[i];
  }
  FriedmanSample sample{Dataset(std::move(cols), std::move(names), std::move(y),
                                Task::kRegression),
                        std::move(f)};
  return sample;
}

/// Repeated Friedman experiment: per repeat a fresh train draw (noise sd 1)
/// and test draw; every model is scored by RMSE against the noiseless f at
/// the test locations, then averaged over repeats.
inline ResultsTable run_friedman_experiment(std::uint32_t repeats, std::size_t n_train,
                                            std::size_t n_test, std::uint32_t p,
                                            const std::vector<ModelSpec>& models,
                                            std::uint64_t seed, unsigned n_threads = 0) {
  if (models.empty()) throw ConfigError("run_friedman_experiment: need at least one model");
  if (repeats < 1) throw ConfigError("run_friedman_experiment: need at least one repeat");

  ResultsTable table;
  table.metric = Metric::kRmse;
  for (const auto& spec : models) table.models.push_back({spec.display_name(), 0.0, {}, 0.0});

  for (std::uint32_t r = 0; r < repeats; ++r) {
    const std::uint64_t repeat_seed = derive_seed(seed, r + 1);
    const auto train = friedman_sample(n_train, p, 1.0, derive_seed(repeat_seed, 1));
    const auto test = friedman_sample(n_test, p, 0.0, derive_seed(repeat_seed, 2));
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto fitted = fit_model(train.data, models[m], repeat_seed, n_threads);
      const auto pred = std::holds_alternative<Forest>(fitted)
                            ? predict_forest(std::get<Forest>(fitted), test.data, n_threads)
                            : predict_ebf(std::get<EBFModel>(fitted), test.data, n_threads);
      table.models[m].per_fold.push_back(rmse(pred, test.true_f));
    }
  }
  detail::finish_results(table);
  return table;
}

}  // namespace bforest
