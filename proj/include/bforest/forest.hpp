#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bforest/dataset.hpp"
#include "bforest/error.hpp"
#include "bforest/parallel.hpp"
#include "bforest/rng.hpp"
#include "bforest/tree.hpp"

namespace bforest {

/// Posterior weight law per tree: exponential (Bayesian forest), multinomial
/// bootstrap counts (random forest), or all-ones (plain CART).
enum class WeightMode { kExponential, kMultinomial, kUnit };

struct ForestConfig {
  std::uint32_t n_trees = 100;
  WeightMode weight_mode = WeightMode::kExponential;
  FitConfig tree;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1) throw ConfigError("forest needs at least one tree");
    tree.validate();
  }
};

struct Forest {
  std::vector<Tree> trees;
  std::vector<std::uint64_t> tree_seeds;
  ForestConfig config;
  Task task = Task::kRegression;
  std::uint32_t n_classes = 0;
  std::uint32_t n_features = 0;
  std::uint32_t chunk_count = 1;  // >1 only for sub-sample forests
};

/// One posterior weight draw. Exponential: i.i.d. Exp(1) via inverse CDF.
/// Multinomial: counts of n draws with replacement over {0..n-1} (sums to n).
/// Unit: all ones. Deterministic given (n, mode, seed).
inline WeightVector draw_weights(std::size_t n, WeightMode mode, std::uint64_t seed) {
  if (n < 1) throw ConfigError("draw_weights: n must be positive");
  std::vector<double> theta(n, 1.0);
  Rng rng(seed);
  switch (mode) {
    case WeightMode::kUnit:
      break;
    case WeightMode::kExponential:
      for (std::size_t i = 0; i < n; ++i) theta[i] = rng.next_exponential();
      break;
    case WeightMode::kMultinomial: {
      std::fill(theta.begin(), theta.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) theta[rng.next_below(n)] += 1.0;
      break;
    }
  }
  return WeightVector(std::move(theta));
}

namespace detail {

/// Seed of tree b within a forest: a fixed derivation from the forest seed so
/// that parallel scheduling cannot change results.
inline std::uint64_t tree_seed(std::uint64_t forest_seed, std::uint32_t b) {
  return derive_seed(forest_seed, static_cast<std::uint64_t>(b) + 1);
}

inline Tree fit_forest_tree(const Dataset& ds, const ForestConfig& config, std::uint32_t b) {
  const std::uint64_t seed = tree_seed(config.seed, b);
  const WeightVector theta = draw_weights(ds.n_rows(), config.weight_mode, seed);
  FitConfig tree_config = config.tree;
  tree_config.seed = seed;  // feature subsampling, when enabled
  if (config.weight_mode == WeightMode::kMultinomial && tree_config.min_leaf_count > 1 &&
      !tree_config.min_leaf_weight) {
    // Bootstrap-count weights stand in for the resampled dataset, so the leaf
    // floor counts resample multiplicity: a leaf needs total count mass >=
    // min_leaf_count, not that many distinct rows. Counts are integers and
    // |theta| = n, so the mass threshold is exact.
    tree_config.min_leaf_weight =
        static_cast<double>(tree_config.min_leaf_count) / static_cast<double>(ds.n_rows());
    tree_config.min_leaf_count = 1;
  }
  return fit_tree(ds, theta, tree_config);
}

}  // namespace detail

/// Bayesian forest sampler: for b = 1..B draw weights and fit T(theta_b).
/// Trees are fit concurrently; output is independent of the thread count.
inline Forest fit_forest(const Dataset& ds, const ForestConfig& config, unsigned n_threads = 0) {
  config.validate();
  Forest forest;
  forest.config = config;
  forest.task = ds.task();
  forest.n_classes = ds.n_classes();
  forest.n_features = static_cast<std::uint32_t>(ds.n_features());
  forest.trees.resize(config.n_trees);
  forest.tree_seeds.resize(config.n_trees);
  for (std::uint32_t b = 0; b < config.n_trees; ++b)
    forest.tree_seeds[b] = detail::tree_seed(config.seed, b);
  parallel_for(config.n_trees, n_threads, [&](std::size_t b) {
    forest.trees[b] = detail::fit_forest_tree(ds, config, static_cast<std::uint32_t>(b));
  });
  return forest;
}

/// Ensemble regression prediction: mean over trees, accumulated in tree order.
inline double predict_forest(const Forest& forest, std::span<const double> x) {
  if (forest.task != Task::kRegression)
    throw DataError("predict_forest: forest is not a regression model");
  double sum = 0.0;
  for (const auto& tree : forest.trees) sum += tree.predict(x);
  return sum / static_cast<double>(forest.trees.size());
}

/// Ensemble classification prediction: average of the trees' leaf class
/// proportion vectors. Argmax (lowest index on ties) is applied at report
/// time, not here.
inline std::vector<double> predict_forest_proba(const Forest& forest, std::span<const double> x) {
  if (forest.task != Task::kClassification)
    throw DataError("predict_forest_proba: forest is not a classification model");
  std::vector<double> probs(forest.n_classes, 0.0);
  for (const auto& tree : forest.trees) {
    const auto leaf = tree.predict_proba(x);
    for (std::uint32_t k = 0; k < forest.n_classes; ++k) probs[k] += leaf[k];
  }
  for (auto& p : probs) p /= static_cast<double>(forest.trees.size());
  return probs;
}

inline std::vector<double> predict_forest(const Forest& forest, const Dataset& ds,
                                          unsigned n_threads = 0) {
  if (ds.n_features() != forest.n_features)
    throw DataError("predict_forest: dataset has " + std::to_string(ds.n_features()) +
                    " features, model expects " + std::to_string(forest.n_features));
  std::vector<double> out(ds.n_rows());
  parallel_for(ds.n_rows(), n_threads, [&](std::size_t i) {
    const auto x = ds.row(i);
    out[i] = predict_forest(forest, x);
  });
  return out;
}

inline std::vector<std::vector<double>> predict_forest_proba(const Forest& forest,
                                                             const Dataset& ds,
                                                             unsigned n_threads = 0) {
  if (ds.n_features() != forest.n_features)
    throw DataError("predict_forest_proba: dataset has " + std::to_string(ds.n_features()) +
                    " features, model expects " + std::to_string(forest.n_features));
  std::vector<std::vector<double>> out(ds.n_rows());
  parallel_for(ds.n_rows(), n_threads, [&](std::size_t i) {
    const auto x = ds.row(i);
    out[i] = predict_forest_proba(forest, x);
  });
  return out;
}

/// Sub-sample forest baseline: a seeded partition of the rows into C disjoint
/// near-equal chunks, one independent forest of B trees per chunk; the result
/// holds all C*B trees so prediction averages across every chunk forest.
/// With C=1 this is exactly fit_forest.
inline Forest fit_ssf(const Dataset& ds, std::uint32_t n_chunks, const ForestConfig& config,
                      std::uint64_t partition_seed, unsigned n_threads = 0) {
  config.validate();
  if (n_chunks < 1) throw ConfigError("fit_ssf: need at least one chunk");
  const std::size_t n = ds.n_rows();
  if (n / n_chunks < config.tree.min_leaf_count)
    throw ConfigError("fit_ssf: chunks of " + std::to_string(n / n_chunks) +
                      " rows cannot satisfy min_leaf_count " +
                      std::to_string(config.tree.min_leaf_count));

  Rng rng(partition_seed);
  const auto perm = random_permutation(n, rng);
  const std::size_t base = n / n_chunks;
  const std::size_t extra = n % n_chunks;

  Forest forest;
  forest.config = config;
  forest.task = ds.task();
  forest.n_classes = ds.n_classes();
  forest.n_features = static_cast<std::uint32_t>(ds.n_features());
  forest.chunk_count = n_chunks;

  std::size_t pos = 0;
  for (std::uint32_t c = 0; c < n_chunks; ++c) {
    const std::size_t size = base + (c < extra ? 1 : 0);
    std::vector<std::uint32_t> rows(perm.begin() + pos, perm.begin() + pos + size);
    pos += size;
    std::sort(rows.begin(), rows.end());
    const Dataset chunk = subset(ds, rows);
    ForestConfig chunk_config = config;
    chunk_config.seed = config.seed ^ mix64(c);
    Forest part = fit_forest(chunk, chunk_config, n_threads);
    for (auto& tree : part.trees) forest.trees.push_back(std::move(tree));
    for (const auto seed : part.tree_seeds) forest.tree_seeds.push_back(seed);
  }
  return forest;
}

/// Argmax over class probabilities; lowest index wins ties.
inline std::uint32_t argmax_label(std::span<const double> probs) {
  std::uint32_t best = 0;
  for (std::uint32_t k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = k;
  return best;
}

}  // namespace bforest
