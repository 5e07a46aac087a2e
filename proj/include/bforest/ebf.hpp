#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "bforest/dataset.hpp"
#include "bforest/error.hpp"
#include "bforest/forest.hpp"
#include "bforest/metrics.hpp"
#include "bforest/parallel.hpp"
#include "bforest/tree.hpp"

namespace bforest {

/// Trunk sizing: exactly one of min_leaf_count (grow until no leaf can hold
/// that many rows) or max_leaves (best-first growth to a leaf cap) is set.
struct TrunkConfig {
  std::optional<std::uint32_t> min_leaf_count;
  std::optional<std::uint32_t> max_leaves;
  /// Per-leaf floor that also applies in max_leaves mode.
  std::uint32_t node_min_leaf = 1;

  void validate() const {
    if (min_leaf_count.has_value() == max_leaves.has_value())
      throw ConfigError("trunk config needs exactly one of min_leaf_count / max_leaves");
    if (max_leaves && *max_leaves < 1) throw ConfigError("trunk max_leaves must be positive");
  }

  FitConfig to_fit_config() const {
    validate();
    FitConfig config;
    if (min_leaf_count) {
      config.min_leaf_count = std::max(*min_leaf_count, node_min_leaf);
    } else if (*max_leaves == 1) {
      // No split can satisfy this, so the root stays the single leaf.
      config.min_leaf_count = std::numeric_limits<std::uint32_t>::max();
    } else {
      config.min_leaf_count = node_min_leaf;
      config.max_leaves = *max_leaves;
    }
    return config;
  }
};

/// Shallow unit-weight CART trunk. A max_leaves of 1 yields a single root
/// leaf.
inline Tree fit_trunk(const Dataset& ds, const TrunkConfig& config) {
  return fit_tree(ds, WeightVector::ones(ds.n_rows()), config.to_fit_config());
}

inline std::uint32_t route_row(const Tree& trunk, std::span<const double> x) {
  return trunk.leaf_for(x);
}

/// Trunk-leaf id per dataset row.
inline std::vector<std::uint32_t> route(const Tree& trunk, const Dataset& ds) {
  if (ds.n_features() != trunk.n_features)
    throw DataError("route: dataset has " + std::to_string(ds.n_features()) +
                    " features, trunk expects " + std::to_string(trunk.n_features));
  std::vector<std::uint32_t> leaf_ids(ds.n_rows());
  std::vector<double> x(ds.n_features());
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (std::size_t j = 0; j < ds.n_features(); ++j) x[j] = ds.value(i, j);
    leaf_ids[i] = trunk.leaf_for(x);
  }
  return leaf_ids;
}

/// Empirical Bayesian forest: fixed unit-weight trunk plus one Bayesian
/// forest per trunk leaf ("branch").
struct EBFModel {
  Tree trunk;
  std::vector<std::uint32_t> branch_leaf_ids;  // ascending trunk node ids
  std::vector<Forest> branches;                // parallel to branch_leaf_ids
  ForestConfig branch_config;

  const Forest& branch_for_leaf(std::uint32_t leaf_id) const {
    for (std::size_t b = 0; b < branch_leaf_ids.size(); ++b)
      if (branch_leaf_ids[b] == leaf_id) return branches[b];
    throw DataError("ebf: no branch for trunk leaf " + std::to_string(leaf_id));
  }
};

namespace detail {

/// Branch forest seed: derived from the trunk leaf id (stable under node
/// renumbering of other leaves), and equal to the master seed for leaf 0 so a
/// single-leaf trunk reproduces fit_forest exactly.
inline std::uint64_t branch_seed(std::uint64_t master_seed, std::uint32_t leaf_id) {
  return master_seed ^ mix64(leaf_id);
}

}  // namespace detail

/// Fits the trunk, routes every row to its branch, and fits one BF per
/// branch. Branch fits share no mutable state and run concurrently; the
/// result is deterministic for a fixed branch_config.seed.
inline EBFModel fit_ebf(const Dataset& ds, const TrunkConfig& trunk_config,
                        const ForestConfig& branch_config, unsigned n_threads = 0) {
  trunk_config.validate();
  branch_config.validate();

  EBFModel model;
  model.branch_config = branch_config;
  model.trunk = fit_trunk(ds, trunk_config);

  const auto leaf_ids = route(model.trunk, ds);
  std::map<std::uint32_t, std::vector<std::uint32_t>> branch_rows;
  for (std::uint32_t i = 0; i < leaf_ids.size(); ++i) branch_rows[leaf_ids[i]].push_back(i);
  if (branch_rows.empty()) throw DataError("ebf: trunk routed no rows");

  std::vector<Dataset> branch_data;
  for (const auto& [leaf_id, rows] : branch_rows) {
    model.branch_leaf_ids.push_back(leaf_id);
    branch_data.push_back(subset(ds, rows));
  }

  // One task per (branch, tree) pair keeps branches and trees concurrent
  // while every tree lands at its own index.
  const std::size_t n_branches = branch_data.size();
  const std::uint32_t trees_per_branch = branch_config.n_trees;
  model.branches.resize(n_branches);
  std::vector<ForestConfig> branch_configs(n_branches);
  for (std::size_t b = 0; b < n_branches; ++b) {
    ForestConfig config = branch_config;
    config.seed = detail::branch_seed(branch_config.seed, model.branch_leaf_ids[b]);
    branch_configs[b] = config;
    auto& forest = model.branches[b];
    forest.config = config;
    forest.task = ds.task();
    forest.n_classes = ds.n_classes();
    forest.n_features = static_cast<std::uint32_t>(ds.n_features());
    forest.trees.resize(trees_per_branch);
    forest.tree_seeds.resize(trees_per_branch);
    for (std::uint32_t t = 0; t < trees_per_branch; ++t)
      forest.tree_seeds[t] = detail::tree_seed(config.seed, t);
  }
  parallel_for(n_branches * trees_per_branch, n_threads, [&](std::size_t task) {
    const std::size_t b = task / trees_per_branch;
    const std::uint32_t t = static_cast<std::uint32_t>(task % trees_per_branch);
    model.branches[b].trees[t] = detail::fit_forest_tree(branch_data[b], branch_configs[b], t);
  });
  return model;
}

inline double predict_ebf(const EBFModel& model, std::span<const double> x) {
  return predict_forest(model.branch_for_leaf(model.trunk.leaf_for(x)), x);
}

inline std::vector<double> predict_ebf_proba(const EBFModel& model, std::span<const double> x) {
  return predict_forest_proba(model.branch_for_leaf(model.trunk.leaf_for(x)), x);
}

inline std::vector<double> predict_ebf(const EBFModel& model, const Dataset& ds,
                                       unsigned n_threads = 0) {
  std::vector<double> out(ds.n_rows());
  parallel_for(ds.n_rows(), n_threads, [&](std::size_t i) {
    const auto x = ds.row(i);
    out[i] = predict_ebf(model, x);
  });
  return out;
}

inline std::vector<std::vector<double>> predict_ebf_proba(const EBFModel& model, const Dataset& ds,
                                                          unsigned n_threads = 0) {
  std::vector<std::vector<double>> out(ds.n_rows());
  parallel_for(ds.n_rows(), n_threads, [&](std::size_t i) {
    const auto x = ds.row(i);
    out[i] = predict_ebf_proba(model, x);
  });
  return out;
}

/// One row of the trunk-depth sensitivity table.
struct SensitivityRow {
  std::uint32_t trunk_min_leaf = 0;
  double mean_metric = 0.0;
  double pct_wtb = 0.0;  // against the full Bayesian forest baseline
};

struct SensitivityTable {
  double baseline_mean = 0.0;  // full BF CV metric
  std::vector<SensitivityRow> rows;
};

/// Cross-validated out-of-sample error of EBFs with varying trunk minimum
/// leaf sizes, reported as % worse-than-best against a full BF fit on the
/// same folds with the same seeds.
inline SensitivityTable trunk_depth_sensitivity(const Dataset& ds,
                                                const std::vector<std::uint32_t>& mls_values,
                                                const ForestConfig& branch_config, std::uint32_t k,
                                                std::uint64_t seed, unsigned n_threads = 0) {
  branch_config.validate();
  const auto folds = kfold_split(ds.n_rows(), k, seed);

  auto metric_for = [&](const std::vector<double>& pred, const Dataset& test) {
    if (ds.task() == Task::kRegression) return rmse(pred, test.response());
    throw ConfigError("trunk_depth_sensitivity: use probability models for classification");
  };

  SensitivityTable table;
  std::vector<double> bf_folds(k, 0.0);
  std::vector<std::vector<double>> ebf_folds(mls_values.size(), std::vector<double>(k, 0.0));

  for (std::uint32_t f = 0; f < k; ++f) {
    const auto train_rows = folds.train_rows(f);
    const auto test_rows = folds.test_rows(f);
    const Dataset train = subset(ds, train_rows);
    const Dataset test = subset(ds, test_rows);
    ForestConfig fold_config = branch_config;
    fold_config.seed = derive_seed(seed, f + 1);

    if (ds.task() == Task::kClassification) {
      const Forest bf = fit_forest(train, fold_config, n_threads);
      bf_folds[f] = mcr_from_proba(predict_forest_proba(bf, test, n_threads), test);
      for (std::size_t m = 0; m < mls_values.size(); ++m) {
        TrunkConfig trunk{mls_values[m], std::nullopt, branch_config.tree.min_leaf_count};
        const EBFModel ebf = fit_ebf(train, trunk, fold_config, n_threads);
        ebf_folds[m][f] = mcr_from_proba(predict_ebf_proba(ebf, test, n_threads), test);
      }
    } else {
      const Forest bf = fit_forest(train, fold_config, n_threads);
      bf_folds[f] = metric_for(predict_forest(bf, test, n_threads), test);
      for (std::size_t m = 0; m < mls_values.size(); ++m) {
        TrunkConfig trunk{mls_values[m], std::nullopt, branch_config.tree.min_leaf_count};
        const EBFModel ebf = fit_ebf(train, trunk, fold_config, n_threads);
        ebf_folds[m][f] = metric_for(predict_ebf(ebf, test, n_threads), test);
      }
    }
  }

  table.baseline_mean = mean_of(bf_folds);
  for (std::size_t m = 0; m < mls_values.size(); ++m) {
    SensitivityRow row;
    row.trunk_min_leaf = mls_values[m];
    row.mean_metric = mean_of(ebf_folds[m]);
    row.pct_wtb = 100.0 * (row.mean_metric - table.baseline_mean) / table.baseline_mean;
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace bforest
