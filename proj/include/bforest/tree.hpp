#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <vector>

#include "bforest/dataset.hpp"
#include "bforest/error.hpp"
#include "bforest/rng.hpp"

namespace bforest {

/// Go left iff x[feature] <= threshold. Thresholds are midpoints between
/// consecutive distinct observed values at the node.
struct SplitRule {
  std::uint32_t feature = 0;
  double threshold = 0.0;

  bool operator==(const SplitRule&) const = default;
};

struct FitConfig {
  /// Minimum observations (with positive weight) per leaf.
  std::uint32_t min_leaf_count = 1;
  /// Optional minimum leaf weight share |theta_leaf| / |theta|.
  std::optional<double> min_leaf_weight;
  /// Leaf cap; when set, growth is best-first by impurity reduction.
  std::optional<std::uint32_t> max_leaves;
  /// Features sampled per split evaluation; defaults to all features.
  std::optional<std::uint32_t> feature_subset_size;
  /// Drives feature subsampling only; unused when all features are eligible.
  std::uint64_t seed = 0;

  void validate() const {
    if (min_leaf_count < 1 && !min_leaf_weight)
      throw ConfigError("fit config needs min_leaf_count or min_leaf_weight");
    if (min_leaf_weight && !(*min_leaf_weight > 0.0 && *min_leaf_weight <= 1.0))
      throw ConfigError("min_leaf_weight must lie in (0, 1]");
    if (max_leaves && *max_leaves < 2)
      throw ConfigError("max_leaves must be at least 2");
    if (feature_subset_size && *feature_subset_size < 1)
      throw ConfigError("feature_subset_size must be at least 1");
  }
};

struct TreeNode {
  std::int32_t left = -1;   // -1 on leaves
  std::int32_t right = -1;
  SplitRule split{};
  double value = 0.0;                // weighted mean response over the node
  std::vector<double> class_probs;   // weighted class proportions (classification)
  double weight_mass = 0.0;          // |theta| over the node
  std::uint32_t count = 0;           // observations with positive weight
  std::uint32_t depth = 0;
  std::int32_t split_order = -1;     // order the split was applied, 0 = first

  bool is_leaf() const { return left < 0; }
};

class Tree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  Task task = Task::kRegression;
  std::uint32_t n_classes = 0;
  std::uint32_t n_features = 0;
  FitConfig config;

  std::size_t n_leaves() const {
    std::size_t count = 0;
    for (const auto& node : nodes) count += node.is_leaf() ? 1 : 0;
    return count;
  }

  std::uint32_t leaf_for(std::span<const double> x) const {
    if (x.size() != n_features)
      throw DataError("predict: expected " + std::to_string(n_features) + " features, got " +
                      std::to_string(x.size()));
    std::uint32_t id = 0;
    while (!nodes[id].is_leaf()) {
      const auto& split = nodes[id].split;
      id = x[split.feature] <= split.threshold
               ? static_cast<std::uint32_t>(nodes[id].left)
               : static_cast<std::uint32_t>(nodes[id].right);
    }
    return id;
  }

  double predict(std::span<const double> x) const {
    if (task != Task::kRegression) throw DataError("predict: tree is not a regression model");
    return nodes[leaf_for(x)].value;
  }

  std::span<const double> predict_proba(std::span<const double> x) const {
    if (task != Task::kClassification)
      throw DataError("predict_proba: tree is not a classification model");
    return nodes[leaf_for(x)].class_probs;
  }
};

namespace detail {

/// Sufficient statistics of one node over its positive-weight rows.
struct NodeStats {
  double w = 0.0;
  double wy = 0.0;
  double wyy = 0.0;
  std::vector<double> class_w;
  std::uint32_t count = 0;

  void init(Task task, std::uint32_t n_classes) {
    w = wy = wyy = 0.0;
    count = 0;
    if (task == Task::kClassification) class_w.assign(n_classes, 0.0);
  }

  void add(double theta, double y, Task task) {
    w += theta;
    count += 1;
    if (task == Task::kRegression) {
      wy += theta * y;
      wyy += theta * y * y;
    } else {
      class_w[static_cast<std::size_t>(y)] += theta;
    }
  }

  /// Impurity on the unnormalized scale: sum_i theta_i (y_i - mu)^2 for
  /// regression, |theta| (1 - sum_k p_k^2) for classification.
  double impurity(Task task) const {
    if (task == Task::kRegression) return std::max(0.0, wyy - wy * wy / w);
    double ss = 0.0;
    for (const double cw : class_w) ss += cw * cw;
    return std::max(0.0, w - ss / w);
  }
};

inline NodeStats subtract(const NodeStats& total, const NodeStats& part, Task task) {
  NodeStats out;
  out.w = total.w - part.w;
  out.count = total.count - part.count;
  if (task == Task::kRegression) {
    out.wy = total.wy - part.wy;
    out.wyy = total.wyy - part.wyy;
  } else {
    out.class_w.resize(total.class_w.size());
    for (std::size_t k = 0; k < total.class_w.size(); ++k)
      // Class masses are nonnegative; rounding of the running sums can leave
      // a -1e-17 residue for a class absent from this child.
      out.class_w[k] = std::max(0.0, total.class_w[k] - part.class_w[k]);
  }
  return out;
}

struct SplitSearchResult {
  SplitRule rule;
  double child_sum = std::numeric_limits<double>::infinity();
  NodeStats left;
  NodeStats right;
  std::uint32_t left_size = 0;  // positions in the sorted column on the left
  bool found = false;
};

/// Exact best-split search over the node's rows, given one column of row
/// indices per feature, each ordered by (feature value, row index).
class SplitSearcher {
 public:
  SplitSearcher(const Dataset& ds, std::span<const double> theta, const FitConfig& config,
                double total_fit_weight)
      : ds_(ds), theta_(theta), config_(config) {
    min_child_weight_ =
        config.min_leaf_weight ? *config.min_leaf_weight * total_fit_weight : 0.0;
  }

  SplitSearchResult search(std::span<const std::vector<std::uint32_t>> columns,
                           const NodeStats& total, std::uint32_t node_id) const {
    SplitSearchResult best;
    const std::size_t m = columns.empty() ? 0 : columns[0].size();
    if (m < 2ull * config_.min_leaf_count) return best;
    const Task task = ds_.task();
    const double node_impurity = total.impurity(task);

    const auto features = eligible_features(node_id);
    NodeStats left;
    for (const std::uint32_t j : features) {
      const auto& order = columns[j];
      const auto col = ds_.feature(j);
      left.init(task, ds_.n_classes());
      for (std::size_t pos = 0; pos + 1 < m; ++pos) {
        const std::uint32_t row = order[pos];
        left.add(theta_[row], ds_.y(row), task);
        const double v = col[row];
        const double v_next = col[order[pos + 1]];
        if (v == v_next) continue;  // candidates only between distinct values
        if (left.count < config_.min_leaf_count) continue;
        if (total.count - left.count < config_.min_leaf_count) break;  // only shrinks
        const double right_w = total.w - left.w;
        if (config_.min_leaf_weight && (left.w < min_child_weight_ || right_w < min_child_weight_))
          continue;
        double score;
        if (task == Task::kRegression) {
          const double left_imp = std::max(0.0, left.wyy - left.wy * left.wy / left.w);
          const double right_wy = total.wy - left.wy;
          const double right_imp =
              std::max(0.0, (total.wyy - left.wyy) - right_wy * right_wy / right_w);
          score = left_imp + right_imp;
        } else {
          double left_ss = 0.0, right_ss = 0.0;
          for (std::size_t k = 0; k < left.class_w.size(); ++k) {
            left_ss += left.class_w[k] * left.class_w[k];
            const double rc = total.class_w[k] - left.class_w[k];
            right_ss += rc * rc;
          }
          score = std::max(0.0, left.w - left_ss / left.w) +
                  std::max(0.0, right_w - right_ss / right_w);
        }
        if (score < best.child_sum) {
          double threshold = (v + v_next) / 2.0;
          if (!(threshold > v) || !(threshold < v_next)) threshold = v;  // adjacent doubles
          best.rule = {j, threshold};
          best.child_sum = score;
          best.left = left;
          best.left_size = static_cast<std::uint32_t>(pos + 1);
          best.found = true;
        }
      }
    }
    if (best.found && !(best.child_sum < node_impurity)) best.found = false;
    if (best.found) best.right = subtract(total, best.left, task);
    return best;
  }

 private:
  std::vector<std::uint32_t> eligible_features(std::uint32_t node_id) const {
    const std::uint32_t p = static_cast<std::uint32_t>(ds_.n_features());
    std::vector<std::uint32_t> features(p);
    for (std::uint32_t j = 0; j < p; ++j) features[j] = j;
    if (!config_.feature_subset_size || *config_.feature_subset_size >= p) return features;
    const std::uint32_t m = *config_.feature_subset_size;
    Rng rng(derive_seed(config_.seed, node_id));
    for (std::uint32_t i = 0; i < m; ++i) {
      const std::uint64_t j = i + rng.next_below(p - i);
      std::swap(features[i], features[j]);
    }
    features.resize(m);
    std::sort(features.begin(), features.end());
    return features;
  }

  const Dataset& ds_;
  std::span<const double> theta_;
  const FitConfig& config_;
  double min_child_weight_ = 0.0;
};

}  // namespace detail

/// Weighted node impurity on the unnormalized scale: regression is
/// sum_i theta_i (y_i - mu)^2 with mu the weighted mean; classification is
/// |theta| (1 - sum_k p_k^2) with weighted class proportions p, mass-scaled
/// so parent-child differences are comparable.
inline double node_impurity(std::span<const double> responses, std::span<const double> weights,
                            Task task, std::uint32_t n_classes = 0) {
  if (responses.empty() || responses.size() != weights.size())
    throw DataError("node_impurity: responses and weights must be nonempty and equal length");
  double total = 0.0;
  for (const double w : weights) total += w;
  if (!(total > 0.0)) throw DataError("node_impurity: total weight must be positive");
  if (task == Task::kRegression) {
    double mean = 0.0;
    for (std::size_t i = 0; i < responses.size(); ++i) mean += weights[i] * responses[i];
    mean /= total;
    double out = 0.0;
    for (std::size_t i = 0; i < responses.size(); ++i) {
      const double d = responses[i] - mean;
      out += weights[i] * d * d;
    }
    return out;
  }
  if (n_classes == 0) {
    for (const double r : responses)
      n_classes = std::max(n_classes, static_cast<std::uint32_t>(r) + 1);
  }
  std::vector<double> class_w(n_classes, 0.0);
  for (std::size_t i = 0; i < responses.size(); ++i)
    class_w[static_cast<std::size_t>(responses[i])] += weights[i];
  double ss = 0.0;
  for (const double cw : class_w) ss += cw * cw;
  return total * (1.0 - ss / (total * total));
}

/// Best split of the given rows: evaluates every midpoint between consecutive
/// distinct values of each eligible feature, restricted to rows with positive
/// weight; children must both satisfy the leaf constraints and the split must
/// strictly reduce impurity. Ties break on (child impurity sum, feature,
/// threshold).
inline std::optional<SplitRule> best_split(std::span<const std::uint32_t> node_rows,
                                           const Dataset& ds, const WeightVector& weights,
                                           const FitConfig& config) {
  config.validate();
  if (weights.size() != ds.n_rows())
    throw DataError("best_split: weight vector length does not match dataset");
  const auto theta = weights.values();

  std::vector<char> in_node(ds.n_rows(), 0);
  for (const std::uint32_t i : node_rows) {
    if (i >= ds.n_rows()) throw DataError("best_split: row index out of range");
    if (theta[i] > 0.0) in_node[i] = 1;
  }

  detail::NodeStats total;
  total.init(ds.task(), ds.n_classes());
  std::vector<std::vector<std::uint32_t>> columns(ds.n_features());
  for (std::size_t j = 0; j < ds.n_features(); ++j) {
    for (const std::uint32_t row : ds.sorted_rows(j))
      if (in_node[row]) columns[j].push_back(row);
  }
  if (columns[0].empty()) throw DataError("best_split: node has no positive-weight rows");
  for (const std::uint32_t row : columns[0]) total.add(theta[row], ds.y(row), ds.task());

  detail::SplitSearcher searcher(ds, theta, config, weights.total());
  const auto result = searcher.search(columns, total, 0);
  if (!result.found) return std::nullopt;
  return result.rule;
}

/// Weighted CART: greedy recursive partitioning until no node can split.
/// Growth is best-first by impurity reduction, which makes the max_leaves cap
/// and the recorded split order well defined; without a cap the resulting
/// tree is identical to depth-first growth. Zero-weight rows are invisible to
/// the fit. Deterministic given (dataset, weights, config, row_subset).
inline Tree fit_tree(const Dataset& ds, const WeightVector& weights, const FitConfig& config,
                     const std::vector<std::uint32_t>* row_subset = nullptr) {
  config.validate();
  if (weights.size() != ds.n_rows())
    throw DataError("fit_tree: weight vector length does not match dataset");
  if (row_subset && row_subset->empty()) throw DataError("fit_tree: empty row subset");
  const auto theta = weights.values();
  const Task task = ds.task();
  const std::uint32_t n_classes = ds.n_classes();

  // Root columns: pre-sorted dataset order filtered to the fit's rows.
  std::vector<char> in_fit(ds.n_rows(), 0);
  double total_fit_weight = 0.0;
  if (row_subset) {
    for (const std::uint32_t i : *row_subset) {
      if (i >= ds.n_rows()) throw DataError("fit_tree: row index out of range");
      if (theta[i] > 0.0 && !in_fit[i]) {
        in_fit[i] = 1;
        total_fit_weight += theta[i];
      }
    }
  } else {
    for (std::uint32_t i = 0; i < ds.n_rows(); ++i)
      if (theta[i] > 0.0) {
        in_fit[i] = 1;
        total_fit_weight += theta[i];
      }
  }
  const std::size_t p = ds.n_features();
  std::vector<std::vector<std::uint32_t>> root_columns(p);
  for (std::size_t j = 0; j < p; ++j) {
    for (const std::uint32_t row : ds.sorted_rows(j))
      if (in_fit[row]) root_columns[j].push_back(row);
  }
  if (root_columns[0].empty())
    throw DataError("fit_tree: no rows with positive weight to fit on");

  detail::NodeStats root_stats;
  root_stats.init(task, n_classes);
  for (const std::uint32_t row : root_columns[0]) root_stats.add(theta[row], ds.y(row), task);

  Tree tree;
  tree.task = task;
  tree.n_classes = n_classes;
  tree.n_features = static_cast<std::uint32_t>(p);
  tree.config = config;

  auto make_node = [&](const detail::NodeStats& stats, std::uint32_t depth) {
    TreeNode node;
    node.weight_mass = stats.w;
    node.count = stats.count;
    node.depth = depth;
    if (task == Task::kRegression) {
      node.value = stats.wy / stats.w;
    } else {
      node.class_probs.resize(n_classes);
      for (std::uint32_t k = 0; k < n_classes; ++k) node.class_probs[k] = stats.class_w[k] / stats.w;
    }
    tree.nodes.push_back(std::move(node));
    return static_cast<std::uint32_t>(tree.nodes.size() - 1);
  };

  struct Pending {
    std::uint32_t node_id;
    std::vector<std::vector<std::uint32_t>> columns;
    detail::NodeStats stats;
    detail::SplitSearchResult split;
  };
  struct HeapEntry {
    double reduction;
    std::uint32_t node_id;
    std::size_t slot;
    bool operator<(const HeapEntry& other) const {
      if (reduction != other.reduction) return reduction < other.reduction;
      return node_id > other.node_id;  // equal gains: lower node id first
    }
  };

  detail::SplitSearcher searcher(ds, theta, config, total_fit_weight);
  std::vector<Pending> slots;
  std::priority_queue<HeapEntry> frontier;

  auto enqueue = [&](std::uint32_t node_id, std::vector<std::vector<std::uint32_t>>&& columns,
                     const detail::NodeStats& stats) {
    auto split = searcher.search(columns, stats, node_id);
    if (!split.found) return;  // terminal: buffers release here
    const double reduction = stats.impurity(task) - split.child_sum;
    slots.push_back({node_id, std::move(columns), stats, std::move(split)});
    frontier.push({reduction, node_id, slots.size() - 1});
  };

  const std::uint32_t root_id = make_node(root_stats, 0);
  enqueue(root_id, std::move(root_columns), root_stats);

  std::uint32_t leaves = 1;
  std::int32_t order = 0;
  std::vector<char> go_left(ds.n_rows(), 0);  // reused across splits
  while (!frontier.empty()) {
    if (config.max_leaves && leaves >= *config.max_leaves) break;
    const HeapEntry top = frontier.top();
    frontier.pop();
    Pending work = std::move(slots[top.slot]);

    tree.nodes[work.node_id].split = work.split.rule;
    tree.nodes[work.node_id].split_order = order++;

    // Left membership comes from the split feature's sorted column prefix.
    const auto& split_col = work.columns[work.split.rule.feature];
    for (std::uint32_t pos = 0; pos < work.split.left_size; ++pos) go_left[split_col[pos]] = 1;

    std::vector<std::vector<std::uint32_t>> left_cols(p), right_cols(p);
    for (std::size_t j = 0; j < p; ++j) {
      left_cols[j].reserve(work.split.left.count);
      right_cols[j].reserve(work.split.right.count);
      for (const std::uint32_t row : work.columns[j])
        (go_left[row] ? left_cols[j] : right_cols[j]).push_back(row);
    }
    for (std::uint32_t pos = 0; pos < work.split.left_size; ++pos) go_left[split_col[pos]] = 0;
    work.columns.clear();

    const std::uint32_t depth = tree.nodes[work.node_id].depth + 1;
    const std::uint32_t left_id = make_node(work.split.left, depth);
    const std::uint32_t right_id = make_node(work.split.right, depth);
    tree.nodes[work.node_id].left = static_cast<std::int32_t>(left_id);
    tree.nodes[work.node_id].right = static_cast<std::int32_t>(right_id);
    leaves += 1;

    enqueue(left_id, std::move(left_cols), work.split.left);
    enqueue(right_id, std::move(right_cols), work.split.right);
  }

  return tree;
}

/// Routes one feature row to its leaf and returns the leaf prediction.
inline double predict_tree(const Tree& tree, std::span<const double> x) {
  return tree.predict(x);
}

}  // namespace bforest
