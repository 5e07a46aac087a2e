#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bforest/csv.hpp"
#include "bforest/dataset.hpp"
#include "bforest/ebf.hpp"
#include "bforest/error.hpp"
#include "bforest/forest.hpp"
#include "bforest/parallel.hpp"
#include "bforest/tree.hpp"

namespace bforest {

/// Standard normal CDF via erfc; absolute error well below 1e-12.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Taylor-approximate impurity-difference statistics of one candidate split
/// against the unit-weight optimal reference split at a node.
struct CandidateSplitStats {
  SplitRule rule;
  double dbar = 0.0;        // mean element of the difference vector d
  double dss_over_n = 0.0;  // d'd / n
  double z = 0.0;           // |dbar| / sqrt(d'd/n)
  std::size_t n = 0;        // node sample size
  bool exact_tie = false;   // candidate partitions the node exactly like the reference
};

namespace detail {

struct BinarizedSplit {
  std::vector<char> right;  // per node row: 1 if x > threshold
  double mean_left = 0.0;
  double mean_right = 0.0;
  std::size_t n_right = 0;
};

inline BinarizedSplit binarize(std::span<const std::uint32_t> node_rows, const Dataset& ds,
                               const SplitRule& rule) {
  BinarizedSplit out;
  out.right.resize(node_rows.size());
  double sum_left = 0.0, sum_right = 0.0;
  std::size_t n_left = 0;
  for (std::size_t i = 0; i < node_rows.size(); ++i) {
    const std::uint32_t row = node_rows[i];
    const bool right = ds.value(row, rule.feature) > rule.threshold;
    out.right[i] = right ? 1 : 0;
    if (right) {
      sum_right += ds.y(row);
      out.n_right += 1;
    } else {
      sum_left += ds.y(row);
      n_left += 1;
    }
  }
  if (n_left == 0 || out.n_right == 0)
    throw DataError("stability: candidate split produces an empty child");
  out.mean_left = sum_left / static_cast<double>(n_left);
  out.mean_right = sum_right / static_cast<double>(out.n_right);
  return out;
}

/// Unit-weight per-observation impurity (1/n normalization) of a binarized
/// split, used for the reference-optimality check.
inline double unit_impurity(std::span<const std::uint32_t> node_rows, const Dataset& ds,
                            const BinarizedSplit& split) {
  double sum = 0.0;
  for (std::size_t i = 0; i < node_rows.size(); ++i) {
    const double mean = split.right[i] ? split.mean_right : split.mean_left;
    const double d = ds.y(node_rows[i]) - mean;
    sum += d * d;
  }
  return sum / static_cast<double>(node_rows.size());
}

}  // namespace detail

/// Elementwise difference statistics between the reference split (the
/// unit-weight impurity minimizer, caller-verified) and each candidate:
/// d_i = m_ref(i)^2 - m_j(i)^2 - 2 y_i (m_ref(i) - m_j(i)) with m the
/// unweighted child mean of the group containing i. Candidates identical to
/// the reference (d = 0 elementwise) are flagged as exact ties.
inline std::vector<CandidateSplitStats> delta_stats(std::span<const std::uint32_t> node_rows,
                                                    const Dataset& ds,
                                                    const SplitRule& reference,
                                                    std::span<const SplitRule> candidates,
                                                    unsigned n_threads = 0) {
  if (node_rows.empty()) throw DataError("delta_stats: empty node");
  if (ds.task() != Task::kRegression)
    throw DataError("delta_stats: defined for regression responses");
  const std::size_t n = node_rows.size();
  const auto ref = detail::binarize(node_rows, ds, reference);

  std::vector<CandidateSplitStats> stats(candidates.size());
  const double scale = 1.0 + detail::unit_impurity(node_rows, ds, ref);
  parallel_for(candidates.size(), n_threads, [&](std::size_t c) {
    const auto& rule = candidates[c];
    const auto cand = detail::binarize(node_rows, ds, rule);
    CandidateSplitStats s;
    s.rule = rule;
    s.n = n;
    double sum_d = 0.0, sum_dd = 0.0;
    bool all_zero = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = ref.right[i] ? ref.mean_right : ref.mean_left;
      const double b = cand.right[i] ? cand.mean_right : cand.mean_left;
      const double d = a * a - b * b - 2.0 * ds.y(node_rows[i]) * (a - b);
      sum_d += d;
      sum_dd += d * d;
      all_zero = all_zero && d == 0.0;
    }
    s.dbar = sum_d / static_cast<double>(n);
    s.dss_over_n = sum_dd / static_cast<double>(n);
    s.exact_tie = all_zero;
    s.z = s.exact_tie || s.dss_over_n == 0.0 ? 0.0 : std::abs(s.dbar) / std::sqrt(s.dss_over_n);
    if (s.dbar > 1e-9 * scale)
      throw DataError("delta_stats: reference split is not the unit-weight optimum");
    stats[c] = std::move(s);
  });
  return stats;
}

/// Lower bounds on the probability that a posterior weight draw reproduces
/// the reference split: the Phi-based bound 1 - sum_j Phi(-sqrt(n) z_j) and
/// the looser exponential relaxation. Exact ties are excluded; an all-tie
/// input has no defined bound.
inline std::pair<double, double> match_probability_gaussian(
    std::span<const CandidateSplitStats> stats) {
  double phi_sum = 0.0, exp_sum = 0.0;
  std::size_t competitors = 0, ties = 0;
  for (const auto& s : stats) {
    if (s.exact_tie) {
      ties += 1;
      continue;
    }
    competitors += 1;
    const double root_n = std::sqrt(static_cast<double>(s.n));
    phi_sum += normal_cdf(-root_n * s.z);
    if (s.z > 0.0) {
      exp_sum += std::exp(-static_cast<double>(s.n) * s.z * s.z / 2.0) /
                 (s.z * root_n * std::sqrt(2.0 * std::numbers::pi));
    } else {
      exp_sum = std::numeric_limits<double>::infinity();
    }
  }
  if (competitors == 0 && ties > 0)
    throw DataError("match_probability_gaussian: all candidates tie the reference");
  const double gaussian = std::clamp(1.0 - phi_sum, 0.0, 1.0);
  const double exponential = std::clamp(1.0 - exp_sum, 0.0, 1.0);
  return {gaussian, exponential};
}

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint32_t draws = 0;
};

/// Monte Carlo match probability: draws B exponential weight vectors and, for
/// each, finds the exact (not Taylor-approximate) weighted-impurity-minimizing
/// candidate; reports the fraction whose partition matches the unit-weight
/// reference, with a binomial standard error. Duplicate candidate partitions
/// are collapsed first.
inline McEstimate match_probability_mc(std::span<const std::uint32_t> node_rows,
                                       const Dataset& ds, std::span<const SplitRule> candidates,
                                       std::uint32_t n_draws, std::uint64_t seed,
                                       unsigned n_threads = 0) {
  if (n_draws < 1) throw ConfigError("match_probability_mc: need at least one draw");
  if (candidates.empty()) throw DataError("match_probability_mc: no candidates");
  const std::size_t n = node_rows.size();

  // Collapse duplicate partitions (a partition and its mirror are the same).
  std::vector<std::vector<char>> partitions;
  for (const auto& rule : candidates) {
    auto bin = detail::binarize(node_rows, ds, rule);
    if (bin.right[0]) for (auto& b : bin.right) b = b ? 0 : 1;
    bool seen = false;
    for (const auto& existing : partitions) seen = seen || existing == bin.right;
    if (!seen) partitions.push_back(std::move(bin.right));
  }

  // Unit-weight reference: minimal exact impurity, lowest index on ties.
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = ds.y(node_rows[i]);
  auto exact_scores = [&](std::span<const double> theta, std::vector<double>& out) {
    // Minimizing sum_i theta_i (y_i - mu(side_i))^2 is equivalent to
    // maximizing (sum_L theta y)^2/|theta_L| + (sum_R theta y)^2/|theta_R|.
    double total_w = 0.0, total_wy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total_w += theta[i];
      total_wy += theta[i] * y[i];
    }
    out.resize(partitions.size());
    for (std::size_t c = 0; c < partitions.size(); ++c) {
      const auto& side = partitions[c];
      double w1 = 0.0, wy1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (side[i]) {
          w1 += theta[i];
          wy1 += theta[i] * y[i];
        }
      }
      const double w0 = total_w - w1;
      const double wy0 = total_wy - wy1;
      // Negated gain: smaller is better, matching impurity ordering.
      out[c] = -(w1 > 0.0 ? wy1 * wy1 / w1 : 0.0) - (w0 > 0.0 ? wy0 * wy0 / w0 : 0.0);
    }
  };

  std::vector<double> unit_theta(n, 1.0), scores;
  exact_scores(unit_theta, scores);
  const std::size_t reference =
      std::min_element(scores.begin(), scores.end()) - scores.begin();

  std::vector<char> matches(n_draws, 0);
  parallel_for(n_draws, n_threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b + 1));
    std::vector<double> theta(n);
    for (std::size_t i = 0; i < n; ++i) theta[i] = rng.next_exponential();
    std::vector<double> draw_scores;
    exact_scores(theta, draw_scores);
    const std::size_t winner =
        std::min_element(draw_scores.begin(), draw_scores.end()) - draw_scores.begin();
    matches[b] = winner == reference ? 1 : 0;
  });

  McEstimate mc;
  mc.draws = n_draws;
  std::size_t hits = 0;
  for (const char m : matches) hits += m;
  mc.estimate = static_cast<double>(hits) / static_cast<double>(n_draws);
  mc.std_error = std::sqrt(mc.estimate * (1.0 - mc.estimate) / static_cast<double>(n_draws));
  return mc;
}

namespace detail {

inline std::vector<char> split_partition(std::span<const std::uint32_t> node_rows,
                                         const Dataset& ds, const SplitRule& rule) {
  std::vector<char> side(node_rows.size());
  for (std::size_t i = 0; i < node_rows.size(); ++i)
    side[i] = ds.value(node_rows[i], rule.feature) > rule.threshold ? 1 : 0;
  if (side[0]) for (auto& s : side) s = s ? 0 : 1;  // orientation-free
  return side;
}

}  // namespace detail

/// Monte Carlo match probability over the node's full CART candidate set
/// (every feature/threshold midpoint). Each draw reruns the exact weighted
/// split search; a draw matches when its optimal partition equals the
/// unit-weight one. Scales to nodes where enumerating candidates per draw
/// would not.
inline McEstimate match_probability_mc(std::span<const std::uint32_t> node_rows,
                                       const Dataset& ds, std::uint32_t n_draws,
                                       std::uint64_t seed, unsigned n_threads = 0) {
  if (n_draws < 1) throw ConfigError("match_probability_mc: need at least one draw");
  FitConfig config;  // min_leaf_count 1: the unrestricted candidate set
  const std::vector<std::uint32_t> rows(node_rows.begin(), node_rows.end());

  const auto unit_best = best_split(rows, ds, WeightVector::ones(ds.n_rows()), config);
  if (!unit_best)
    throw DataError("match_probability_mc: node has no improving unit-weight split");
  const auto reference_side = detail::split_partition(rows, ds, *unit_best);

  std::vector<char> matches(n_draws, 0);
  parallel_for(n_draws, n_threads, [&](std::size_t b) {
    Rng rng(derive_seed(seed, b + 1));
    std::vector<double> theta(ds.n_rows(), 1.0);
    for (const std::uint32_t i : rows) theta[i] = rng.next_exponential();
    const auto draw_best = best_split(rows, ds, WeightVector(std::move(theta)), config);
    if (!draw_best) return;
    matches[b] = detail::split_partition(rows, ds, *draw_best) == reference_side ? 1 : 0;
  });

  McEstimate mc;
  mc.draws = n_draws;
  std::size_t hits = 0;
  for (const char m : matches) hits += m;
  mc.estimate = static_cast<double>(hits) / static_cast<double>(n_draws);
  mc.std_error = std::sqrt(mc.estimate * (1.0 - mc.estimate) / static_cast<double>(n_draws));
  return mc;
}

struct SplitHistogramEntry {
  std::uint32_t feature = 0;
  double threshold = 0.0;
  std::uint32_t count = 0;
  double frequency = 0.0;
};

struct TrunkClassStats {
  std::string signature;
  std::uint32_t count = 0;
  double frequency = 0.0;
};

/// Posterior split-location summaries over B weighted trunk fits.
///
/// Trunk equality comes in three grades: exact (topology, features and
/// bit-identical thresholds), tolerant (thresholds bucketed at 1e-9), and
/// topology (thresholds ignored). With continuous features the re-optimized
/// threshold differs in nearly every draw, so the topology classes are the
/// ones that concentrate.
struct TrunkPosterior {
  std::vector<SplitHistogramEntry> depth1, depth2;  // splits at tree depth 1 and 2
  std::vector<SplitHistogramEntry> order1, order2;  // first and second split applied
  std::vector<TrunkClassStats> classes_exact;
  std::vector<TrunkClassStats> classes_tolerant;
  std::vector<TrunkClassStats> classes_topology;
  std::uint32_t draws = 0;
};

namespace detail {

inline void add_histogram_entry(std::map<std::pair<std::uint32_t, double>, std::uint32_t>& hist,
                                const SplitRule& rule) {
  hist[{rule.feature, rule.threshold}] += 1;
}

inline std::vector<SplitHistogramEntry> finish_histogram(
    const std::map<std::pair<std::uint32_t, double>, std::uint32_t>& hist) {
  std::uint64_t total = 0;
  for (const auto& [key, count] : hist) total += count;
  std::vector<SplitHistogramEntry> out;
  for (const auto& [key, count] : hist)
    out.push_back({key.first, key.second, count,
                   static_cast<double>(count) / static_cast<double>(total)});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.feature != b.feature) return a.feature < b.feature;
    return a.threshold < b.threshold;
  });
  return out;
}

enum class SignatureGrade { kExact, kTolerant, kTopology };

/// Canonical preorder signature of a trunk; creation order does not matter.
inline std::string trunk_signature(const Tree& tree, SignatureGrade grade,
                                   std::uint32_t id = 0) {
  const auto& node = tree.nodes[id];
  if (node.is_leaf()) return "L;";
  std::string sig = "S" + std::to_string(node.split.feature);
  switch (grade) {
    case SignatureGrade::kExact:
      sig += ":" + format_double(node.split.threshold);
      break;
    case SignatureGrade::kTolerant:
      sig += ":" + std::to_string(std::llround(node.split.threshold / 1e-9));
      break;
    case SignatureGrade::kTopology:
      break;
  }
  sig += ";";
  return sig + trunk_signature(tree, grade, node.left) +
         trunk_signature(tree, grade, node.right);
}

inline std::vector<TrunkClassStats> finish_classes(const std::map<std::string, std::uint32_t>& by_sig,
                                                   std::uint32_t draws) {
  std::vector<TrunkClassStats> out;
  for (const auto& [sig, count] : by_sig)
    out.push_back({sig, count, static_cast<double>(count) / static_cast<double>(draws)});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.signature < b.signature;
  });
  return out;
}

}  // namespace detail

/// Fits B trunks under posterior weights and aggregates the split locations
/// at depth 1 and 2, the first and second splits in application order, and
/// full-trunk structural equality classes.
inline TrunkPosterior split_posterior_distribution(const Dataset& ds,
                                                   const TrunkConfig& trunk_config,
                                                   std::uint32_t n_draws, WeightMode mode,
                                                   std::uint64_t seed, unsigned n_threads = 0) {
  if (n_draws < 1) throw ConfigError("split_posterior_distribution: need at least one draw");
  trunk_config.validate();
  const FitConfig fit_config = trunk_config.to_fit_config();

  std::vector<Tree> trunks(n_draws);
  parallel_for(n_draws, n_threads, [&](std::size_t b) {
    const std::uint64_t draw_seed = derive_seed(seed, b + 1);
    const WeightVector theta = draw_weights(ds.n_rows(), mode, draw_seed);
    trunks[b] = fit_tree(ds, theta, fit_config);
  });

  std::map<std::pair<std::uint32_t, double>, std::uint32_t> depth1, depth2, order1, order2;
  std::map<std::string, std::uint32_t> exact_classes, tolerant_classes, topology_classes;
  for (const auto& trunk : trunks) {
    for (const auto& node : trunk.nodes) {
      if (node.is_leaf()) continue;
      if (node.depth == 0) detail::add_histogram_entry(depth1, node.split);
      if (node.depth == 1) detail::add_histogram_entry(depth2, node.split);
      if (node.split_order == 0) detail::add_histogram_entry(order1, node.split);
      if (node.split_order == 1) detail::add_histogram_entry(order2, node.split);
    }
    exact_classes[detail::trunk_signature(trunk, detail::SignatureGrade::kExact)] += 1;
    tolerant_classes[detail::trunk_signature(trunk, detail::SignatureGrade::kTolerant)] += 1;
    topology_classes[detail::trunk_signature(trunk, detail::SignatureGrade::kTopology)] += 1;
  }

  TrunkPosterior out;
  out.draws = n_draws;
  out.depth1 = detail::finish_histogram(depth1);
  out.depth2 = detail::finish_histogram(depth2);
  out.order1 = detail::finish_histogram(order1);
  out.order2 = detail::finish_histogram(order2);
  out.classes_exact = detail::finish_classes(exact_classes, n_draws);
  out.classes_tolerant = detail::finish_classes(tolerant_classes, n_draws);
  out.classes_topology = detail::finish_classes(topology_classes, n_draws);
  return out;
}

/// Full stability report: candidate statistics and match-probability bounds
/// for one node (the root by convention in the CLI), a Monte Carlo estimate,
/// and posterior split histograms over weighted trunk refits.
struct StabilityReport {
  std::size_t node_n = 0;
  SplitRule reference;
  std::vector<CandidateSplitStats> stats;
  double gaussian_bound = 1.0;
  double exp_bound = 1.0;
  std::optional<McEstimate> mc;
  TrunkPosterior histograms;
};

/// Candidate set for the node-level analysis: every (feature, midpoint)
/// between consecutive distinct feature values over the node rows.
inline std::vector<SplitRule> node_candidates(std::span<const std::uint32_t> node_rows,
                                              const Dataset& ds) {
  std::vector<char> in_node(ds.n_rows(), 0);
  for (const std::uint32_t i : node_rows) in_node[i] = 1;
  std::vector<SplitRule> out;
  for (std::uint32_t j = 0; j < ds.n_features(); ++j) {
    const auto col = ds.feature(j);
    double prev = 0.0;
    bool have_prev = false;
    for (const std::uint32_t row : ds.sorted_rows(j)) {
      if (!in_node[row]) continue;
      const double v = col[row];
      if (have_prev && v != prev) {
        double threshold = (prev + v) / 2.0;
        if (!(threshold > prev) || !(threshold < v)) threshold = prev;
        out.push_back({j, threshold});
      }
      prev = v;
      have_prev = true;
    }
  }
  return out;
}

}  // namespace bforest
