#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bforest/csv.hpp"
#include "bforest/dataset.hpp"
#include "bforest/rng.hpp"
#include "bforest/tree.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return BFOREST_DATA_DIR; }
inline std::filesystem::path config_dir() { return BFOREST_CONFIG_DIR; }
inline std::string cli_path() { return BFOREST_CLI_PATH; }

inline bforest::Dataset load_california() {
  bforest::CsvSchema schema;
  schema.task = bforest::Task::kRegression;
  schema.roles["median_house_value"] = bforest::ColumnRole::kResponse;
  return bforest::load_csv(data_dir() / "california_housing.csv", schema);
}

inline bforest::Dataset load_wine() {
  bforest::CsvSchema schema;
  schema.task = bforest::Task::kRegression;
  schema.roles["quality"] = bforest::ColumnRole::kResponse;
  schema.roles["color"] = bforest::ColumnRole::kCategoricalFeature;
  return bforest::load_csv(data_dir() / "winequality.csv", schema);
}

/// Random dataset on a dyadic grid: features are multiples of 1/16 in
/// [0, 16), regression responses multiples of 1/4 in [0, 8), class labels in
/// {0..n_classes-1}. On this grid every weighted sum the fit computes is
/// exact in double precision, so structurally independent implementations
/// agree bit for bit.
inline bforest::Dataset random_grid_dataset(std::size_t n, std::size_t p, bforest::Task task,
                                            std::uint64_t seed, std::uint32_t n_classes = 3) {
  bforest::Rng rng(seed);
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  std::vector<std::string> names(p);
  for (std::size_t j = 0; j < p; ++j) {
    names[j] = "f" + std::to_string(j);
    for (std::size_t i = 0; i < n; ++i)
      cols[j][i] = static_cast<double>(rng.next_below(256)) / 16.0;
  }
  std::vector<double> y(n);
  std::vector<std::string> labels;
  if (task == bforest::Task::kRegression) {
    for (std::size_t i = 0; i < n; ++i)
      y[i] = static_cast<double>(rng.next_below(32)) / 4.0;
  } else {
    for (std::size_t i = 0; i < n; ++i)
      y[i] = static_cast<double>(rng.next_below(n_classes));
    for (std::uint32_t k = 0; k < n_classes; ++k) labels.push_back("c" + std::to_string(k));
  }
  return bforest::Dataset(std::move(cols), std::move(names), std::move(y), task,
                          std::move(labels));
}

/// Continuous random regression dataset (no grid).
inline bforest::Dataset random_dataset(std::size_t n, std::size_t p, std::uint64_t seed) {
  bforest::Rng rng(seed);
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  std::vector<std::string> names(p);
  for (std::size_t j = 0; j < p; ++j) {
    names[j] = "f" + std::to_string(j);
    for (std::size_t i = 0; i < n; ++i) cols[j][i] = rng.next_unit();
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i)
    y[i] = cols[0][i] * 3.0 + rng.next_normal();
  return bforest::Dataset(std::move(cols), std::move(names), std::move(y),
                          bforest::Task::kRegression);
}

/// Structural equality of two library trees, ignoring node numbering (which
/// depends on best-first pop order). Split rules compare exactly; leaf values
/// within rel_tol (0 = bitwise).
inline bool trees_equivalent(const bforest::Tree& a, const bforest::Tree& b, double rel_tol = 0.0,
                             std::uint32_t ia = 0, std::uint32_t ib = 0) {
  const auto& na = a.nodes[ia];
  const auto& nb = b.nodes[ib];
  if (na.is_leaf() != nb.is_leaf()) return false;
  if (na.count != nb.count) return false;
  if (na.is_leaf()) {
    if (a.task == bforest::Task::kRegression) {
      if (rel_tol == 0.0) return na.value == nb.value;
      return std::abs(na.value - nb.value) <=
             rel_tol * std::max(std::abs(na.value), std::abs(nb.value));
    }
    if (na.class_probs.size() != nb.class_probs.size()) return false;
    for (std::size_t k = 0; k < na.class_probs.size(); ++k) {
      const double d = std::abs(na.class_probs[k] - nb.class_probs[k]);
      if (d > rel_tol) return false;
    }
    return true;
  }
  if (na.split.feature != nb.split.feature || na.split.threshold != nb.split.threshold)
    return false;
  return trees_equivalent(a, b, rel_tol, na.left, nb.left) &&
         trees_equivalent(a, b, rel_tol, na.right, nb.right);
}

inline std::filesystem::path temp_path(const std::string& name) {
  static const auto dir = [] {
    auto d = std::filesystem::temp_directory_path() / "bforest_tests";
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir / name;
}

}  // namespace testutil
