#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bforest/error.hpp"
#include "bforest/rng.hpp"

namespace bforest {

enum class Task { kRegression, kClassification };

enum class ColumnRole { kNumericFeature, kCategoricalFeature, kResponse, kIgnore };

/// How one raw input column maps onto the encoded feature matrix. Categorical
/// columns are one-hot expanded over `levels` (sorted), producing one 0/1
/// feature per level named "<column>=<level>".
struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::kNumericFeature;
  std::vector<std::string> levels;
};

/// Encoding recipe recorded at load time; serialized with models so that
/// prediction inputs are expanded exactly like the training file.
struct DataSchema {
  std::vector<ColumnSpec> columns;
  Task task = Task::kRegression;
  std::string response_name;
  std::vector<std::string> class_labels;  // classification: index -> label
};

/// Column-major feature table plus one response column. Immutable once
/// constructed; concurrent readers are safe. Feature columns are pre-sorted
/// at construction so repeated tree fits can skip the per-node sort.
class Dataset {
 public:
  Dataset(std::vector<std::vector<double>> columns,
          std::vector<std::string> feature_names, std::vector<double> response,
          Task task, std::vector<std::string> class_labels = {},
          DataSchema schema = {})
      : columns_(std::move(columns)),
        feature_names_(std::move(feature_names)),
        response_(std::move(response)),
        task_(task),
        class_labels_(std::move(class_labels)),
        schema_(std::move(schema)) {
    if (columns_.empty()) throw DataError("dataset needs at least one feature column");
    if (response_.empty()) throw DataError("dataset needs at least one row");
    if (feature_names_.size() != columns_.size())
      throw DataError("feature name count does not match column count");
    const std::size_t n = response_.size();
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].size() != n)
        throw DataError("feature column '" + feature_names_[j] + "' has wrong length");
      for (double v : columns_[j])
        if (!std::isfinite(v))
          throw DataError("non-finite value in feature column '" + feature_names_[j] + "'");
    }
    for (double v : response_)
      if (!std::isfinite(v)) throw DataError("non-finite value in response column");
    if (task_ == Task::kClassification) {
      if (class_labels_.size() < 2)
        throw DataError("classification dataset needs at least two class labels");
      for (double v : response_) {
        const double r = std::floor(v);
        if (r != v || r < 0 || r >= static_cast<double>(class_labels_.size()))
          throw DataError("classification response must hold dense class indices");
      }
    }
    if (schema_.columns.empty()) {
      // Synthetic datasets get a trivial all-numeric schema.
      schema_.task = task_;
      schema_.response_name = "y";
      schema_.class_labels = class_labels_;
      for (const auto& name : feature_names_)
        schema_.columns.push_back({name, ColumnRole::kNumericFeature, {}});
      schema_.columns.push_back({"y", ColumnRole::kResponse, {}});
    }
    build_sorted_rows();
  }

  std::size_t n_rows() const { return response_.size(); }
  std::size_t n_features() const { return columns_.size(); }
  Task task() const { return task_; }
  std::uint32_t n_classes() const { return static_cast<std::uint32_t>(class_labels_.size()); }

  std::span<const double> feature(std::size_t j) const { return columns_[j]; }
  double value(std::size_t row, std::size_t j) const { return columns_[j][row]; }
  std::span<const double> response() const { return response_; }
  double y(std::size_t row) const { return response_[row]; }
  std::uint32_t label(std::size_t row) const {
    return static_cast<std::uint32_t>(response_[row]);
  }

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::string>& class_labels() const { return class_labels_; }
  const DataSchema& schema() const { return schema_; }

  /// Row indices ordered by (feature value, row index) for one feature.
  std::span<const std::uint32_t> sorted_rows(std::size_t j) const { return sorted_rows_[j]; }

  std::vector<double> row(std::size_t i) const {
    std::vector<double> out(columns_.size());
    for (std::size_t j = 0; j < columns_.size(); ++j) out[j] = columns_[j][i];
    return out;
  }

 private:
  void build_sorted_rows() {
    const std::size_t n = n_rows();
    sorted_rows_.resize(columns_.size());
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      auto& order = sorted_rows_[j];
      order.resize(n);
      std::iota(order.begin(), order.end(), 0u);
      const auto& col = columns_[j];
      std::sort(order.begin(), order.end(), [&col](std::uint32_t a, std::uint32_t b) {
        if (col[a] != col[b]) return col[a] < col[b];
        return a < b;
      });
    }
  }

  std::vector<std::vector<double>> columns_;
  std::vector<std::string> feature_names_;
  std::vector<double> response_;
  Task task_;
  std::vector<std::string> class_labels_;
  DataSchema schema_;
  std::vector<std::vector<std::uint32_t>> sorted_rows_;
};

/// Row subset as a new Dataset, preserving column metadata and the given
/// row order.
inline Dataset subset(const Dataset& ds, std::span<const std::uint32_t> indices) {
  if (indices.empty()) throw DataError("subset: empty index list");
  for (const std::uint32_t i : indices)
    if (i >= ds.n_rows()) throw DataError("subset: row index out of range");
  std::vector<std::vector<double>> cols(ds.n_features());
  for (std::size_t j = 0; j < ds.n_features(); ++j) {
    cols[j].reserve(indices.size());
    const auto src = ds.feature(j);
    for (const std::uint32_t i : indices) cols[j].push_back(src[i]);
  }
  std::vector<double> resp;
  resp.reserve(indices.size());
  for (const std::uint32_t i : indices) resp.push_back(ds.y(i));
  return Dataset(std::move(cols), ds.feature_names(), std::move(resp), ds.task(),
                 ds.class_labels(), ds.schema());
}

/// Per-observation weights theta >= 0 with |theta| > 0; omega(i) is the
/// normalized view theta_i / |theta|.
class WeightVector {
 public:
  explicit WeightVector(std::vector<double> theta) : theta_(std::move(theta)) {
    if (theta_.empty()) throw DataError("weight vector must be nonempty");
    total_ = 0.0;
    for (const double t : theta_) {
      if (!(t >= 0.0) || !std::isfinite(t))
        throw DataError("weights must be finite and nonnegative");
      total_ += t;
    }
    if (!(total_ > 0.0)) throw DataError("weight vector must have positive total");
  }

  static WeightVector ones(std::size_t n) {
    return WeightVector(std::vector<double>(n, 1.0));
  }

  std::size_t size() const { return theta_.size(); }
  double theta(std::size_t i) const { return theta_[i]; }
  double omega(std::size_t i) const { return theta_[i] / total_; }
  double total() const { return total_; }
  std::span<const double> values() const { return theta_; }

 private:
  std::vector<double> theta_;
  double total_ = 0.0;
};

/// k-fold partition of {0..n-1}: every fold nonempty, sizes differing by at
/// most one, each observation in exactly one fold.
struct FoldAssignment {
  std::vector<std::uint32_t> fold_of;
  std::uint32_t k = 0;

  std::vector<std::uint32_t> test_rows(std::uint32_t fold) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) out.push_back(i);
    return out;
  }

  std::vector<std::uint32_t> train_rows(std::uint32_t fold) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) out.push_back(i);
    return out;
  }
};

/// Seeded permutation chunked into k near-equal folds; the first n % k folds
/// take the extra observation.
inline FoldAssignment kfold_split(std::size_t n, std::uint32_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: need at least 2 folds");
  if (k > n) throw ConfigError("kfold_split: more folds than observations");
  Rng rng(seed);
  const auto perm = random_permutation(n, rng);
  FoldAssignment folds;
  folds.k = k;
  folds.fold_of.resize(n);
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::uint32_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t t = 0; t < size; ++t) folds.fold_of[perm[pos++]] = f;
  }
  return folds;
}

}  // namespace bforest
