#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bforest/dataset.hpp"
#include "bforest/error.hpp"

namespace bforest {

inline double mean_of(std::span<const double> values) {
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

/// Root mean square error.
inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw DataError("rmse: prediction and truth must be nonempty and equal length");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

/// Misclassification rate: fraction of mismatched labels.
inline double mcr(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> truth) {
  if (pred.empty() || pred.size() != truth.size())
    throw DataError("mcr: prediction and truth must be nonempty and equal length");
  std::size_t miss = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) miss += pred[i] != truth[i] ? 1 : 0;
  return static_cast<double>(miss) / static_cast<double>(pred.size());
}

/// MCR of probability predictions against a classification dataset;
/// argmax with lowest-index tie break.
inline double mcr_from_proba(const std::vector<std::vector<double>>& proba, const Dataset& test) {
  std::vector<std::uint32_t> pred(proba.size());
  for (std::size_t i = 0; i < proba.size(); ++i) {
    std::uint32_t best = 0;
    for (std::uint32_t k = 1; k < proba[i].size(); ++k)
      if (proba[i][k] > proba[i][best]) best = k;
    pred[i] = best;
  }
  std::vector<std::uint32_t> truth(test.n_rows());
  for (std::size_t i = 0; i < test.n_rows(); ++i) truth[i] = test.label(i);
  return mcr(pred, truth);
}

}  // namespace bforest
