#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "bforest/dataset.hpp"
#include "helpers.hpp"

using namespace bforest;

TEST_CASE("dataset rejects malformed input", "[dataset]") {
  CHECK_THROWS_AS(Dataset({}, {}, {1.0}, Task::kRegression), DataError);
  CHECK_THROWS_AS(Dataset({{1.0, 2.0}}, {"a"}, {}, Task::kRegression), DataError);
  CHECK_THROWS_AS(Dataset({{1.0, std::nan("")}}, {"a"}, {0.0, 1.0}, Task::kRegression),
                  DataError);
  CHECK_THROWS_AS(Dataset({{1.0, 2.0}}, {"a"}, {0.0, 1.5}, Task::kClassification,
                          {"x", "y"}),
                  DataError);
}

TEST_CASE("subset keeps rows and metadata", "[dataset]") {
  const auto ds = testutil::random_grid_dataset(10, 3, Task::kRegression, 1);
  SECTION("full index list reproduces the dataset") {
    std::vector<std::uint32_t> all(10);
    for (std::uint32_t i = 0; i < 10; ++i) all[i] = i;
    const auto copy = subset(ds, all);
    REQUIRE(copy.n_rows() == ds.n_rows());
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(copy.y(i) == ds.y(i));
      for (std::size_t j = 0; j < 3; ++j) CHECK(copy.value(i, j) == ds.value(i, j));
    }
    CHECK(copy.feature_names() == ds.feature_names());
  }
  SECTION("selection preserves order") {
    const std::vector<std::uint32_t> pick{0, 2};
    const auto two = subset(ds, pick);
    REQUIRE(two.n_rows() == 2);
    CHECK(two.y(0) == ds.y(0));
    CHECK(two.y(1) == ds.y(2));
  }
  SECTION("degenerate inputs") {
    CHECK_THROWS_AS(subset(ds, std::vector<std::uint32_t>{}), DataError);
    CHECK_THROWS_AS(subset(ds, std::vector<std::uint32_t>{10}), DataError);
  }
}

TEST_CASE("weight vector validates and normalizes", "[dataset]") {
  CHECK_THROWS_AS(WeightVector({1.0, -0.5}), DataError);
  CHECK_THROWS_AS(WeightVector({0.0, 0.0}), DataError);
  CHECK_THROWS_AS(WeightVector(std::vector<double>{}), DataError);
  const WeightVector w({1.0, 3.0});
  CHECK(w.total() == 4.0);
  CHECK(w.omega(1) == 0.75);

  Rng rng(3);
  std::vector<double> theta(50);
  for (auto& t : theta) t = rng.next_exponential();
  const WeightVector big(theta);
  double omega_sum = 0.0;
  for (std::size_t i = 0; i < big.size(); ++i) omega_sum += big.omega(i);
  CHECK(std::abs(omega_sum - 1.0) < 1e-12);
}

TEST_CASE("kfold assignments partition the rows", "[dataset]") {
  SECTION("leave-one-out shape") {
    const auto folds = kfold_split(10, 10, 1);
    for (std::uint32_t f = 0; f < 10; ++f) CHECK(folds.test_rows(f).size() == 1);
  }
  SECTION("california fold sizes") {
    const auto folds = kfold_split(20640, 10, 77);
    for (std::uint32_t f = 0; f < 10; ++f) CHECK(folds.test_rows(f).size() == 2064);
  }
  SECTION("precondition violations") {
    CHECK_THROWS_AS(kfold_split(5, 6, 0), ConfigError);
    CHECK_THROWS_AS(kfold_split(5, 1, 0), ConfigError);
  }
  SECTION("partition property and determinism") {
    const auto a = kfold_split(103, 7, 5);
    const auto b = kfold_split(103, 7, 5);
    CHECK(a.fold_of == b.fold_of);
    std::set<std::uint32_t> seen;
    std::size_t smallest = 103, largest = 0;
    for (std::uint32_t f = 0; f < 7; ++f) {
      const auto rows = a.test_rows(f);
      smallest = std::min(smallest, rows.size());
      largest = std::max(largest, rows.size());
      for (const auto r : rows) {
        CHECK(!seen.count(r));
        seen.insert(r);
      }
    }
    CHECK(seen.size() == 103);
    CHECK(largest - smallest <= 1);
  }
}
