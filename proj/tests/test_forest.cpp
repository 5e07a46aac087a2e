#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "bforest/forest.hpp"
#include "helpers.hpp"

using namespace bforest;

TEST_CASE("draw_weights by mode", "[forest]") {
  SECTION("unit mode is all ones") {
    const auto w = draw_weights(5, WeightMode::kUnit, 3);
    for (std::size_t i = 0; i < 5; ++i) CHECK(w.theta(i) == 1.0);
  }
  SECTION("multinomial counts sum to n exactly") {
    const auto w = draw_weights(1000, WeightMode::kMultinomial, 3);
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      total += w.theta(i);
      CHECK(w.theta(i) == std::floor(w.theta(i)));
    }
    CHECK(total == 1000.0);
  }
  SECTION("exponential mean is 1 within 5 standard errors") {
    const auto w = draw_weights(100000, WeightMode::kExponential, 3);
    CHECK(std::abs(w.total() / 100000.0 - 1.0) < 0.02);
  }
  SECTION("exponential draws are strictly positive") {
    const auto w = draw_weights(10000, WeightMode::kExponential, 9);
    double least = 1.0;
    for (std::size_t i = 0; i < w.size(); ++i) least = std::min(least, w.theta(i));
    CHECK(least > 0.0);
  }
  SECTION("deterministic given the seed") {
    const auto a = draw_weights(100, WeightMode::kExponential, 5);
    const auto b = draw_weights(100, WeightMode::kExponential, 5);
    for (std::size_t i = 0; i < 100; ++i) CHECK(a.theta(i) == b.theta(i));
  }
}

TEST_CASE("forest fits are deterministic and thread-count independent", "[forest]") {
  const auto ds = testutil::random_dataset(200, 4, 31);
  ForestConfig config;
  config.n_trees = 12;
  config.seed = 99;
  config.tree.min_leaf_count = 3;

  const auto serial = fit_forest(ds, config, 1);
  const auto threaded = fit_forest(ds, config, 4);
  REQUIRE(serial.trees.size() == 12);
  CHECK(serial.tree_seeds == threaded.tree_seeds);
  for (std::size_t b = 0; b < 12; ++b)
    CHECK(testutil::trees_equivalent(serial.trees[b], threaded.trees[b]));

  SECTION("per-tree seeds are pairwise distinct") {
    auto seeds = serial.tree_seeds;
    std::sort(seeds.begin(), seeds.end());
    CHECK(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end());
  }
}

TEST_CASE("single unit-weight tree forest equals plain CART", "[forest]") {
  const auto ds = testutil::random_grid_dataset(50, 3, Task::kRegression, 8);
  ForestConfig config;
  config.n_trees = 1;
  config.weight_mode = WeightMode::kUnit;
  config.tree.min_leaf_count = 2;
  config.seed = 4;
  const auto forest = fit_forest(ds, config);

  FitConfig tree_config = config.tree;
  tree_config.seed = forest.tree_seeds[0];
  const auto cart = fit_tree(ds, WeightVector::ones(50), tree_config);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    const auto x = ds.row(i);
    CHECK(predict_forest(forest, x) == cart.predict(x));
  }
}

TEST_CASE("forest predictions average trees", "[forest]") {
  // Two single-leaf trees predicting 0 and 10.
  auto make_leaf_tree = [](double value) {
    Tree tree;
    tree.task = Task::kRegression;
    tree.n_features = 1;
    TreeNode node;
    node.value = value;
    node.weight_mass = 1.0;
    node.count = 1;
    tree.nodes.push_back(node);
    return tree;
  };
  Forest forest;
  forest.task = Task::kRegression;
  forest.n_features = 1;
  forest.trees.push_back(make_leaf_tree(0.0));
  forest.trees.push_back(make_leaf_tree(10.0));
  const std::vector<double> x{0.5};
  CHECK(predict_forest(forest, x) == 5.0);
}

TEST_CASE("classification forests average probabilities", "[forest]") {
  auto make_proba_tree = [](std::vector<double> probs) {
    Tree tree;
    tree.task = Task::kClassification;
    tree.n_classes = 2;
    tree.n_features = 1;
    TreeNode node;
    node.class_probs = std::move(probs);
    node.weight_mass = 1.0;
    node.count = 1;
    tree.nodes.push_back(node);
    return tree;
  };
  Forest forest;
  forest.task = Task::kClassification;
  forest.n_classes = 2;
  forest.n_features = 1;
  forest.trees.push_back(make_proba_tree({0.6, 0.4}));
  forest.trees.push_back(make_proba_tree({0.2, 0.8}));
  const std::vector<double> x{0.0};
  const auto probs = predict_forest_proba(forest, x);
  CHECK_THAT(probs[0], Catch::Matchers::WithinRel(0.4, 1e-15));
  CHECK_THAT(probs[1], Catch::Matchers::WithinRel(0.6, 1e-15));
  CHECK(argmax_label(probs) == 1);
}

TEST_CASE("argmax breaks ties toward the lowest class", "[forest]") {
  const std::vector<double> tied{0.5, 0.5};
  CHECK(argmax_label(tied) == 0);
}

TEST_CASE("regression forest predictions stay in the response hull", "[forest]") {
  const auto ds = testutil::random_dataset(150, 3, 41);
  double lo = ds.y(0), hi = ds.y(0);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    lo = std::min(lo, ds.y(i));
    hi = std::max(hi, ds.y(i));
  }
  ForestConfig config;
  config.n_trees = 20;
  config.seed = 5;
  config.tree.min_leaf_count = 2;
  const auto forest = fit_forest(ds, config);
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> x{rng.next_unit() * 2 - 0.5, rng.next_unit() * 2 - 0.5,
                                rng.next_unit() * 2 - 0.5};
    const double pred = predict_forest(forest, x);
    CHECK(pred >= lo);
    CHECK(pred <= hi);
  }
}

TEST_CASE("forest prediction dimension checks", "[forest]") {
  const auto ds = testutil::random_dataset(50, 3, 51);
  ForestConfig config;
  config.n_trees = 2;
  config.seed = 1;
  const auto forest = fit_forest(ds, config);
  const std::vector<double> short_x{1.0, 2.0};
  CHECK_THROWS_AS(predict_forest(forest, short_x), DataError);
  const auto wide = testutil::random_dataset(10, 4, 52);
  CHECK_THROWS_AS(predict_forest(forest, wide), DataError);
}

TEST_CASE("sub-sample forests partition into chunks", "[forest]") {
  const auto ds = testutil::random_dataset(200, 3, 61);
  ForestConfig config;
  config.n_trees = 4;
  config.seed = 17;
  config.tree.min_leaf_count = 3;

  SECTION("C=1 reproduces fit_forest") {
    const auto plain = fit_forest(ds, config);
    const auto ssf = fit_ssf(ds, 1, config, 123);
    REQUIRE(ssf.trees.size() == plain.trees.size());
    CHECK(ssf.tree_seeds == plain.tree_seeds);
    for (std::size_t b = 0; b < plain.trees.size(); ++b)
      CHECK(testutil::trees_equivalent(plain.trees[b], ssf.trees[b]));
  }
  SECTION("C=5 fits all chunk trees") {
    const auto ssf = fit_ssf(ds, 5, config, 123);
    CHECK(ssf.trees.size() == 20);
    CHECK(ssf.chunk_count == 5);
    // every chunk tree sees 40 rows
    for (const auto& tree : ssf.trees) CHECK(tree.nodes[0].count == 40);
  }
  SECTION("chunks below min_leaf_count are rejected") {
    ForestConfig tight = config;
    tight.tree.min_leaf_count = 50;
    CHECK_THROWS_AS(fit_ssf(ds, 5, tight, 1), ConfigError);
  }
  SECTION("near-equal chunk sizes") {
    const auto ssf = fit_ssf(testutil::random_dataset(103, 2, 3), 5,
                             ForestConfig{1, WeightMode::kUnit, FitConfig{}, 0}, 9);
    std::vector<std::uint32_t> counts;
    for (const auto& tree : ssf.trees) counts.push_back(tree.nodes[0].count);
    CHECK(counts == std::vector<std::uint32_t>{21, 21, 21, 20, 20});
  }
}
