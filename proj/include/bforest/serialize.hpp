#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bforest/bench.hpp"
#include "bforest/csv.hpp"
#include "bforest/dataset.hpp"
#include "bforest/ebf.hpp"
#include "bforest/error.hpp"
#include "bforest/forest.hpp"
#include "bforest/stability.hpp"
#include "bforest/tree.hpp"

namespace bforest {

using json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

// --- configs ---------------------------------------------------------------

inline json fit_config_to_json(const FitConfig& config) {
  json j;
  j["min_leaf_count"] = config.min_leaf_count;
  if (config.min_leaf_weight) j["min_leaf_weight"] = *config.min_leaf_weight;
  if (config.max_leaves) j["max_leaves"] = *config.max_leaves;
  if (config.feature_subset_size) j["feature_subset_size"] = *config.feature_subset_size;
  j["seed"] = config.seed;
  return j;
}

inline FitConfig fit_config_from_json(const json& j) {
  FitConfig config;
  config.min_leaf_count = j.at("min_leaf_count").get<std::uint32_t>();
  if (j.contains("min_leaf_weight")) config.min_leaf_weight = j["min_leaf_weight"].get<double>();
  if (j.contains("max_leaves")) config.max_leaves = j["max_leaves"].get<std::uint32_t>();
  if (j.contains("feature_subset_size"))
    config.feature_subset_size = j["feature_subset_size"].get<std::uint32_t>();
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

inline std::string weight_mode_name(WeightMode mode) {
  switch (mode) {
    case WeightMode::kExponential: return "exponential";
    case WeightMode::kMultinomial: return "multinomial";
    case WeightMode::kUnit: return "unit";
  }
  return "?";
}

inline WeightMode weight_mode_from_name(const std::string& name) {
  if (name == "exponential") return WeightMode::kExponential;
  if (name == "multinomial") return WeightMode::kMultinomial;
  if (name == "unit") return WeightMode::kUnit;
  throw DataError("unknown weight mode '" + name + "'");
}

inline json forest_config_to_json(const ForestConfig& config) {
  json j;
  j["n_trees"] = config.n_trees;
  j["weight_mode"] = weight_mode_name(config.weight_mode);
  j["tree"] = fit_config_to_json(config.tree);
  j["seed"] = config.seed;
  return j;
}

inline ForestConfig forest_config_from_json(const json& j) {
  ForestConfig config;
  config.n_trees = j.at("n_trees").get<std::uint32_t>();
  config.weight_mode = weight_mode_from_name(j.at("weight_mode").get<std::string>());
  config.tree = fit_config_from_json(j.at("tree"));
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

// --- schema ----------------------------------------------------------------

inline std::string column_role_name(ColumnRole role) {
  switch (role) {
    case ColumnRole::kNumericFeature: return "numeric";
    case ColumnRole::kCategoricalFeature: return "categorical";
    case ColumnRole::kResponse: return "response";
    case ColumnRole::kIgnore: return "ignore";
  }
  return "?";
}

inline ColumnRole column_role_from_name(const std::string& name) {
  if (name == "numeric") return ColumnRole::kNumericFeature;
  if (name == "categorical") return ColumnRole::kCategoricalFeature;
  if (name == "response") return ColumnRole::kResponse;
  if (name == "ignore") return ColumnRole::kIgnore;
  throw DataError("unknown column role '" + name + "'");
}

inline json schema_to_json(const DataSchema& schema) {
  json j;
  j["task"] = schema.task == Task::kRegression ? "regression" : "classification";
  j["response"] = schema.response_name;
  j["class_labels"] = schema.class_labels;
  json cols = json::array();
  for (const auto& col : schema.columns) {
    json c;
    c["name"] = col.name;
    c["role"] = column_role_name(col.role);
    if (!col.levels.empty()) c["levels"] = col.levels;
    cols.push_back(c);
  }
  j["columns"] = cols;
  return j;
}

inline DataSchema schema_from_json(const json& j) {
  DataSchema schema;
  schema.task =
      j.at("task").get<std::string>() == "classification" ? Task::kClassification : Task::kRegression;
  schema.response_name = j.at("response").get<std::string>();
  schema.class_labels = j.at("class_labels").get<std::vector<std::string>>();
  for (const auto& c : j.at("columns")) {
    ColumnSpec col;
    col.name = c.at("name").get<std::string>();
    col.role = column_role_from_name(c.at("role").get<std::string>());
    if (c.contains("levels")) col.levels = c["levels"].get<std::vector<std::string>>();
    schema.columns.push_back(std::move(col));
  }
  return schema;
}

// --- trees and forests -----------------------------------------------------

inline json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (const auto& node : tree.nodes) {
    json n;
    n["left"] = node.left;
    n["right"] = node.right;
    if (!node.is_leaf()) {
      n["feature"] = node.split.feature;
      n["threshold"] = node.split.threshold;
      n["order"] = node.split_order;
    }
    if (tree.task == Task::kRegression) n["value"] = node.value;
    else n["probs"] = node.class_probs;
    n["mass"] = node.weight_mass;
    n["count"] = node.count;
    nodes.push_back(std::move(n));
  }
  json j;
  j["task"] = tree.task == Task::kRegression ? "regression" : "classification";
  j["n_classes"] = tree.n_classes;
  j["n_features"] = tree.n_features;
  j["config"] = fit_config_to_json(tree.config);
  j["nodes"] = std::move(nodes);
  return j;
}

inline Tree tree_from_json(const json& j) {
  Tree tree;
  tree.task = j.at("task").get<std::string>() == "classification" ? Task::kClassification
                                                                  : Task::kRegression;
  tree.n_classes = j.at("n_classes").get<std::uint32_t>();
  tree.n_features = j.at("n_features").get<std::uint32_t>();
  tree.config = fit_config_from_json(j.at("config"));
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.left = n.at("left").get<std::int32_t>();
    node.right = n.at("right").get<std::int32_t>();
    if (node.left >= 0) {
      node.split.feature = n.at("feature").get<std::uint32_t>();
      node.split.threshold = n.at("threshold").get<double>();
      node.split_order = n.at("order").get<std::int32_t>();
    }
    if (tree.task == Task::kRegression) node.value = n.at("value").get<double>();
    else node.class_probs = n.at("probs").get<std::vector<double>>();
    node.weight_mass = n.at("mass").get<double>();
    node.count = n.at("count").get<std::uint32_t>();
    tree.nodes.push_back(std::move(node));
  }
  // Depths are structural; recompute instead of storing them.
  if (!tree.nodes.empty()) {
    tree.nodes[0].depth = 0;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto& node = tree.nodes[i];
      if (node.is_leaf()) continue;
      tree.nodes[node.left].depth = node.depth + 1;
      tree.nodes[node.right].depth = node.depth + 1;
    }
  }
  return tree;
}

inline json forest_to_json(const Forest& forest) {
  json j;
  j["config"] = forest_config_to_json(forest.config);
  j["task"] = forest.task == Task::kRegression ? "regression" : "classification";
  j["n_classes"] = forest.n_classes;
  j["n_features"] = forest.n_features;
  j["chunk_count"] = forest.chunk_count;
  j["tree_seeds"] = forest.tree_seeds;
  json trees = json::array();
  for (const auto& tree : forest.trees) trees.push_back(tree_to_json(tree));
  j["trees"] = std::move(trees);
  return j;
}

inline Forest forest_from_json(const json& j) {
  Forest forest;
  forest.config = forest_config_from_json(j.at("config"));
  forest.task = j.at("task").get<std::string>() == "classification" ? Task::kClassification
                                                                    : Task::kRegression;
  forest.n_classes = j.at("n_classes").get<std::uint32_t>();
  forest.n_features = j.at("n_features").get<std::uint32_t>();
  forest.chunk_count = j.at("chunk_count").get<std::uint32_t>();
  forest.tree_seeds = j.at("tree_seeds").get<std::vector<std::uint64_t>>();
  for (const auto& t : j.at("trees")) forest.trees.push_back(tree_from_json(t));
  return forest;
}

inline json ebf_to_json(const EBFModel& model) {
  json j;
  j["trunk"] = tree_to_json(model.trunk);
  j["branch_config"] = forest_config_to_json(model.branch_config);
  json branches = json::array();
  for (std::size_t b = 0; b < model.branches.size(); ++b) {
    json entry;
    entry["leaf"] = model.branch_leaf_ids[b];
    entry["forest"] = forest_to_json(model.branches[b]);
    branches.push_back(std::move(entry));
  }
  j["branches"] = std::move(branches);
  return j;
}

inline EBFModel ebf_from_json(const json& j) {
  EBFModel model;
  model.trunk = tree_from_json(j.at("trunk"));
  model.branch_config = forest_config_from_json(j.at("branch_config"));
  for (const auto& entry : j.at("branches")) {
    model.branch_leaf_ids.push_back(entry.at("leaf").get<std::uint32_t>());
    model.branches.push_back(forest_from_json(entry.at("forest")));
  }
  return model;
}

// --- model files -----------------------------------------------------------

/// Versioned model document: {"format","version","kind","schema",payload}.
struct ModelFile {
  std::string kind;  // "tree" | "forest" | "ebf"
  DataSchema schema;
  json payload;
};

inline json model_file_to_json(const ModelFile& file) {
  json j;
  j["format"] = "bforest-model";
  j["version"] = kModelFormatVersion;
  j["kind"] = file.kind;
  j["schema"] = schema_to_json(file.schema);
  j["model"] = file.payload;
  return j;
}

inline ModelFile model_file_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != "bforest-model")
    throw DataError("not a bforest model file");
  if (j.at("version").get<int>() != kModelFormatVersion)
    throw DataError("unsupported model format version " + j.at("version").dump());
  ModelFile file;
  file.kind = j.at("kind").get<std::string>();
  file.schema = schema_from_json(j.at("schema"));
  file.payload = j.at("model");
  return file;
}

inline void write_json_file(const std::filesystem::path& path, const json& j, int indent = -1) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << j.dump(indent) << '\n';
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& err) {
    throw DataError("invalid JSON in " + path.string() + ": " + err.what());
  }
  return j;
}

// --- results and reports ---------------------------------------------------

inline json results_to_json(const ResultsTable& table) {
  json j;
  j["metric"] = table.metric == Metric::kRmse ? "rmse" : "mcr";
  json models = json::array();
  for (const auto& m : table.models) {
    json entry;
    entry["name"] = m.name;
    entry["mean"] = m.mean;
    entry["pct_wtb"] = m.pct_wtb;
    entry["per_fold"] = m.per_fold;
    models.push_back(std::move(entry));
  }
  j["models"] = std::move(models);
  return j;
}

inline void results_to_csv(const std::filesystem::path& path, const ResultsTable& table) {
  std::vector<std::string> header{"model", table.metric == Metric::kRmse ? "rmse" : "mcr",
                                  "pct_wtb"};
  std::size_t max_folds = 0;
  for (const auto& m : table.models) max_folds = std::max(max_folds, m.per_fold.size());
  for (std::size_t f = 0; f < max_folds; ++f) header.push_back("fold" + std::to_string(f));
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : table.models) {
    std::vector<std::string> row{m.name, format_double(m.mean), format_double(m.pct_wtb)};
    for (const double v : m.per_fold) row.push_back(format_double(v));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

inline json histogram_to_json(const std::vector<SplitHistogramEntry>& hist) {
  json out = json::array();
  for (const auto& e : hist) {
    json entry;
    entry["feature"] = e.feature;
    entry["threshold"] = e.threshold;
    entry["count"] = e.count;
    entry["frequency"] = e.frequency;
    out.push_back(std::move(entry));
  }
  return out;
}

inline json stability_report_to_json(const StabilityReport& report,
                                     const std::vector<std::string>& feature_names) {
  json j;
  j["node_n"] = report.node_n;
  j["reference"] = {{"feature", report.reference.feature},
                    {"feature_name", feature_names[report.reference.feature]},
                    {"threshold", report.reference.threshold}};
  json stats = json::array();
  for (const auto& s : report.stats) {
    json entry;
    entry["feature"] = s.rule.feature;
    entry["threshold"] = s.rule.threshold;
    entry["dbar"] = s.dbar;
    entry["dss_over_n"] = s.dss_over_n;
    entry["z"] = s.z;
    entry["exact_tie"] = s.exact_tie;
    stats.push_back(std::move(entry));
  }
  j["stats"] = std::move(stats);
  j["gaussian_bound"] = report.gaussian_bound;
  j["exp_bound"] = report.exp_bound;
  if (report.mc) {
    j["mc"] = {{"estimate", report.mc->estimate},
               {"std_error", report.mc->std_error},
               {"draws", report.mc->draws}};
  }
  j["histograms"] = {{"depth1", histogram_to_json(report.histograms.depth1)},
                     {"depth2", histogram_to_json(report.histograms.depth2)},
                     {"order1", histogram_to_json(report.histograms.order1)},
                     {"order2", histogram_to_json(report.histograms.order2)}};
  auto classes_json = [](const std::vector<TrunkClassStats>& classes) {
    json out = json::array();
    for (const auto& c : classes)
      out.push_back({{"count", c.count}, {"frequency", c.frequency}, {"signature", c.signature}});
    return out;
  };
  j["trunk_classes"] = classes_json(report.histograms.classes_exact);
  j["trunk_classes_tolerant"] = classes_json(report.histograms.classes_tolerant);
  j["trunk_classes_topology"] = classes_json(report.histograms.classes_topology);
  return j;
}

/// Histogram CSV rows: depth,feature,threshold,frequency for depths 1 and 2.
inline void histograms_to_csv(const std::filesystem::path& path, const TrunkPosterior& posterior,
                              const std::vector<std::string>& feature_names) {
  std::vector<std::vector<std::string>> rows;
  auto emit = [&](int depth, const std::vector<SplitHistogramEntry>& hist) {
    for (const auto& e : hist)
      rows.push_back({std::to_string(depth), feature_names[e.feature],
                      format_double(e.threshold), format_double(e.frequency)});
  };
  emit(1, posterior.depth1);
  emit(2, posterior.depth2);
  write_csv(path, {"depth", "feature", "threshold", "frequency"}, rows);
}

}  // namespace bforest
