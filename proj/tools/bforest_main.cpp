// bforest command line: train/predict forest models, run the cross-validation
// and Friedman experiments, produce split-stability reports, and act as a
// per-branch worker for process-parallel EBF training.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bforest/bench.hpp"
#include "bforest/csv.hpp"
#include "bforest/dataset.hpp"
#include "bforest/ebf.hpp"
#include "bforest/error.hpp"
#include "bforest/forest.hpp"
#include "bforest/serialize.hpp"
#include "bforest/stability.hpp"

namespace fs = std::filesystem;
using namespace bforest;

namespace {

// ---------------------------------------------------------------------------
// Flat run configuration: one `key = value` per line, '#' comments, dotted
// keys. Flags override file values; unknown or unused keys are rejected.
// ---------------------------------------------------------------------------

class RunConfig {
 public:
  static RunConfig from_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      const auto trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      const auto key = trim(trimmed.substr(0, eq));
      const auto value = trim(trimmed.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      if (config.values_.count(key))
        throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                          "'");
      config.values_[key] = value;
    }
    return config;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void apply_overrides(const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos)
        throw ConfigError("--set expects key=value, got '" + item + "'");
      set(trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) return std::nullopt;
    return it->second;
  }

  std::string require(const std::string& key) const {
    const auto v = get(key);
    if (!v) throw ConfigError("config is missing required key '" + key + "'");
    return *v;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = get(key);
    return v ? parse_u64(key, *v) : fallback;
  }

  std::uint32_t get_u32(const std::string& key, std::uint32_t fallback) const {
    return static_cast<std::uint32_t>(get_u64(key, fallback));
  }

  std::optional<std::uint32_t> get_opt_u32(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    return static_cast<std::uint32_t>(parse_u64(key, *v));
  }

  std::optional<double> get_opt_double(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    return parse_double(*v, "in config key '" + key + "'");
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError("config key '" + key + "' expects true/false");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    const auto v = get(key);
    std::vector<std::string> out;
    if (!v) return out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto t = trim(item);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  /// Every present key must have been consumed by now.
  void finish() const {
    std::vector<std::string> unknown;
    for (const auto& [key, value] : values_)
      if (!consumed_.count(key)) unknown.push_back(key);
    if (!unknown.empty()) {
      std::string msg = "unknown config key(s):";
      for (const auto& k : unknown) msg += " '" + k + "'";
      throw ConfigError(msg);
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
  }

  static std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
      std::size_t used = 0;
      const auto parsed = std::stoull(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      return parsed;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + value +
                        "'");
    }
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

struct DataOptions {
  std::string path;
  CsvSchema schema;
};

DataOptions data_options_from(const RunConfig& config) {
  DataOptions opts;
  opts.path = config.require("data.path");
  if (!fs::exists(opts.path)) throw ConfigError("data.path does not exist: " + opts.path);
  const auto task = config.get_or("data.task", "regression");
  if (task == "regression") opts.schema.task = Task::kRegression;
  else if (task == "classification") opts.schema.task = Task::kClassification;
  else throw ConfigError("data.task must be regression or classification");
  opts.schema.roles[config.require("data.response")] = ColumnRole::kResponse;
  for (const auto& name : config.get_list("data.categorical"))
    opts.schema.roles[name] = ColumnRole::kCategoricalFeature;
  for (const auto& name : config.get_list("data.ignore"))
    opts.schema.roles[name] = ColumnRole::kIgnore;
  return opts;
}

ModelKind model_kind_from(const std::string& name) {
  if (name == "dt") return ModelKind::kDt;
  if (name == "bf") return ModelKind::kBf;
  if (name == "rf") return ModelKind::kRf;
  if (name == "ebf") return ModelKind::kEbf;
  if (name == "ssf") return ModelKind::kSsf;
  throw ConfigError("unknown model kind '" + name + "' (expected dt|bf|rf|ebf|ssf)");
}

FitConfig tree_config_from(const RunConfig& config, const std::string& prefix) {
  FitConfig tree;
  tree.min_leaf_count = config.get_u32(prefix + ".min_leaf", 3);
  if (const auto w = config.get_opt_double(prefix + ".min_leaf_weight")) tree.min_leaf_weight = w;
  if (const auto m = config.get_opt_u32(prefix + ".max_leaves")) tree.max_leaves = m;
  if (const auto m = config.get_opt_u32(prefix + ".mtry")) tree.feature_subset_size = m;
  return tree;
}

TrunkConfig trunk_config_from(const RunConfig& config, std::uint32_t node_min_leaf) {
  TrunkConfig trunk;
  trunk.node_min_leaf = node_min_leaf;
  const auto leaves = config.get_opt_u32("ebf.trunk_leaves");
  const auto mls = config.get_opt_u32("ebf.trunk_min_leaf");
  if (leaves && mls)
    throw ConfigError("set only one of ebf.trunk_leaves / ebf.trunk_min_leaf");
  if (mls) trunk.min_leaf_count = mls;
  else trunk.max_leaves = leaves.value_or(5);
  return trunk;
}

ModelSpec model_spec_from(const RunConfig& config, ModelKind kind, const std::string& prefix) {
  ModelSpec spec;
  spec.kind = kind;
  spec.tree = tree_config_from(config, prefix);
  spec.n_trees = config.get_u32(prefix + ".trees", 100);
  if (kind == ModelKind::kEbf) spec.trunk = trunk_config_from(config, spec.tree.min_leaf_count);
  if (kind == ModelKind::kSsf) spec.chunks = config.get_u32("ssf.chunks", 5);
  return spec;
}

Metric metric_from(const std::string& name) {
  if (name == "rmse") return Metric::kRmse;
  if (name == "mcr") return Metric::kMcr;
  throw ConfigError("metric must be rmse or mcr");
}

void write_results(const ResultsTable& table, const std::optional<std::string>& csv_path,
                   const std::optional<std::string>& json_path) {
  std::cout << table.format();
  if (csv_path) results_to_csv(*csv_path, table);
  if (json_path) write_json_file(*json_path, results_to_json(table), 2);
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (const char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  out += "'";
  return out;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

json fit_payload_ebf_per_branch(const Dataset& ds, const TrunkConfig& trunk_config,
                                const ForestConfig& branch_config, const fs::path& work_dir,
                                const std::string& self, unsigned threads);

int cmd_train(const RunConfig& config, const std::string& self) {
  const auto data = data_options_from(config);
  const auto kind_name = config.require("model.kind");
  const ModelKind kind = model_kind_from(kind_name);
  const auto spec = model_spec_from(config, kind, "model");
  const std::uint64_t seed = config.get_u64("seed", 0);
  const unsigned threads = config.get_u32("threads", 0);
  const auto out_path = config.require("out.model");
  const bool per_branch = config.get_bool("ebf.process_per_branch", false);
  const auto work_dir = config.get_or("out.dir", fs::path(out_path).parent_path().string());
  config.finish();

  const Dataset ds = load_csv(data.path, data.schema);

  ModelFile file;
  file.schema = ds.schema();
  if (kind == ModelKind::kEbf) {
    ForestConfig branch{spec.n_trees, WeightMode::kExponential, spec.tree, seed};
    file.kind = "ebf";
    if (per_branch) {
      file.payload = fit_payload_ebf_per_branch(ds, spec.trunk, branch,
                                                work_dir.empty() ? fs::path(".") : fs::path(work_dir),
                                                self, threads);
    } else {
      file.payload = ebf_to_json(fit_ebf(ds, spec.trunk, branch, threads));
    }
  } else {
    const auto fitted = fit_model(ds, spec, seed, threads);
    file.kind = "forest";
    file.payload = forest_to_json(std::get<Forest>(fitted));
  }
  write_json_file(out_path, model_file_to_json(file));
  std::cout << "model written to " << out_path << "\n";
  return 0;
}

/// Process-per-branch EBF: the trunk is fit here, routed chunks go to disk as
/// CSV named by trunk leaf id, and one worker process per branch fits its
/// forest. Output is identical to the in-process fit for the same seed.
json fit_payload_ebf_per_branch(const Dataset& ds, const TrunkConfig& trunk_config,
                                const ForestConfig& branch_config, const fs::path& work_dir,
                                const std::string& self, unsigned threads) {
  fs::create_directories(work_dir);
  EBFModel model;
  model.branch_config = branch_config;
  model.trunk = fit_trunk(ds, trunk_config);
  const auto leaf_ids = route(model.trunk, ds);
  std::map<std::uint32_t, std::vector<std::uint32_t>> branch_rows;
  for (std::uint32_t i = 0; i < leaf_ids.size(); ++i) branch_rows[leaf_ids[i]].push_back(i);

  const auto& schema = ds.schema();
  for (const auto& [leaf_id, rows] : branch_rows) {
    const auto chunk_csv = work_dir / ("chunk_leaf" + std::to_string(leaf_id) + ".csv");
    const auto worker_cfg = work_dir / ("worker_leaf" + std::to_string(leaf_id) + ".json");
    const auto branch_out = work_dir / ("branch_leaf" + std::to_string(leaf_id) + ".json");

    // Chunk CSV in the already-encoded feature space plus the raw response.
    std::vector<std::string> header = ds.feature_names();
    header.push_back(schema.response_name);
    std::vector<std::vector<std::string>> csv_rows;
    csv_rows.reserve(rows.size());
    for (const auto r : rows) {
      std::vector<std::string> row;
      row.reserve(ds.n_features() + 1);
      for (std::size_t j = 0; j < ds.n_features(); ++j)
        row.push_back(format_double(ds.value(r, j)));
      if (ds.task() == Task::kClassification) row.push_back(ds.class_labels()[ds.label(r)]);
      else row.push_back(format_double(ds.y(r)));
      csv_rows.push_back(std::move(row));
    }
    write_csv(chunk_csv, header, csv_rows);

    ForestConfig worker_forest = branch_config;
    worker_forest.seed = bforest::detail::branch_seed(branch_config.seed, leaf_id);
    json worker;
    worker["response"] = schema.response_name;
    worker["task"] = ds.task() == Task::kClassification ? "classification" : "regression";
    worker["class_labels"] = ds.class_labels();
    worker["forest"] = forest_config_to_json(worker_forest);
    worker["threads"] = threads;
    write_json_file(worker_cfg, worker, 2);

    const std::string command = shell_quote(self) + " branch-worker --chunk " +
                                shell_quote(chunk_csv.string()) + " --config " +
                                shell_quote(worker_cfg.string()) + " --out " +
                                shell_quote(branch_out.string());
    const int status = std::system(command.c_str());
    if (status != 0)
      throw DataError("branch worker for leaf " + std::to_string(leaf_id) + " failed");

    const auto worker_file = model_file_from_json(read_json_file(branch_out));
    model.branch_leaf_ids.push_back(leaf_id);
    model.branches.push_back(forest_from_json(worker_file.payload));
  }
  return ebf_to_json(model);
}

// ---------------------------------------------------------------------------
// branch-worker
// ---------------------------------------------------------------------------

int cmd_branch_worker(const std::string& chunk_path, const std::string& config_path,
                      const std::string& out_path) {
  const auto worker = read_json_file(config_path);
  const auto response = worker.at("response").get<std::string>();
  const Task task = worker.at("task").get<std::string>() == "classification"
                        ? Task::kClassification
                        : Task::kRegression;
  const auto class_labels = worker.at("class_labels").get<std::vector<std::string>>();
  const ForestConfig forest_config = forest_config_from_json(worker.at("forest"));
  const unsigned threads = worker.value("threads", 0u);

  const CsvTable table = read_csv(chunk_path);
  const std::size_t resp_col = table.column(response);
  if (table.rows.empty()) throw DataError("chunk file has no rows: " + chunk_path);

  std::vector<std::vector<double>> columns;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j == resp_col) continue;
    std::vector<double> col(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i)
      col[i] = parse_double(table.rows[i][j], bforest::detail::cell_context(table, i, j));
    columns.push_back(std::move(col));
    names.push_back(table.header[j]);
  }
  std::vector<double> response_col(table.rows.size());
  if (task == Task::kClassification) {
    std::map<std::string, std::uint32_t> index;
    for (std::uint32_t k = 0; k < class_labels.size(); ++k) index[class_labels[k]] = k;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto it = index.find(table.rows[i][resp_col]);
      if (it == index.end())
        throw DataError("chunk row " + std::to_string(i + 2) + ": unknown class label '" +
                        table.rows[i][resp_col] + "'");
      response_col[i] = it->second;
    }
  } else {
    for (std::size_t i = 0; i < table.rows.size(); ++i)
      response_col[i] =
          parse_double(table.rows[i][resp_col], bforest::detail::cell_context(table, i, resp_col));
  }
  const Dataset chunk(std::move(columns), std::move(names), std::move(response_col), task,
                      class_labels);

  const Forest forest = fit_forest(chunk, forest_config, threads);
  ModelFile file;
  file.kind = "forest";
  file.schema = chunk.schema();
  file.payload = forest_to_json(forest);
  write_json_file(out_path, model_file_to_json(file));
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& out_path, unsigned threads) {
  const auto file = model_file_from_json(read_json_file(model_path));
  const CsvTable table = read_csv(data_path);
  const auto rows = encode_features(table, file.schema);
  if (rows.empty()) throw DataError("prediction input has no rows: " + data_path);

  const bool classification = file.schema.task == Task::kClassification;
  std::vector<std::vector<std::string>> out_rows(rows.size());
  std::vector<std::string> header;

  auto check_width = [&](std::size_t expected) {
    if (rows[0].size() != expected)
      throw DataError("prediction input provides " + std::to_string(rows[0].size()) +
                      " encoded features, model expects " + std::to_string(expected));
  };

  if (file.kind == "forest") {
    const Forest forest = forest_from_json(file.payload);
    check_width(forest.n_features);
    if (classification) {
      header.reserve(file.schema.class_labels.size());
      for (const auto& label : file.schema.class_labels) header.push_back("p_" + label);
      parallel_for(rows.size(), threads, [&](std::size_t i) {
        const auto probs = predict_forest_proba(forest, rows[i]);
        for (const double p : probs) out_rows[i].push_back(format_double(p));
      });
    } else {
      header = {"prediction"};
      parallel_for(rows.size(), threads, [&](std::size_t i) {
        out_rows[i] = {format_double(predict_forest(forest, rows[i]))};
      });
    }
  } else if (file.kind == "ebf") {
    const EBFModel model = ebf_from_json(file.payload);
    check_width(model.trunk.n_features);
    if (classification) {
      for (const auto& label : file.schema.class_labels) header.push_back("p_" + label);
      parallel_for(rows.size(), threads, [&](std::size_t i) {
        const auto probs = predict_ebf_proba(model, rows[i]);
        for (const double p : probs) out_rows[i].push_back(format_double(p));
      });
    } else {
      header = {"prediction"};
      parallel_for(rows.size(), threads, [&](std::size_t i) {
        out_rows[i] = {format_double(predict_ebf(model, rows[i]))};
      });
    }
  } else {
    throw DataError("unsupported model kind '" + file.kind + "'");
  }

  write_csv(out_path, header, out_rows);
  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// cv
// ---------------------------------------------------------------------------

int cmd_cv(const RunConfig& config) {
  const auto data = data_options_from(config);
  const auto model_names = config.get_list("models");
  if (model_names.empty()) throw ConfigError("cv spec needs a 'models' list");
  std::vector<ModelSpec> models;
  for (const auto& name : model_names) {
    const ModelKind kind = model_kind_from(name);
    models.push_back(model_spec_from(config, kind, name));
  }
  const std::uint32_t folds = config.get_u32("folds", 10);
  const std::uint64_t seed = config.get_u64("seed", 0);
  const unsigned threads = config.get_u32("threads", 0);
  const Metric metric = metric_from(config.get_or("metric", "rmse"));
  const auto csv_path = config.get("out.csv");
  const auto json_path = config.get("out.json");
  config.finish();

  const Dataset ds = load_csv(data.path, data.schema);
  const auto table = run_cv_experiment(ds, models, folds, seed, metric, threads);
  write_results(table, csv_path, json_path);
  return 0;
}

// ---------------------------------------------------------------------------
// friedman
// ---------------------------------------------------------------------------

struct FriedmanArgs {
  std::uint32_t repeats = 100;
  std::uint32_t train_n = 100;
  std::uint32_t test_n = 1000;
  std::uint32_t p = 10;
  std::string models = "dt,bf,rf";
  std::uint32_t trees = 100;
  std::uint32_t min_leaf = 3;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_csv, out_json;
};

int cmd_friedman(const FriedmanArgs& args) {
  std::vector<ModelSpec> models;
  std::stringstream ss(args.models);
  std::string name;
  while (std::getline(ss, name, ',')) {
    ModelSpec spec;
    spec.kind = model_kind_from(name);
    spec.tree.min_leaf_count = args.min_leaf;
    spec.n_trees = args.trees;
    models.push_back(spec);
  }
  const auto table = run_friedman_experiment(args.repeats, args.train_n, args.test_n, args.p,
                                             models, args.seed, args.threads);
  write_results(table,
                args.out_csv.empty() ? std::nullopt : std::optional<std::string>(args.out_csv),
                args.out_json.empty() ? std::nullopt : std::optional<std::string>(args.out_json));
  return 0;
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

struct StabilityArgs {
  std::string data_path, response, categorical, ignore, task = "regression";
  std::uint32_t trunk_min_leaf = 3500;
  std::uint32_t draws = 100;
  std::uint32_t mc_draws = 100;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_report = "stability_report.json";
  std::string out_hist = "stability_hist.csv";
};

int cmd_stability(const StabilityArgs& args) {
  RunConfig carrier;
  carrier.set("data.path", args.data_path);
  carrier.set("data.response", args.response);
  carrier.set("data.task", args.task);
  if (!args.categorical.empty()) carrier.set("data.categorical", args.categorical);
  if (!args.ignore.empty()) carrier.set("data.ignore", args.ignore);
  const auto data = data_options_from(carrier);
  const Dataset ds = load_csv(data.path, data.schema);
  if (ds.task() != Task::kRegression)
    throw ConfigError("stability analysis expects a regression response");

  std::vector<std::uint32_t> rows(ds.n_rows());
  for (std::uint32_t i = 0; i < rows.size(); ++i) rows[i] = i;

  StabilityReport report;
  report.node_n = ds.n_rows();

  // Root-node candidate statistics and match-probability bounds.
  const auto reference = best_split(rows, ds, WeightVector::ones(ds.n_rows()), FitConfig{});
  if (!reference) throw DataError("root node has no improving split");
  report.reference = *reference;
  const auto candidates = node_candidates(rows, ds);
  report.stats = delta_stats(rows, ds, *reference, candidates, args.threads);
  const auto [gaussian, exponential] = match_probability_gaussian(report.stats);
  report.gaussian_bound = gaussian;
  report.exp_bound = exponential;
  if (args.mc_draws > 0)
    report.mc = match_probability_mc(rows, ds, args.mc_draws, derive_seed(args.seed, 0xACE),
                                     args.threads);

  // Posterior split histograms over weighted trunk refits.
  TrunkConfig trunk;
  trunk.min_leaf_count = args.trunk_min_leaf;
  report.histograms = split_posterior_distribution(ds, trunk, args.draws,
                                                   WeightMode::kExponential, args.seed,
                                                   args.threads);

  write_json_file(args.out_report, stability_report_to_json(report, ds.feature_names()), 2);
  histograms_to_csv(args.out_hist, report.histograms, ds.feature_names());

  std::cout << "root split: " << ds.feature_names()[report.reference.feature] << " <= "
            << format_double(report.reference.threshold) << "\n"
            << "gaussian match bound: " << format_double(report.gaussian_bound) << "\n";
  if (report.mc)
    std::cout << "mc match estimate: " << format_double(report.mc->estimate) << " ("
              << report.mc->draws << " draws)\n";
  if (!report.histograms.classes_exact.empty())
    std::cout << "modal trunk frequency: "
              << format_double(report.histograms.classes_exact[0].frequency) << "\n";
  std::cout << "report written to " << args.out_report << ", histograms to " << args.out_hist
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sensitivity
// ---------------------------------------------------------------------------

struct SensitivityArgs {
  std::string data_path, response, categorical, ignore, task = "regression";
  std::vector<std::uint32_t> mls;
  std::uint32_t folds = 10;
  std::uint32_t trees = 100;
  std::uint32_t min_leaf = 3;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_csv;
};

int cmd_sensitivity(const SensitivityArgs& args) {
  RunConfig carrier;
  carrier.set("data.path", args.data_path);
  carrier.set("data.response", args.response);
  carrier.set("data.task", args.task);
  if (!args.categorical.empty()) carrier.set("data.categorical", args.categorical);
  if (!args.ignore.empty()) carrier.set("data.ignore", args.ignore);
  const auto data = data_options_from(carrier);
  const Dataset ds = load_csv(data.path, data.schema);

  ForestConfig branch;
  branch.n_trees = args.trees;
  branch.tree.min_leaf_count = args.min_leaf;
  const auto table = trunk_depth_sensitivity(ds, args.mls, branch, args.folds, args.seed,
                                             args.threads);

  std::cout << std::left << std::setw(12) << "trunk MLS" << std::right << std::setw(12) << "metric"
            << std::setw(10) << "%WTB" << "\n";
  std::vector<std::vector<std::string>> csv_rows;
  for (const auto& row : table.rows) {
    std::cout << std::left << std::setw(12) << row.trunk_min_leaf << std::right << std::setw(12)
              << std::fixed << std::setprecision(4) << row.mean_metric << std::setw(10)
              << std::setprecision(2) << row.pct_wtb << "\n";
    csv_rows.push_back({std::to_string(row.trunk_min_leaf), format_double(row.mean_metric),
                        format_double(row.pct_wtb)});
  }
  std::cout << "full BF baseline: " << format_double(table.baseline_mean) << "\n";
  if (!args.out_csv.empty()) {
    csv_rows.push_back({"baseline", format_double(table.baseline_mean), "0"});
    write_csv(args.out_csv, {"trunk_mls", "metric", "pct_wtb"}, csv_rows);
  }
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"Bayesian forests, empirical Bayesian forests, and split-stability analytics"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "fit a model from a run config");
  std::string train_config_path;
  std::vector<std::string> train_sets;
  std::optional<std::uint64_t> train_seed;
  std::optional<unsigned> train_threads;
  std::optional<std::string> train_out;
  train->add_option("--config", train_config_path, "run config file")->required();
  train->add_option("--set", train_sets, "override config entries (key=value)");
  train->add_option("--seed", train_seed, "override seed");
  train->add_option("--threads", train_threads, "override thread count");
  train->add_option("--out", train_out, "override out.model");

  // predict
  auto* predict = app.add_subcommand("predict", "predict a CSV with a trained model");
  std::string predict_model, predict_data, predict_out;
  unsigned predict_threads = 0;
  predict->add_option("--model", predict_model, "model JSON file")->required();
  predict->add_option("--data", predict_data, "input CSV")->required();
  predict->add_option("--out", predict_out, "output predictions CSV")->required();
  predict->add_option("--threads", predict_threads, "thread count (0 = all cores)");

  // cv
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation experiment from a spec");
  std::string cv_spec_path;
  std::vector<std::string> cv_sets;
  std::optional<std::uint64_t> cv_seed;
  std::optional<unsigned> cv_threads;
  cv->add_option("--spec", cv_spec_path, "experiment spec file")->required();
  cv->add_option("--set", cv_sets, "override spec entries (key=value)");
  cv->add_option("--seed", cv_seed, "override seed");
  cv->add_option("--threads", cv_threads, "override thread count");

  // friedman
  auto* friedman = app.add_subcommand("friedman", "synthetic Friedman-function study");
  FriedmanArgs fr;
  friedman->add_option("--repeats", fr.repeats, "number of repeats");
  friedman->add_option("--train-n", fr.train_n, "training rows per repeat");
  friedman->add_option("--test-n", fr.test_n, "test rows per repeat");
  friedman->add_option("--p", fr.p, "total features including spurious ones");
  friedman->add_option("--models", fr.models, "comma list of dt|bf|rf|ebf|ssf");
  friedman->add_option("--trees", fr.trees, "trees per ensemble");
  friedman->add_option("--min-leaf", fr.min_leaf, "minimum observations per leaf");
  friedman->add_option("--seed", fr.seed, "master seed");
  friedman->add_option("--threads", fr.threads, "thread count");
  friedman->add_option("--out-csv", fr.out_csv, "results CSV path");
  friedman->add_option("--out-json", fr.out_json, "results JSON path");

  // stability
  auto* stability = app.add_subcommand("stability", "split-stability report for a dataset");
  StabilityArgs st;
  stability->add_option("--data", st.data_path, "input CSV")->required();
  stability->add_option("--response", st.response, "response column")->required();
  stability->add_option("--categorical", st.categorical, "comma list of categorical columns");
  stability->add_option("--ignore", st.ignore, "comma list of ignored columns");
  stability->add_option("--trunk-min-leaf", st.trunk_min_leaf, "trunk minimum leaf size");
  stability->add_option("--draws", st.draws, "posterior trunk draws");
  stability->add_option("--mc-draws", st.mc_draws, "Monte Carlo draws for the match estimate");
  stability->add_option("--seed", st.seed, "master seed");
  stability->add_option("--threads", st.threads, "thread count");
  stability->add_option("--out-report", st.out_report, "report JSON path");
  stability->add_option("--out-hist", st.out_hist, "histogram CSV path");

  // sensitivity
  auto* sensitivity = app.add_subcommand("sensitivity", "trunk-depth sensitivity study");
  SensitivityArgs se;
  sensitivity->add_option("--data", se.data_path, "input CSV")->required();
  sensitivity->add_option("--response", se.response, "response column")->required();
  sensitivity->add_option("--categorical", se.categorical, "comma list of categorical columns");
  sensitivity->add_option("--ignore", se.ignore, "comma list of ignored columns");
  sensitivity->add_option("--mls", se.mls, "trunk minimum leaf sizes")
      ->required()
      ->delimiter(',');
  sensitivity->add_option("--folds", se.folds, "CV folds");
  sensitivity->add_option("--trees", se.trees, "trees per branch forest");
  sensitivity->add_option("--min-leaf", se.min_leaf, "tree minimum leaf size");
  sensitivity->add_option("--seed", se.seed, "master seed");
  sensitivity->add_option("--threads", se.threads, "thread count");
  sensitivity->add_option("--out-csv", se.out_csv, "table CSV path");

  // branch-worker
  auto* worker = app.add_subcommand("branch-worker", "fit one EBF branch from a chunk file");
  std::string worker_chunk, worker_config, worker_out;
  worker->add_option("--chunk", worker_chunk, "routed chunk CSV")->required();
  worker->add_option("--config", worker_config, "branch worker config JSON")->required();
  worker->add_option("--out", worker_out, "branch forest output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      RunConfig config = RunConfig::from_file(train_config_path);
      config.apply_overrides(train_sets);
      if (train_seed) config.set("seed", std::to_string(*train_seed));
      if (train_threads) config.set("threads", std::to_string(*train_threads));
      if (train_out) config.set("out.model", *train_out);
      return cmd_train(config, argv[0]);
    }
    if (predict->parsed())
      return cmd_predict(predict_model, predict_data, predict_out, predict_threads);
    if (cv->parsed()) {
      RunConfig config = RunConfig::from_file(cv_spec_path);
      config.apply_overrides(cv_sets);
      if (cv_seed) config.set("seed", std::to_string(*cv_seed));
      if (cv_threads) config.set("threads", std::to_string(*cv_threads));
      return cmd_cv(config);
    }
    if (friedman->parsed()) return cmd_friedman(fr);
    if (stability->parsed()) return cmd_stability(st);
    if (sensitivity->parsed()) return cmd_sensitivity(se);
    if (worker->parsed()) return cmd_branch_worker(worker_chunk, worker_config, worker_out);
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
