#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "bforest/csv.hpp"
#include "bforest/forest.hpp"
#include "bforest/serialize.hpp"
#include "helpers.hpp"

using namespace bforest;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const auto out_path = testutil::temp_path("cli_out_" + std::to_string(counter) + ".txt");
  const auto err_path = testutil::temp_path("cli_err_" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string command = std::string("'") + testutil::cli_path() + "' " + args + " > '" +
                              out_path.string() + "' 2> '" + err_path.string() + "'";
  const int status = std::system(command.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

std::filesystem::path write_file(const std::string& name, const std::string& content) {
  const auto path = testutil::temp_path(name);
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

std::filesystem::path small_csv() {
  static const auto path = [] {
    const auto ds = testutil::random_dataset(120, 3, 2027);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
      std::vector<std::string> row;
      for (std::size_t j = 0; j < ds.n_features(); ++j)
        row.push_back(format_double(ds.value(i, j)));
      row.push_back(format_double(ds.y(i)));
      rows.push_back(std::move(row));
    }
    const auto p = testutil::temp_path("cli_small.csv");
    write_csv(p, {"f0", "f1", "f2", "y"}, rows);
    return p;
  }();
  return path;
}

std::filesystem::path train_config(const std::string& name, const std::string& extra,
                                   const std::string& kind = "bf") {
  return write_file(name, "data.path = " + small_csv().string() +
                              "\n"
                              "data.response = y\n"
                              "model.kind = " +
                              kind +
                              "\n"
                              "model.trees = 6\n"
                              "model.min_leaf = 3\n"
                              "seed = 11\n" +
                              extra);
}

}  // namespace

TEST_CASE("cli train and predict round trip", "[cli]") {
  const auto model_path = testutil::temp_path("cli_model.json");
  const auto config = train_config("cli_train.cfg", "out.model = " + model_path.string() + "\n");
  const auto train = run_cli("train --config '" + config.string() + "' --threads 2");
  REQUIRE(train.exit_code == 0);

  const auto preds_path = testutil::temp_path("cli_preds.csv");
  const auto predict = run_cli("predict --model '" + model_path.string() + "' --data '" +
                               small_csv().string() + "' --out '" + preds_path.string() + "'");
  REQUIRE(predict.exit_code == 0);

  // CLI predictions match the in-process model bit for bit.
  const auto file = model_file_from_json(read_json_file(model_path));
  const auto forest = forest_from_json(file.payload);
  CsvSchema schema;
  schema.roles["y"] = ColumnRole::kResponse;
  const auto ds = load_csv(small_csv(), schema);
  const auto table = read_csv(preds_path);
  REQUIRE(table.header == std::vector<std::string>{"prediction"});
  REQUIRE(table.rows.size() == ds.n_rows());
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    const auto x = ds.row(i);
    CHECK(parse_double(table.rows[i][0], "") == predict_forest(forest, x));
  }
}

TEST_CASE("cli training is reproducible byte for byte", "[cli]") {
  const auto a = testutil::temp_path("cli_model_a.json");
  const auto b = testutil::temp_path("cli_model_b.json");
  const auto config = train_config("cli_repro.cfg", "");
  REQUIRE(run_cli("train --config '" + config.string() + "' --out '" + a.string() + "'").exit_code ==
          0);
  REQUIRE(run_cli("train --config '" + config.string() + "' --out '" + b.string() + "'").exit_code ==
          0);
  CHECK(slurp(a) == slurp(b));

  SECTION("and independent of the thread count") {
    const auto c = testutil::temp_path("cli_model_c.json");
    REQUIRE(run_cli("train --config '" + config.string() + "' --out '" + c.string() +
                    "' --threads 4")
                .exit_code == 0);
    CHECK(slurp(a) == slurp(c));
  }
}

TEST_CASE("cli exit codes distinguish config, data, and usage errors", "[cli]") {
  SECTION("unknown config key is a config error") {
    const auto config = train_config("cli_unknown.cfg", "model.bogus_knob = 7\n");
    const auto result = run_cli("train --config '" + config.string() + "' --out '" +
                                testutil::temp_path("x.json").string() + "'");
    CHECK(result.exit_code == 1);
    CHECK(result.err.find("bogus_knob") != std::string::npos);
  }
  SECTION("missing data path is a config error") {
    const auto config = write_file("cli_nopath.cfg",
                                   "data.path = /nonexistent.csv\ndata.response = y\n"
                                   "model.kind = bf\nout.model = x.json\n");
    CHECK(run_cli("train --config '" + config.string() + "'").exit_code == 1);
  }
  SECTION("prediction with a missing column is a data error naming it") {
    const auto model_path = testutil::temp_path("cli_model_cols.json");
    const auto config =
        train_config("cli_cols.cfg", "out.model = " + model_path.string() + "\n");
    REQUIRE(run_cli("train --config '" + config.string() + "'").exit_code == 0);
    const auto bad = write_file("cli_bad_cols.csv", "f0,f1\n1,2\n");
    const auto result = run_cli("predict --model '" + model_path.string() + "' --data '" +
                                bad.string() + "' --out '" +
                                testutil::temp_path("p.csv").string() + "'");
    CHECK(result.exit_code == 2);
    CHECK(result.err.find("f2") != std::string::npos);
  }
  SECTION("missing subcommand is a usage error") {
    CHECK(run_cli("").exit_code == 1);
  }
}

TEST_CASE("cli cv runs a small spec end to end", "[cli]") {
  const auto csv_out = testutil::temp_path("cli_cv.csv");
  const auto json_out = testutil::temp_path("cli_cv.json");
  const auto spec = write_file("cli_cv.cfg", "data.path = " + small_csv().string() +
                                                 "\n"
                                                 "data.response = y\n"
                                                 "models = dt,bf\n"
                                                 "folds = 3\n"
                                                 "bf.trees = 5\n"
                                                 "seed = 3\n"
                                                 "out.csv = " +
                                                 csv_out.string() + "\nout.json = " +
                                                 json_out.string() + "\n");
  const auto result = run_cli("cv --spec '" + spec.string() + "' --threads 2");
  REQUIRE(result.exit_code == 0);
  CHECK(result.out.find("model") != std::string::npos);
  CHECK(result.out.find("DT") != std::string::npos);
  const auto table = read_csv(csv_out);
  CHECK(table.rows.size() == 2);
  const auto parsed = read_json_file(json_out);
  CHECK(parsed["metric"] == "rmse");
  CHECK(parsed["models"].size() == 2);
}

TEST_CASE("cli friedman emits one row per model", "[cli]") {
  const auto result = run_cli("friedman --repeats 1 --train-n 40 --test-n 50 --p 5 "
                              "--models bf,dt --trees 4 --seed 2 --threads 2");
  REQUIRE(result.exit_code == 0);
  CHECK(result.out.find("BF") != std::string::npos);
  CHECK(result.out.find("DT") != std::string::npos);
}

TEST_CASE("cli stability writes report and histogram files", "[cli]") {
  const auto report = testutil::temp_path("cli_stab.json");
  const auto hist = testutil::temp_path("cli_stab.csv");
  const auto result = run_cli("stability --data '" + small_csv().string() +
                              "' --response y --trunk-min-leaf 30 --draws 20 --mc-draws 20 "
                              "--seed 4 --threads 2 --out-report '" +
                              report.string() + "' --out-hist '" + hist.string() + "'");
  REQUIRE(result.exit_code == 0);
  const auto parsed = read_json_file(report);
  CHECK(parsed.contains("gaussian_bound"));
  CHECK(parsed["histograms"]["depth1"].size() >= 1);
  const auto table = read_csv(hist);
  CHECK(table.header ==
        std::vector<std::string>{"depth", "feature", "threshold", "frequency"});
}

TEST_CASE("cli branch worker equals an in-process forest fit", "[cli]") {
  // A worker handed the full dataset and a fixed seed must reproduce
  // fit_forest exactly.
  CsvSchema schema;
  schema.roles["y"] = ColumnRole::kResponse;
  const auto ds = load_csv(small_csv(), schema);
  ForestConfig config;
  config.n_trees = 5;
  config.seed = 314;
  config.tree.min_leaf_count = 3;
  const auto expected = fit_forest(ds, config, 2);

  json worker;
  worker["response"] = "y";
  worker["task"] = "regression";
  worker["class_labels"] = std::vector<std::string>{};
  worker["forest"] = forest_config_to_json(config);
  worker["threads"] = 2;
  const auto worker_cfg = testutil::temp_path("cli_worker.json");
  write_json_file(worker_cfg, worker, 2);

  const auto out = testutil::temp_path("cli_branch.json");
  const auto result = run_cli("branch-worker --chunk '" + small_csv().string() + "' --config '" +
                              worker_cfg.string() + "' --out '" + out.string() + "'");
  REQUIRE(result.exit_code == 0);
  const auto file = model_file_from_json(read_json_file(out));
  const auto forest = forest_from_json(file.payload);
  CHECK(forest.tree_seeds == expected.tree_seeds);
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    const auto x = ds.row(i);
    CHECK(predict_forest(forest, x) == predict_forest(expected, x));
  }

  SECTION("worker reruns produce identical bytes") {
    const auto again = testutil::temp_path("cli_branch2.json");
    REQUIRE(run_cli("branch-worker --chunk '" + small_csv().string() + "' --config '" +
                    worker_cfg.string() + "' --out '" + again.string() + "'")
                .exit_code == 0);
    CHECK(slurp(out) == slurp(again));
  }
  SECTION("corrupted chunks are data errors with a location") {
    const auto broken = write_file("cli_broken.csv", "f0,f1,f2,y\n1,2,3,4\n5,oops,7,8\n");
    const auto bad = run_cli("branch-worker --chunk '" + broken.string() + "' --config '" +
                             worker_cfg.string() + "' --out '" +
                             testutil::temp_path("nope.json").string() + "'");
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("row 3") != std::string::npos);
  }
}

TEST_CASE("cli per-branch ebf training equals in-process training", "[cli]") {
  const auto base = train_config("cli_ebf.cfg", "ebf.trunk_leaves = 3\n", "ebf");
  const auto in_process = testutil::temp_path("cli_ebf_ip.json");
  const auto per_branch = testutil::temp_path("cli_ebf_pb.json");
  REQUIRE(run_cli("train --config '" + base.string() + "' --out '" + in_process.string() + "'")
              .exit_code == 0);
  REQUIRE(run_cli("train --config '" + base.string() + "' --out '" + per_branch.string() +
                  "' --set ebf.process_per_branch=true --set out.dir='" +
                  testutil::temp_path("cli_ebf_work").string() + "'")
              .exit_code == 0);
  CHECK(slurp(in_process) == slurp(per_branch));
}
