#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixtensor/cli.hpp"
#include "test_util.hpp"

using namespace mixtensor;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::path(::testing::TempDir()) / ("mixtensor_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

SimScenario tiny_scenario() {
  SimScenario sc;
  sc.R_true = 2;
  sc.n_train = 60;
  sc.n_val = 40;
  sc.n_test = 30;
  sc.p = 8;
  sc.dims = {3, 2};
  sc.delta1 = 0.5;
  sc.sigma_beta = 1.5;
  sc.n_active = 3;
  sc.seed = 4;
  return sc;
}

}  // namespace

TEST(DatasetIO, RoundTrip) {
  const fs::path dir = temp_dir("roundtrip");
  SimScenario sc = tiny_scenario();
  SimulatedData sim = simulate_scenario(sc);
  write_dataset_csv(sim.train, (dir / "d.csv").string(), true);
  Dataset back = load_dataset_csv((dir / "d.csv").string(), false, &sim.train.shape);
  ASSERT_EQ(back.n(), sim.train.n());
  ASSERT_EQ(back.p(), sim.train.p());
  EXPECT_EQ((back.X - sim.train.X).lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_EQ((back.Y - sim.train.Y).lpNorm<Eigen::Infinity>(), 0);
  EXPECT_EQ(back.z, sim.train.z);
}

TEST(DatasetIO, InterceptHandling) {
  const fs::path dir = temp_dir("intercept");
  write_file(dir / "d.csv", "y:1,x:a\n1,0.5\n2,-1.25\n");
  Dataset with = load_dataset_csv((dir / "d.csv").string(), true);
  EXPECT_TRUE(with.intercept);
  EXPECT_EQ(with.p(), 2);
  EXPECT_DOUBLE_EQ(with.X(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(with.X(1, 1), -1.25);
  Dataset without = load_dataset_csv((dir / "d.csv").string(), false);
  EXPECT_FALSE(without.intercept);
  EXPECT_EQ(without.p(), 1);
}

TEST(DatasetIO, ParseErrorsCarryLineNumbers) {
  const fs::path dir = temp_dir("errors");
  write_file(dir / "bad_value.csv", "y:1,x:1\n1,0.5\n2,oops\n");
  try {
    load_dataset_csv((dir / "bad_value.csv").string());
    FAIL() << "expected data_error";
  } catch (const data_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  write_file(dir / "bad_header.csv", "y:1,w:1\n1,0.5\n");
  EXPECT_THROW(load_dataset_csv((dir / "bad_header.csv").string()), data_error);
  write_file(dir / "bad_fields.csv", "y:1,x:1\n1,0.5,9\n");
  EXPECT_THROW(load_dataset_csv((dir / "bad_fields.csv").string()), data_error);
  write_file(dir / "zero_based.csv", "y:1,x:1\n0,0.5\n");
  EXPECT_THROW(load_dataset_csv((dir / "zero_based.csv").string()), data_error);
}

TEST(Serialize, ModelRoundTrip) {
  std::mt19937_64 rng(5);
  MixtureParams theta = testutil::random_theta(rng, 3, 6, {3, 2});
  FitMeta meta;
  meta.penalty = "global";
  meta.lambda = 1.25;
  meta.iterations = 17;
  json j = model_to_json(theta, &meta);
  MixtureParams back = model_from_json(j);
  EXPECT_EQ(back.R, theta.R);
  EXPECT_EQ(back.p, theta.p);
  EXPECT_EQ((back.delta - theta.delta).lpNorm<Eigen::Infinity>(), 0.0);
  for (int r = 0; r < 3; ++r)
    for (int m = 0; m < 2; ++m)
      EXPECT_EQ((back.beta[r][m] - theta.beta[r][m]).lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_EQ(j["fit"]["lambda"], 1.25);

  json bad = j;
  bad.erase("format_version");
  EXPECT_THROW(model_from_json(bad), data_error);
}

TEST(Serialize, TensorRoundTrip) {
  ProbTensor t(Shape({2, 2}), {0.1, 0.2, 0.3, 0.4});
  ProbTensor back = tensor_from_json(tensor_to_json(t));
  EXPECT_EQ(back.values, t.values);
  EXPECT_TRUE(back.shape == t.shape);
}

TEST(Serialize, ScenarioRejectsUnknownKeys) {
  json j = scenario_to_json(tiny_scenario());
  j["typo_key"] = 1;
  EXPECT_THROW(scenario_from_json(j), config_error);
}

TEST(CmdSimulate, WritesDeterministicFiles) {
  const fs::path dir = temp_dir("simulate");
  write_json_file(scenario_to_json(tiny_scenario()), (dir / "scenario.json").string());
  SimulateCmd cmd;
  cmd.scenario_file = (dir / "scenario.json").string();
  cmd.out_dir = (dir / "run1").string();
  cmd_simulate(cmd);
  for (const char* f : {"train.csv", "val.csv", "test.csv", "truth.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "run1" / f)) << f;

  cmd.out_dir = (dir / "run2").string();
  cmd_simulate(cmd);
  for (const char* f : {"train.csv", "val.csv", "test.csv", "truth.json"})
    EXPECT_EQ(slurp(dir / "run1" / f), slurp(dir / "run2" / f)) << f;

  Dataset train = load_dataset_csv((dir / "run1" / "train.csv").string(), false);
  EXPECT_EQ(train.n(), 60);
  Dataset val = load_dataset_csv((dir / "run1" / "val.csv").string(), false);
  EXPECT_EQ(val.n(), 40);
}

TEST(CmdSimulate, RejectsInvalidScenario) {
  const fs::path dir = temp_dir("badscenario");
  SimScenario sc = tiny_scenario();
  json j = scenario_to_json(sc);
  j["R_true"] = 3;
  j["delta1"] = 0.7;  // second weight would be negative
  write_json_file(j, (dir / "scenario.json").string());
  SimulateCmd cmd;
  cmd.scenario_file = (dir / "scenario.json").string();
  cmd.out_dir = (dir / "out").string();
  EXPECT_THROW(cmd_simulate(cmd), config_error);
}

TEST(CmdFit, SingleLambdaDeterministic) {
  const fs::path dir = temp_dir("fitsingle");
  write_json_file(scenario_to_json(tiny_scenario()), (dir / "scenario.json").string());
  SimulateCmd sim;
  sim.scenario_file = (dir / "scenario.json").string();
  sim.out_dir = dir.string();
  cmd_simulate(sim);

  FitCmd cmd;
  cmd.train_file = (dir / "train.csv").string();
  cmd.R = 2;
  cmd.lambda = 3.0;
  cmd.seed = 11;
  cmd.max_em_iters = 60;
  cmd.no_intercept = true;  // simulated data has no intercept
  cmd.out_dir = (dir / "fit1").string();
  cmd_fit(cmd);
  cmd.out_dir = (dir / "fit2").string();
  cmd_fit(cmd);
  EXPECT_EQ(slurp(dir / "fit1" / "model.json"), slurp(dir / "fit2" / "model.json"));
  MixtureParams theta =
      model_from_json(read_json_file((dir / "fit1" / "model.json").string()));
  EXPECT_EQ(theta.R, 2);
  EXPECT_FALSE(theta.intercept);
}

TEST(CmdFit, PathModeSelectsAndReports) {
  const fs::path dir = temp_dir("fitpath");
  write_json_file(scenario_to_json(tiny_scenario()), (dir / "scenario.json").string());
  SimulateCmd sim;
  sim.scenario_file = (dir / "scenario.json").string();
  sim.out_dir = dir.string();
  cmd_simulate(sim);

  FitCmd cmd;
  cmd.train_file = (dir / "train.csv").string();
  cmd.val_file = (dir / "val.csv").string();
  cmd.R = 2;
  cmd.n_lambda = 5;
  cmd.lambda_min_ratio = 0.05;
  cmd.seed = 13;
  cmd.max_em_iters = 80;
  cmd.no_intercept = true;
  cmd.out_dir = (dir / "fit").string();
  json report = cmd_fit(cmd);
  EXPECT_TRUE(report.contains("selected_lambda"));
  const std::string csv = slurp(dir / "fit" / "path_report.csv");
  EXPECT_NE(csv.find("lambda,val_metric,effective_R"), std::string::npos);
  // 5 grid rows + header
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(CmdFit, SeparatePenaltyPath) {
  const fs::path dir = temp_dir("fitsep");
  write_json_file(scenario_to_json(tiny_scenario()), (dir / "scenario.json").string());
  SimulateCmd sim;
  sim.scenario_file = (dir / "scenario.json").string();
  sim.out_dir = dir.string();
  cmd_simulate(sim);

  FitCmd cmd;
  cmd.train_file = (dir / "train.csv").string();
  cmd.val_file = (dir / "val.csv").string();
  cmd.penalty = "sep-l1";
  cmd.n_lambda = 4;
  cmd.lambda_min_ratio = 0.05;
  cmd.seed = 17;
  cmd.max_em_iters = 60;
  cmd.no_intercept = true;
  cmd.out_dir = (dir / "fit").string();
  json report = cmd_fit(cmd);
  EXPECT_TRUE(report.contains("selected_lambda_per_response"));
  EXPECT_EQ(report["selected_lambda_per_response"].size(), 2u);
}

TEST(CmdEvaluate, TruthModelScoresZeroDistance) {
  const fs::path dir = temp_dir("evaluate");
  write_json_file(scenario_to_json(tiny_scenario()), (dir / "scenario.json").string());
  SimulateCmd sim;
  sim.scenario_file = (dir / "scenario.json").string();
  sim.out_dir = dir.string();
  cmd_simulate(sim);

  EvaluateCmd cmd;
  cmd.model_file = (dir / "truth.json").string();
  cmd.data_file = (dir / "test.csv").string();
  cmd.truth_file = (dir / "truth.json").string();
  cmd.out_file = (dir / "report.json").string();
  json rep = cmd_evaluate(cmd);
  EXPECT_NEAR(rep["sqrt_avg_kl"].get<double>(), 0.0, 1e-12);
  EXPECT_NEAR(rep["hellinger_avg"].get<double>(), 0.0, 1e-12);
  EXPECT_GT(rep["deviance"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
}

TEST(CmdPredict, WritesOneBasedCategories) {
  const fs::path dir = temp_dir("predict");
  write_json_file(scenario_to_json(tiny_scenario()), (dir / "scenario.json").string());
  SimulateCmd sim;
  sim.scenario_file = (dir / "scenario.json").string();
  sim.out_dir = dir.string();
  cmd_simulate(sim);

  PredictCmd cmd;
  cmd.model_file = (dir / "truth.json").string();
  cmd.data_file = (dir / "test.csv").string();
  cmd.out_file = (dir / "pred.csv").string();
  cmd_predict(cmd);
  std::ifstream in(dir / "pred.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "y:1,y:2");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++rows;
    const int y1 = line[0] - '0';
    EXPECT_GE(y1, 1);
    EXPECT_LE(y1, 3);
  }
  EXPECT_EQ(rows, 30);
}

TEST(CmdBenchmark, TinyGridRunsAndIsDeterministic) {
  const fs::path dir = temp_dir("bench");
  SimScenario sc = tiny_scenario();
  sc.n_train = 50;
  sc.n_val = 30;
  sc.n_test = 20;
  json grid;
  grid["scenarios"] = json::array({scenario_to_json(sc)});
  grid["n_lambda"] = 4;
  grid["lambda_min_ratio"] = 0.05;
  write_json_file(grid, (dir / "grid.json").string());

  BenchmarkCmd cmd;
  cmd.grid_file = (dir / "grid.json").string();
  cmd.methods = {"mix-1", "mix-2", "sep-l1"};
  cmd.reps = 2;
  cmd.seed = 3;
  cmd.max_em_iters = 60;
  cmd.out_dir = (dir / "b1").string();
  json summary = cmd_benchmark(cmd);
  EXPECT_TRUE(fs::exists(dir / "b1" / "benchmark_raw.csv"));
  EXPECT_TRUE(fs::exists(dir / "b1" / "benchmark_summary.csv"));
  const std::string raw = slurp(dir / "b1" / "benchmark_raw.csv");
  EXPECT_EQ(std::count(raw.begin(), raw.end(), '\n'), 1 + 3 * 2);  // header + methods*reps
  EXPECT_EQ(raw.find(",1\n"), std::string::npos);  // no failed rows

  cmd.out_dir = (dir / "b2").string();
  cmd_benchmark(cmd);
  EXPECT_EQ(slurp(dir / "b1" / "benchmark_raw.csv"), slurp(dir / "b2" / "benchmark_raw.csv"));
}

TEST(CmdBenchmark, RejectsUnknownMethodAndKeys) {
  const fs::path dir = temp_dir("benchbad");
  json grid;
  grid["scenarios"] = json::array({scenario_to_json(tiny_scenario())});
  grid["oops"] = 1;
  write_json_file(grid, (dir / "grid.json").string());
  BenchmarkCmd cmd;
  cmd.grid_file = (dir / "grid.json").string();
  cmd.methods = {"mix-1"};
  cmd.out_dir = dir.string();
  EXPECT_THROW(cmd_benchmark(cmd), config_error);

  EXPECT_THROW(parse_method("boost-tree"), config_error);
  EXPECT_THROW(parse_method("mix-0"), config_error);
  BenchmarkMethod m = parse_method("mix-14");
  EXPECT_EQ(m.R, 14);
}
