// mixtensor command line: simulate | fit | predict | evaluate | benchmark.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 solver error.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mixtensor/cli.hpp"
#include "mixtensor/parallel.hpp"

namespace {

int dispatch(CLI::App& app) {
  using namespace mixtensor;

  auto* sim = app.get_subcommand("simulate");
  auto* fit = app.get_subcommand("fit");
  auto* pred = app.get_subcommand("predict");
  auto* eval = app.get_subcommand("evaluate");
  auto* bench = app.get_subcommand("benchmark");
  if (sim->parsed()) {
    SimulateCmd c;
    c.scenario_file = sim->get_option("--scenario")->as<std::string>();
    c.out_dir = sim->get_option("--out")->as<std::string>();
    if (sim->count("--seed")) c.seed = sim->get_option("--seed")->as<std::uint64_t>();
    json manifest = cmd_simulate(c);
    std::cout << manifest.dump(2) << std::endl;
    return 0;
  }
  if (fit->parsed()) {
    FitCmd c;
    c.train_file = fit->get_option("--train")->as<std::string>();
    c.val_file = fit->get_option("--val")->as<std::string>();
    c.out_dir = fit->get_option("--out")->as<std::string>();
    c.R = fit->get_option("--R")->as<int>();
    c.penalty = fit->get_option("--penalty")->as<std::string>();
    if (fit->count("--lambda")) c.lambda = fit->get_option("--lambda")->as<double>();
    c.n_lambda = fit->get_option("--n-lambda")->as<int>();
    c.lambda_min_ratio = fit->get_option("--lambda-min-ratio")->as<double>();
    c.seed = fit->get_option("--seed")->as<std::uint64_t>();
    c.threads = fit->count("--threads") ? fit->get_option("--threads")->as<int>()
                                        : default_thread_count();
    c.no_intercept = fit->get_option("--no-intercept")->as<bool>();
    c.max_em_iters = fit->get_option("--max-iters")->as<int>();
    json report = cmd_fit(c);
    std::cout << report.dump(2) << std::endl;
    return 0;
  }
  if (pred->parsed()) {
    PredictCmd c;
    c.model_file = pred->get_option("--model")->as<std::string>();
    c.data_file = pred->get_option("--data")->as<std::string>();
    c.out_file = pred->get_option("--out")->as<std::string>();
    c.no_intercept = pred->get_option("--no-intercept")->as<bool>();
    cmd_predict(c);
    return 0;
  }
  if (eval->parsed()) {
    EvaluateCmd c;
    c.model_file = eval->get_option("--model")->as<std::string>();
    c.data_file = eval->get_option("--data")->as<std::string>();
    c.truth_file = eval->get_option("--truth")->as<std::string>();
    c.out_file = eval->get_option("--out")->as<std::string>();
    c.no_intercept = eval->get_option("--no-intercept")->as<bool>();
    json report = cmd_evaluate(c);
    std::cout << report.dump(2) << std::endl;
    return 0;
  }
  if (bench->parsed()) {
    BenchmarkCmd c;
    c.grid_file = bench->get_option("--grid")->as<std::string>();
    c.methods = bench->get_option("--methods")->as<std::vector<std::string>>();
    c.reps = bench->get_option("--reps")->as<int>();
    c.seed = bench->get_option("--seed")->as<std::uint64_t>();
    c.threads = bench->count("--threads") ? bench->get_option("--threads")->as<int>()
                                          : default_thread_count();
    c.out_dir = bench->get_option("--out")->as<std::string>();
    c.penalty = bench->get_option("--penalty")->as<std::string>();
    c.max_em_iters = bench->get_option("--max-iters")->as<int>();
    json summary = cmd_benchmark(c);
    std::cout << summary.dump(2) << std::endl;
    return 0;
  }
  std::cerr << app.help() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixtensor: low-rank conditional probability tensor regression"};
  app.require_subcommand(0, 1);

  auto* sim = app.add_subcommand("simulate", "generate train/val/test data from a scenario");
  sim->add_option("--scenario", "scenario JSON file")->required();
  sim->add_option("--out", "output directory")->default_val(".");
  sim->add_option("--seed", "override the scenario seed");

  auto* fit = app.add_subcommand("fit", "fit a model over a tuning-parameter path");
  fit->add_option("--train", "training dataset CSV")->required();
  fit->add_option("--val", "validation dataset CSV")->default_val("");
  fit->add_option("--out", "output directory")->default_val(".");
  fit->add_option("--R", "mixture components")->default_val(1);
  fit->add_option("--penalty", "global | local | sep-group | sep-l1")->default_val("global");
  fit->add_option("--lambda", "single tuning value (skips the path)");
  fit->add_option("--n-lambda", "grid size")->default_val(25);
  fit->add_option("--lambda-min-ratio", "smallest grid value / lambda_max")->default_val(0.01);
  fit->add_option("--seed", "rng seed")->default_val(1);
  fit->add_option("--threads", "parallel fits (default: MIXTENSOR_THREADS or 1)");
  fit->add_flag("--no-intercept", "do not prepend an intercept column");
  fit->add_option("--max-iters", "EM iteration cap")->default_val(500);

  auto* pred = app.add_subcommand("predict", "MAP category vectors for a dataset");
  pred->add_option("--model", "model JSON file")->required();
  pred->add_option("--data", "dataset CSV")->required();
  pred->add_option("--out", "output CSV")->required();
  pred->add_flag("--no-intercept", "do not prepend an intercept column");

  auto* eval = app.add_subcommand("evaluate", "test-set metrics for a fitted model");
  eval->add_option("--model", "model JSON file")->required();
  eval->add_option("--data", "dataset CSV")->required();
  eval->add_option("--truth", "generating model JSON (enables tensor metrics)")
      ->default_val("");
  eval->add_option("--out", "report JSON file")->default_val("");
  eval->add_flag("--no-intercept", "do not prepend an intercept column");

  auto* bench = app.add_subcommand("benchmark", "replicated scenario-grid comparison");
  bench->add_option("--grid", "scenario grid JSON file")->required();
  bench->add_option("--methods", "methods: mix-<R>, sep-group, sep-l1")
      ->required()
      ->delimiter(',');
  bench->add_option("--reps", "replications per scenario")->default_val(1);
  bench->add_option("--seed", "base seed")->default_val(1);
  bench->add_option("--threads", "parallel replications (default: MIXTENSOR_THREADS or 1)");
  bench->add_option("--out", "output directory")->default_val(".");
  bench->add_option("--penalty", "penalty for mix methods: global | local")
      ->default_val("global");
  bench->add_option("--max-iters", "EM iteration cap")->default_val(500);

  try {
    app.parse(argc, argv);
    return dispatch(app);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  } catch (const mixtensor::config_error& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const mixtensor::data_error& e) {
    std::cerr << "data error: " << e.what() << std::endl;
    return 3;
  } catch (const mixtensor::solver_error& e) {
    std::cerr << "solver error: " << e.what() << std::endl;
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  }
}
