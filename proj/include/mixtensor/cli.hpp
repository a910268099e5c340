#pragma once

// Command implementations behind the CLI: simulate | fit | predict |
// evaluate | benchmark. Every command validates its full configuration
// before any compute and is a pure function of (input files, flags, seed),
// so reruns produce identical bytes. Reports embed enough provenance
// (seeds, grids, versions) to rerun them.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mixtensor/dataset.hpp"
#include "mixtensor/errors.hpp"
#include "mixtensor/metrics.hpp"
#include "mixtensor/model.hpp"
#include "mixtensor/parallel.hpp"
#include "mixtensor/path.hpp"
#include "mixtensor/serialize.hpp"
#include "mixtensor/simulate.hpp"
#include "mixtensor/solver.hpp"

namespace mixtensor {

constexpr const char* kToolVersion = "0.1.0";

namespace detail {
inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw data_error("cannot create output directory '" + dir + "'");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

struct SimulateCmd {
  std::string scenario_file;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;  // overrides the scenario's seed
};

inline json cmd_simulate(const SimulateCmd& cmd) {
  SimScenario sc = scenario_from_json(read_json_file(cmd.scenario_file));
  if (cmd.seed) sc.seed = *cmd.seed;
  sc.validate();
  detail::ensure_dir(cmd.out_dir);
  const SimulatedData sim = simulate_scenario(sc);
  const std::filesystem::path dir(cmd.out_dir);
  write_dataset_csv(sim.train, (dir / "train.csv").string(), sc.keep_z);
  write_dataset_csv(sim.val, (dir / "val.csv").string(), sc.keep_z);
  write_dataset_csv(sim.test, (dir / "test.csv").string(), sc.keep_z);
  write_json_file(model_to_json(sim.truth.theta_star), (dir / "truth.json").string());
  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["scenario"] = scenario_to_json(sc);
  std::vector<int> active1;  // 1-based in reports
  for (int a : sim.truth.active_set) active1.push_back(a + 1);
  manifest["active_predictors"] = active1;
  manifest["files"] = {{"train", "train.csv"},
                       {"val", "val.csv"},
                       {"test", "test.csv"},
                       {"truth", "truth.json"}};
  write_json_file(manifest, (dir / "manifest.json").string());
  return manifest;
}

// ---------------------------------------------------------------------------
// fit

struct FitCmd {
  std::string train_file;
  std::string val_file;  // required unless a single lambda is given
  std::string out_dir = ".";
  int R = 1;
  std::string penalty = "global";
  std::optional<double> lambda;  // single fit instead of a path
  int n_lambda = 25;
  double lambda_min_ratio = 0.01;
  std::uint64_t seed = 1;
  int threads = 1;
  bool no_intercept = false;
  int max_em_iters = 500;
};

inline json cmd_fit(const FitCmd& cmd) {
  const PenaltyKind kind = penalty_kind_from_string(cmd.penalty);
  if (cmd.R < 1) throw config_error("fit: --R must be >= 1");
  if ((kind == PenaltyKind::separate_group || kind == PenaltyKind::separate_l1) &&
      cmd.R != 1)
    throw config_error("fit: separate penalties imply R = 1");
  if (!cmd.lambda && cmd.val_file.empty())
    throw config_error("fit: a validation file is required for path selection "
                       "(or pass a single --lambda)");
  PathSpec spec;
  spec.n_lambda = cmd.n_lambda;
  spec.lambda_min_ratio = cmd.lambda_min_ratio;
  spec.validate();
  SolverConfig config;
  config.seed = cmd.seed;
  config.threads = cmd.threads;
  config.max_em_iters = cmd.max_em_iters;
  config.validate();

  const Dataset train = load_dataset_csv(cmd.train_file, !cmd.no_intercept);
  detail::ensure_dir(cmd.out_dir);
  const std::filesystem::path dir(cmd.out_dir);

  FitMeta meta;
  meta.penalty = cmd.penalty;
  meta.seed = cmd.seed;
  json report;
  report["tool_version"] = kToolVersion;
  report["train"] = cmd.train_file;
  report["penalty"] = cmd.penalty;
  report["R"] = cmd.R;
  report["seed"] = cmd.seed;

  MixtureParams theta;
  if (cmd.lambda) {
    PenaltySpec pen;
    pen.kind = kind;
    if (pen.is_separate())
      pen.lambda_per_response.assign(train.shape.num_responses(), *cmd.lambda);
    else
      pen.lambda = *cmd.lambda;
    FitResult fr = fit(train, cmd.R, pen, config);
    theta = fr.theta;
    meta.lambda = *cmd.lambda;
    meta.iterations = fr.iterations;
    meta.converged = fr.converged;
    meta.final_objective = fr.final_objective();
    PathResult single;
    PathEntry e;
    e.lambda = *cmd.lambda;
    e.effective_R = fr.active_components;
    e.support_size = static_cast<int>(fr.support.size());
    e.iterations = fr.iterations;
    e.converged = fr.converged;
    if (!cmd.val_file.empty()) {
      const Dataset val = load_dataset_csv(cmd.val_file, !cmd.no_intercept, &train.shape);
      e.val_metric = -log_likelihood(theta, val);
    }
    single.entries.push_back(e);
    single.selected = 0;
    write_path_report_csv(single, (dir / "path_report.csv").string());
    report["lambda"] = *cmd.lambda;
  } else {
    const Dataset val = load_dataset_csv(cmd.val_file, !cmd.no_intercept, &train.shape);
    report["val"] = cmd.val_file;
    report["n_lambda"] = cmd.n_lambda;
    report["lambda_min_ratio"] = cmd.lambda_min_ratio;
    if (kind == PenaltyKind::separate_group || kind == PenaltyKind::separate_l1) {
      SeparatePathResult sep = tune_separate(train, val, kind, spec, config);
      theta = sep.theta;
      meta.lambda_per_response = sep.selected_lambdas;
      write_separate_path_report_csv(sep, (dir / "path_report.csv").string());
      report["selected_lambda_per_response"] = sep.selected_lambdas;
    } else {
      PenaltySpec pen;
      pen.kind = kind;
      PathResult path = solve_path(train, val, cmd.R, pen, spec, config);
      const FitResult& fr = path.selected_fit();
      theta = fr.theta;
      meta.lambda = path.entries[path.selected].lambda;
      meta.iterations = fr.iterations;
      meta.converged = fr.converged;
      meta.final_objective = fr.final_objective();
      write_path_report_csv(path, (dir / "path_report.csv").string());
      report["selected_lambda"] = meta.lambda;
      report["selected_effective_R"] = path.entries[path.selected].effective_R;
    }
  }
  write_json_file(model_to_json(theta, &meta), (dir / "model.json").string());
  report["model"] = "model.json";
  report["path_report"] = "path_report.csv";
  return report;
}

// ---------------------------------------------------------------------------
// predict

struct PredictCmd {
  std::string model_file;
  std::string data_file;
  std::string out_file;
  bool no_intercept = false;
};

inline void cmd_predict(const PredictCmd& cmd) {
  const MixtureParams theta = model_from_json(read_json_file(cmd.model_file));
  const Dataset data =
      load_dataset_csv(cmd.data_file, theta.intercept && !cmd.no_intercept, &theta.shape);
  if (data.p() != theta.p)
    throw dimension_error("predict: dataset has " + std::to_string(data.p()) +
                          " predictors, model expects " + std::to_string(theta.p));
  std::ofstream out(cmd.out_file);
  if (!out) throw data_error("cannot write '" + cmd.out_file + "'");
  for (int m = 0; m < theta.shape.num_responses(); ++m) {
    if (m) out << ',';
    out << "y:" << (m + 1);
  }
  out << '\n';
  for (int i = 0; i < data.n(); ++i) {
    const std::vector<int> yhat = predict_map(theta, data.X.row(i).transpose());
    for (int m = 0; m < theta.shape.num_responses(); ++m) {
      if (m) out << ',';
      out << (yhat[m] + 1);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateCmd {
  std::string model_file;
  std::string data_file;
  std::string truth_file;  // optional generating model for tensor metrics
  std::string out_file;    // optional; report always returned
  bool no_intercept = false;
};

inline json cmd_evaluate(const EvaluateCmd& cmd) {
  const MixtureParams theta = model_from_json(read_json_file(cmd.model_file));
  const Dataset data =
      load_dataset_csv(cmd.data_file, theta.intercept && !cmd.no_intercept, &theta.shape);
  std::optional<MixtureParams> truth;
  if (!cmd.truth_file.empty())
    truth = model_from_json(read_json_file(cmd.truth_file));
  const EvalMetrics m = evaluate_model(theta, data, truth ? &*truth : nullptr);
  json rep;
  rep["tool_version"] = kToolVersion;
  rep["model"] = cmd.model_file;
  rep["data"] = cmd.data_file;
  rep["n"] = data.n();
  rep["deviance"] = m.deviance;
  rep["joint_error_rate"] = m.joint_error_rate;
  if (truth) {
    rep["truth"] = cmd.truth_file;
    rep["sqrt_avg_kl"] = m.kl_infinite ? json("inf") : json(m.sqrt_avg_kl);
    rep["sqrt_avg_kl_clamped"] = m.sqrt_avg_kl_clamped;
    rep["kl_infinite"] = m.kl_infinite;
    rep["hellinger_avg"] = m.hellinger_avg;
  }
  if (!cmd.out_file.empty()) write_json_file(rep, cmd.out_file);
  return rep;
}

// ---------------------------------------------------------------------------
// benchmark

struct BenchmarkMethod {
  bool separate = false;
  PenaltyKind kind = PenaltyKind::global;
  int R = 1;
  std::string name;
};

inline BenchmarkMethod parse_method(const std::string& s) {
  BenchmarkMethod m;
  m.name = s;
  if (s == "sep-group") {
    m.separate = true;
    m.kind = PenaltyKind::separate_group;
    return m;
  }
  if (s == "sep-l1") {
    m.separate = true;
    m.kind = PenaltyKind::separate_l1;
    return m;
  }
  if (s.rfind("mix-", 0) == 0) {
    try {
      m.R = std::stoi(s.substr(4));
    } catch (...) {
      throw config_error("benchmark: bad method '" + s + "'");
    }
    if (m.R < 1) throw config_error("benchmark: bad method '" + s + "'");
    m.kind = PenaltyKind::global;
    return m;
  }
  throw config_error("benchmark: unknown method '" + s + "' (mix-<R>, sep-group, sep-l1)");
}

struct BenchmarkCmd {
  std::string grid_file;            // {"scenarios": [...], optional path spec}
  std::vector<std::string> methods;  // e.g. mix-1 mix-2 sep-group sep-l1
  int reps = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir = ".";
  std::string penalty = "global";   // penalty for the mix-<R> methods
  int max_em_iters = 500;
};

struct BenchmarkRecord {
  std::string scenario;
  std::string method;
  int rep = 0;
  EvalMetrics metrics;
  int effective_R = 0;
  int support_size = 0;
  double selected_lambda = 0.0;
  bool failed = false;
  std::string note;
};

inline json cmd_benchmark(const BenchmarkCmd& cmd) {
  if (cmd.reps < 1) throw config_error("benchmark: reps must be >= 1");
  if (cmd.methods.empty()) throw config_error("benchmark: no methods given");
  std::vector<BenchmarkMethod> methods;
  for (const auto& s : cmd.methods) methods.push_back(parse_method(s));
  const PenaltyKind mix_kind = penalty_kind_from_string(cmd.penalty);
  if (mix_kind != PenaltyKind::global && mix_kind != PenaltyKind::local)
    throw config_error("benchmark: --penalty must be global or local for mix methods");

  const json grid_json = read_json_file(cmd.grid_file);
  if (!grid_json.contains("scenarios") || !grid_json["scenarios"].is_array() ||
      grid_json["scenarios"].empty())
    throw config_error("benchmark: grid file needs a non-empty 'scenarios' array");
  for (auto it = grid_json.begin(); it != grid_json.end(); ++it)
    if (it.key() != "scenarios" && it.key() != "n_lambda" && it.key() != "lambda_min_ratio")
      throw config_error("benchmark: unknown key '" + it.key() + "' in grid file");
  std::vector<SimScenario> scenarios;
  for (const auto& js : grid_json["scenarios"]) scenarios.push_back(scenario_from_json(js));
  PathSpec spec;
  if (grid_json.contains("n_lambda")) spec.n_lambda = grid_json["n_lambda"].get<int>();
  if (grid_json.contains("lambda_min_ratio"))
    spec.lambda_min_ratio = grid_json["lambda_min_ratio"].get<double>();
  spec.validate();
  detail::ensure_dir(cmd.out_dir);

  const std::size_t tasks = scenarios.size() * static_cast<std::size_t>(cmd.reps);
  std::vector<std::vector<BenchmarkRecord>> records(tasks);  // per (scenario, rep)

  parallel_for(tasks, cmd.threads, [&](std::size_t task) {
    const std::size_t si = task / cmd.reps;
    const int rep = static_cast<int>(task % cmd.reps);
    SimScenario sc = scenarios[si];
    sc.seed = derive_seed(derive_seed(sc.seed ^ splitmix64(cmd.seed), si), rep);
    const SimulatedData sim = simulate_scenario(sc);
    auto& out = records[task];
    out.resize(methods.size());
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      BenchmarkRecord& rec = out[mi];
      rec.scenario = scenarios[si].name;
      rec.method = methods[mi].name;
      rec.rep = rep + 1;
      SolverConfig config;
      config.seed = derive_seed(sc.seed, 100 + mi);
      config.max_em_iters = cmd.max_em_iters;
      try {
        MixtureParams theta;
        if (methods[mi].separate) {
          SeparatePathResult sep =
              tune_separate(sim.train, sim.val, methods[mi].kind, spec, config);
          theta = sep.theta;
          rec.effective_R = 1;
          std::vector<char> any(sim.train.p(), 0);
          for (int m = 0; m < sim.train.shape.num_responses(); ++m)
            for (int j = 0; j < sim.train.p(); ++j)
              if ((theta.beta[0][m].row(j).array() != 0.0).any()) any[j] = 1;
          rec.support_size = 0;
          for (int j = sim.train.intercept ? 1 : 0; j < sim.train.p(); ++j)
            rec.support_size += any[j];
        } else {
          PenaltySpec pen;
          pen.kind = mix_kind;
          PathResult path = solve_path(sim.train, sim.val, methods[mi].R, pen, spec, config);
          theta = path.selected_fit().theta;
          rec.effective_R = path.entries[path.selected].effective_R;
          rec.support_size = path.entries[path.selected].support_size;
          rec.selected_lambda = path.entries[path.selected].lambda;
        }
        rec.metrics = evaluate_model(theta, sim.test, &sim.truth.theta_star);
      } catch (const std::exception& ex) {
        rec.failed = true;
        rec.note = ex.what();
      }
    }
  });

  const std::filesystem::path dir(cmd.out_dir);
  {
    std::ofstream out(dir / "benchmark_raw.csv");
    if (!out) throw data_error("cannot write benchmark_raw.csv");
    out << "scenario,method,rep,sqrt_avg_kl,hellinger_avg,deviance,joint_error_rate,"
           "effective_R,support_size,selected_lambda,failed\n";
    for (const auto& group : records)
      for (const auto& r : group) {
        out << r.scenario << ',' << r.method << ',' << r.rep << ','
            << detail::format_double(r.metrics.sqrt_avg_kl) << ','
            << detail::format_double(r.metrics.hellinger_avg) << ','
            << detail::format_double(r.metrics.deviance) << ','
            << detail::format_double(r.metrics.joint_error_rate) << ',' << r.effective_R
            << ',' << r.support_size << ',' << detail::format_double(r.selected_lambda)
            << ',' << (r.failed ? 1 : 0) << '\n';
      }
  }

  json summary;
  summary["tool_version"] = kToolVersion;
  summary["grid_file"] = cmd.grid_file;
  summary["reps"] = cmd.reps;
  summary["seed"] = cmd.seed;
  summary["methods"] = cmd.methods;
  summary["n_lambda"] = spec.n_lambda;
  summary["lambda_min_ratio"] = spec.lambda_min_ratio;
  {
    std::ofstream out(dir / "benchmark_summary.csv");
    if (!out) throw data_error("cannot write benchmark_summary.csv");
    out << "scenario,method,metric,mean,median,se,count\n";
    const char* metric_names[4] = {"sqrt_avg_kl", "hellinger_avg", "deviance",
                                   "joint_error_rate"};
    json agg = json::array();
    for (const auto& sc : scenarios)
      for (const auto& me : methods) {
        std::vector<std::vector<double>> vals(4);
        std::vector<double> eff;
        for (const auto& group : records)
          for (const auto& r : group) {
            if (r.failed || r.scenario != sc.name || r.method != me.name) continue;
            vals[0].push_back(r.metrics.sqrt_avg_kl);
            vals[1].push_back(r.metrics.hellinger_avg);
            vals[2].push_back(r.metrics.deviance);
            vals[3].push_back(r.metrics.joint_error_rate);
            eff.push_back(r.effective_R);
          }
        json row;
        row["scenario"] = sc.name;
        row["method"] = me.name;
        for (int k = 0; k < 4; ++k) {
          const SummaryStat st = summarize(vals[k]);
          out << sc.name << ',' << me.name << ',' << metric_names[k] << ','
              << detail::format_double(st.mean) << ',' << detail::format_double(st.median)
              << ',' << detail::format_double(st.se) << ',' << st.count << '\n';
          row[metric_names[k]] = {{"mean", st.mean}, {"median", st.median},
                                  {"se", st.se},     {"count", st.count}};
        }
        const SummaryStat ef = summarize(eff);
        row["effective_R"] = {{"mean", ef.mean}, {"median", ef.median}};
        agg.push_back(row);
      }
    summary["results"] = agg;
  }
  write_json_file(summary, (dir / "benchmark_summary.json").string());
  return summary;
}

}  // namespace mixtensor
