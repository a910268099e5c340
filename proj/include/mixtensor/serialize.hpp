#pragma once

// Versioned JSON documents for models, tensors and scenarios, plus the
// delimited path/benchmark reports. Numbers round-trip exactly (shortest
// representation), so rewriting an unchanged object is byte-identical.

#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "mixtensor/dataset.hpp"
#include "mixtensor/errors.hpp"
#include "mixtensor/model.hpp"
#include "mixtensor/path.hpp"
#include "mixtensor/prob_tensor.hpp"
#include "mixtensor/simulate.hpp"
#include "mixtensor/solver.hpp"

namespace mixtensor {

using json = nlohmann::json;

constexpr const char* kModelFormatVersion = "1";

struct FitMeta {
  std::string penalty = "global";
  double lambda = 0.0;
  std::vector<double> lambda_per_response;
  int iterations = 0;
  bool converged = false;
  double final_objective = 0.0;
  std::uint64_t seed = 0;
};

inline json model_to_json(const MixtureParams& theta, const FitMeta* meta = nullptr) {
  json j;
  j["format_version"] = kModelFormatVersion;
  j["R"] = theta.R;
  j["dims"] = theta.shape.dims;
  j["p"] = theta.p;
  j["intercept"] = theta.intercept;
  j["delta"] = std::vector<double>(theta.delta.data(), theta.delta.data() + theta.delta.size());
  json beta = json::array();
  for (int m = 0; m < theta.shape.num_responses(); ++m) {
    json per_m = json::array();
    for (int r = 0; r < theta.R; ++r) {
      std::vector<double> flat;  // row-major p x c_m
      flat.reserve(theta.p * theta.shape.dims[m]);
      for (int jj = 0; jj < theta.p; ++jj)
        for (int k = 0; k < theta.shape.dims[m]; ++k)
          flat.push_back(theta.beta[r][m](jj, k));
      per_m.push_back(std::move(flat));
    }
    beta.push_back(std::move(per_m));
  }
  j["beta"] = std::move(beta);
  if (meta) {
    j["fit"] = {{"penalty", meta->penalty},
                {"lambda", meta->lambda},
                {"iterations", meta->iterations},
                {"converged", meta->converged},
                {"final_objective", meta->final_objective},
                {"seed", meta->seed}};
    if (!meta->lambda_per_response.empty())
      j["fit"]["lambda_per_response"] = meta->lambda_per_response;
  }
  return j;
}

inline MixtureParams model_from_json(const json& j) {
  if (!j.contains("format_version") || j["format_version"] != kModelFormatVersion)
    throw data_error("model file: missing or unsupported format_version");
  MixtureParams theta;
  theta.shape = Shape(j.at("dims").get<std::vector<int>>());
  theta.R = j.at("R").get<int>();
  theta.p = j.at("p").get<int>();
  theta.intercept = j.at("intercept").get<bool>();
  const auto delta = j.at("delta").get<std::vector<double>>();
  theta.delta = Eigen::Map<const Eigen::VectorXd>(delta.data(), delta.size());
  const auto& beta = j.at("beta");
  const int M = theta.shape.num_responses();
  if (static_cast<int>(beta.size()) != M) throw data_error("model file: beta arity mismatch");
  theta.beta.assign(theta.R, std::vector<Eigen::MatrixXd>(M));
  for (int m = 0; m < M; ++m) {
    if (static_cast<int>(beta[m].size()) != theta.R)
      throw data_error("model file: beta component count mismatch");
    for (int r = 0; r < theta.R; ++r) {
      const auto flat = beta[m][r].get<std::vector<double>>();
      const int c = theta.shape.dims[m];
      if (static_cast<int>(flat.size()) != theta.p * c)
        throw data_error("model file: coefficient block size mismatch");
      theta.beta[r][m].resize(theta.p, c);
      for (int jj = 0; jj < theta.p; ++jj)
        for (int k = 0; k < c; ++k) theta.beta[r][m](jj, k) = flat[jj * c + k];
    }
  }
  theta.validate();
  return theta;
}

inline json tensor_to_json(const ProbTensor& t) {
  return json{{"dims", t.shape.dims}, {"values", t.values}};
}

inline ProbTensor tensor_from_json(const json& j) {
  Shape shape(j.at("dims").get<std::vector<int>>());
  return ProbTensor(shape, j.at("values").get<std::vector<double>>());
}

inline json scenario_to_json(const SimScenario& sc) {
  return json{{"name", sc.name},
              {"R_true", sc.R_true},
              {"n_train", sc.n_train},
              {"n_val", sc.n_val},
              {"n_test", sc.n_test},
              {"p", sc.p},
              {"dims", sc.dims},
              {"delta1", sc.delta1},
              {"sigma_beta", sc.sigma_beta},
              {"n_active", sc.n_active},
              {"seed", sc.seed},
              {"intercept", sc.intercept},
              {"keep_z", sc.keep_z}};
}

inline SimScenario scenario_from_json(const json& j) {
  static const std::vector<std::string> allowed = {
      "name",   "R_true", "n_train",    "n_val", "n_test",    "p",     "dims",
      "delta1", "sigma_beta", "n_active", "seed",  "intercept", "keep_z"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw config_error("scenario: unknown key '" + it.key() + "'");
  }
  SimScenario sc;
  if (j.contains("name")) sc.name = j["name"].get<std::string>();
  if (j.contains("R_true")) sc.R_true = j["R_true"].get<int>();
  if (j.contains("n_train")) sc.n_train = j["n_train"].get<int>();
  if (j.contains("n_val")) sc.n_val = j["n_val"].get<int>();
  if (j.contains("n_test")) sc.n_test = j["n_test"].get<int>();
  if (j.contains("p")) sc.p = j["p"].get<int>();
  if (j.contains("dims")) sc.dims = j["dims"].get<std::vector<int>>();
  if (j.contains("delta1")) sc.delta1 = j["delta1"].get<double>();
  if (j.contains("sigma_beta")) sc.sigma_beta = j["sigma_beta"].get<double>();
  if (j.contains("n_active")) sc.n_active = j["n_active"].get<int>();
  if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("intercept")) sc.intercept = j["intercept"].get<bool>();
  if (j.contains("keep_z")) sc.keep_z = j["keep_z"].get<bool>();
  sc.validate();
  return sc;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw data_error("parse error in '" + path + "': " + e.what());
  }
  return j;
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw data_error("write to '" + path + "' failed");
}

inline void write_path_report_csv(const PathResult& path, const std::string& file) {
  std::ofstream out(file);
  if (!out) throw data_error("cannot write '" + file + "'");
  out << "lambda,val_metric,effective_R,support_size,iterations,converged,selected,flagged\n";
  for (std::size_t k = 0; k < path.entries.size(); ++k) {
    const PathEntry& e = path.entries[k];
    out << detail::format_double(e.lambda) << ',' << detail::format_double(e.val_metric)
        << ',' << e.effective_R << ',' << e.support_size << ',' << e.iterations << ','
        << (e.converged ? 1 : 0) << ',' << (static_cast<int>(k) == path.selected ? 1 : 0)
        << ',' << (e.flagged ? 1 : 0) << '\n';
  }
}

inline void write_separate_path_report_csv(const SeparatePathResult& sep,
                                           const std::string& file) {
  std::ofstream out(file);
  if (!out) throw data_error("cannot write '" + file + "'");
  out << "response,lambda,val_metric,support_size,iterations,converged,selected,flagged\n";
  for (std::size_t m = 0; m < sep.per_response.size(); ++m) {
    const PathResult& pr = sep.per_response[m];
    for (std::size_t k = 0; k < pr.entries.size(); ++k) {
      const PathEntry& e = pr.entries[k];
      out << (m + 1) << ',' << detail::format_double(e.lambda) << ','
          << detail::format_double(e.val_metric) << ',' << e.support_size << ','
          << e.iterations << ',' << (e.converged ? 1 : 0) << ','
          << (static_cast<int>(k) == pr.selected ? 1 : 0) << ',' << (e.flagged ? 1 : 0)
          << '\n';
    }
  }
}

}  // namespace mixtensor
