#pragma once

// Tuning-parameter grids, solution paths and validation-based selection.
// Each grid point is fit from a fresh seeded random initialization (no warm
// starts): similar models at nearby lambdas then amount to multiple random
// starts along the path.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mixtensor/dataset.hpp"
#include "mixtensor/errors.hpp"
#include "mixtensor/model.hpp"
#include "mixtensor/parallel.hpp"
#include "mixtensor/rng.hpp"
#include "mixtensor/solver.hpp"

namespace mixtensor {

struct PathSpec {
  int n_lambda = 25;
  double lambda_min_ratio = 0.01;
  std::vector<double> grid_override;  // explicit grid, strictly decreasing

  void validate() const {
    if (n_lambda < 1) throw config_error("path: n_lambda must be >= 1");
    if (lambda_min_ratio <= 0 || lambda_min_ratio >= 1)
      throw config_error("path: lambda_min_ratio must be in (0,1)");
    for (std::size_t k = 1; k < grid_override.size(); ++k)
      if (grid_override[k] >= grid_override[k - 1])
        throw config_error("path: explicit grid must be strictly decreasing");
    for (double l : grid_override)
      if (l < 0) throw config_error("path: negative lambda in grid");
  }
};

struct PathEntry {
  double lambda = 0.0;
  double val_metric = std::numeric_limits<double>::quiet_NaN();  // validation -loglik
  int effective_R = 0;
  int support_size = 0;
  int iterations = 0;
  bool converged = false;
  bool flagged = false;  // fit failed or produced a non-finite metric
  std::string note;
};

struct PathResult {
  std::vector<PathEntry> entries;   // in grid order (decreasing lambda)
  std::vector<FitResult> fits;      // parallel to entries
  int selected = -1;                // index of the validation minimizer

  const FitResult& selected_fit() const {
    if (selected < 0) throw solver_error("path: no selectable fit");
    return fits[selected];
  }
};

namespace detail {

// Per-predictor score norms at the null model: g_j(m, k) = sum_i x_ij
// (1(Y_mi = k) - 1/c_m). The null E-step puts weight 1/R on every component,
// so component blocks of the full gradient row are g_j / R.
inline Eigen::MatrixXd null_score_matrix(const Dataset& data) {
  const int M = data.shape.num_responses();
  const int C = data.shape.total_categories();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(data.p(), C);
  int off = 0;
  for (int m = 0; m < M; ++m) {
    const int c = data.shape.dims[m];
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Constant(data.n(), c, -1.0 / c);
    for (int i = 0; i < data.n(); ++i) onehot(i, data.Y(i, m)) += 1.0;
    G.block(0, off, data.p(), c) = data.X.transpose() * onehot;
    off += c;
  }
  return G;
}

}  // namespace detail

// Smallest lambda whose fit keeps B = 0. At B = 0 every reachable E-step
// posterior is proportional to delta, so the full gradient row has norm
// ||g_j|| sqrt(sum_r delta_r^2) <= ||g_j|| and a component block has norm
// delta_r ||g_j|| <= ||g_j||; taking the worst case over the simplex makes
// the stay-at-zero condition hold for the whole run (the mixture weights
// wander off 1/R once iterations start). R is accepted for interface
// symmetry; the bound is weight-robust and does not depend on it.
inline double lambda_max(const Dataset& data, int R, PenaltyKind kind) {
  if (kind != PenaltyKind::global && kind != PenaltyKind::local)
    throw config_error("lambda_max: kind must be global or local");
  if (R < 1) throw config_error("lambda_max: R must be >= 1");
  Eigen::MatrixXd G = detail::null_score_matrix(data);
  double best = 0.0;
  for (int j = 0; j < data.p(); ++j) {
    if (!data.penalized_column(j)) continue;
    best = std::max(best, G.row(j).norm());
  }
  return best;
}

// Per-response path endpoints for the separate baselines (R = 1).
inline std::vector<double> lambda_max_separate(const Dataset& data, PenaltyKind kind) {
  if (kind != PenaltyKind::separate_group && kind != PenaltyKind::separate_l1)
    throw config_error("lambda_max_separate: kind must be sep-group or sep-l1");
  Eigen::MatrixXd G = detail::null_score_matrix(data);
  std::vector<double> out(data.shape.num_responses(), 0.0);
  int off = 0;
  for (int m = 0; m < data.shape.num_responses(); ++m) {
    const int c = data.shape.dims[m];
    for (int j = 0; j < data.p(); ++j) {
      if (!data.penalized_column(j)) continue;
      const auto blk = G.row(j).segment(off, c);
      out[m] = std::max(out[m], kind == PenaltyKind::separate_group
                                    ? blk.norm()
                                    : blk.lpNorm<Eigen::Infinity>());
    }
    off += c;
  }
  return out;
}

inline std::vector<double> make_grid(double lam_max, const PathSpec& spec) {
  if (!spec.grid_override.empty()) return spec.grid_override;
  if (spec.n_lambda == 1) return {lam_max};
  std::vector<double> grid(spec.n_lambda);
  if (lam_max <= 0.0) return std::vector<double>(spec.n_lambda, 0.0);
  const double lo = std::log(lam_max * spec.lambda_min_ratio);
  const double hi = std::log(lam_max);
  for (int k = 0; k < spec.n_lambda; ++k)
    grid[k] = std::exp(hi + (lo - hi) * k / (spec.n_lambda - 1));
  return grid;
}

// Fits the full grid (fresh random start per lambda, seed derived from the
// base seed and the grid index) and selects the validation negative
// log-likelihood minimizer; ties go to the larger lambda.
inline PathResult solve_path(const Dataset& data, const Dataset& val_data, int R,
                             const PenaltySpec& penalty, const PathSpec& spec,
                             const SolverConfig& config) {
  spec.validate();
  if (penalty.is_separate())
    throw config_error("solve_path: use tune_separate for separate penalties");
  if (!(data.shape == val_data.shape) || data.p() != val_data.p())
    throw dimension_error("solve_path: train/validation dims differ");
  const std::vector<double> grid = make_grid(lambda_max(data, R, penalty.kind), spec);
  PathResult out;
  out.entries.resize(grid.size());
  out.fits.resize(grid.size());
  parallel_for(grid.size(), config.threads, [&](std::size_t k) {
    PathEntry& e = out.entries[k];
    e.lambda = grid[k];
    PenaltySpec pk = penalty;
    pk.lambda = grid[k];
    SolverConfig ck = config;
    ck.seed = derive_seed(config.seed, k);
    try {
      FitResult fr = fit(data, R, pk, ck);
      const double ll = log_likelihood(fr.theta, val_data);
      e.val_metric = -ll;
      e.effective_R = fr.active_components;
      e.support_size = static_cast<int>(fr.support.size());
      e.iterations = fr.iterations;
      e.converged = fr.converged;
      e.flagged = !std::isfinite(ll);
      if (e.flagged) e.note = "non-finite validation likelihood";
      out.fits[k] = std::move(fr);
    } catch (const solver_error& ex) {
      e.flagged = true;
      e.note = ex.what();
    }
  });
  for (std::size_t k = 0; k < out.entries.size(); ++k) {
    const PathEntry& e = out.entries[k];
    if (e.flagged) continue;
    if (out.selected < 0 || e.val_metric < out.entries[out.selected].val_metric)
      out.selected = static_cast<int>(k);
  }
  if (out.selected < 0) throw solver_error("solve_path: every grid point failed");
  return out;
}

// Per-response tuning for the separate baselines: each response gets its own
// grid and its own validation-selected lambda; the assembled model is the
// per-response selection glued into one R = 1 parameter set.
struct SeparatePathResult {
  std::vector<PathResult> per_response;  // paths of the single-response fits
  std::vector<double> selected_lambdas;
  MixtureParams theta;
};

inline Dataset single_response_view(const Dataset& data, int m) {
  Dataset d;
  d.shape = Shape({data.shape.dims[m]});
  d.X = data.X;
  d.Y = data.Y.col(m);
  d.intercept = data.intercept;
  return d;
}

inline SeparatePathResult tune_separate(const Dataset& data, const Dataset& val_data,
                                        PenaltyKind kind, const PathSpec& spec,
                                        const SolverConfig& config) {
  if (kind != PenaltyKind::separate_group && kind != PenaltyKind::separate_l1)
    throw config_error("tune_separate: kind must be sep-group or sep-l1");
  spec.validate();
  if (!(data.shape == val_data.shape) || data.p() != val_data.p())
    throw dimension_error("tune_separate: train/validation dims differ");
  const int M = data.shape.num_responses();
  const std::vector<double> lmax = lambda_max_separate(data, kind);

  SeparatePathResult out;
  out.per_response.resize(M);
  out.selected_lambdas.resize(M);
  parallel_for(static_cast<std::size_t>(M), config.threads, [&](std::size_t mi) {
    const int m = static_cast<int>(mi);
    Dataset train_m = single_response_view(data, m);
    Dataset val_m = single_response_view(val_data, m);
    const std::vector<double> grid = make_grid(lmax[m], spec);
    PathResult pr;
    pr.entries.resize(grid.size());
    pr.fits.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      PathEntry& e = pr.entries[k];
      e.lambda = grid[k];
      PenaltySpec pk;
      pk.kind = kind;
      pk.lambda_per_response = {grid[k]};
      SolverConfig ck = config;
      ck.seed = derive_seed(derive_seed(config.seed, 1000 + mi), k);
      try {
        FitResult fr = fit(train_m, 1, pk, ck);
        const double ll = log_likelihood(fr.theta, val_m);
        e.val_metric = -ll;
        e.effective_R = 1;
        e.support_size = static_cast<int>(fr.support.size());
        e.iterations = fr.iterations;
        e.converged = fr.converged;
        e.flagged = !std::isfinite(ll);
        pr.fits[k] = std::move(fr);
      } catch (const solver_error& ex) {
        e.flagged = true;
        e.note = ex.what();
      }
    }
    for (std::size_t k = 0; k < pr.entries.size(); ++k) {
      const PathEntry& e = pr.entries[k];
      if (e.flagged) continue;
      if (pr.selected < 0 || e.val_metric < pr.entries[pr.selected].val_metric)
        pr.selected = static_cast<int>(k);
    }
    if (pr.selected < 0)
      throw solver_error("tune_separate: every grid point failed for response " +
                         std::to_string(m + 1));
    out.per_response[mi] = std::move(pr);
  });

  MixtureParams theta;
  theta.shape = data.shape;
  theta.R = 1;
  theta.p = data.p();
  theta.intercept = data.intercept;
  theta.delta = Eigen::VectorXd::Ones(1);
  theta.beta.resize(1);
  theta.beta[0].resize(M);
  for (int m = 0; m < M; ++m) {
    const PathResult& pr = out.per_response[m];
    out.selected_lambdas[m] = pr.entries[pr.selected].lambda;
    theta.beta[0][m] = pr.selected_fit().theta.beta[0][0];
  }
  out.theta = std::move(theta);
  return out;
}

// Runs solve_path for each candidate R and returns the index of the
// validation winner alongside every path.
struct RSelectionResult {
  std::vector<int> candidates;
  std::vector<PathResult> paths;  // parallel to candidates
  int best_index = -1;

  int best_R() const { return candidates.at(best_index); }
};

inline RSelectionResult select_R_by_validation(const Dataset& data, const Dataset& val_data,
                                               const std::vector<int>& R_candidates,
                                               const PenaltySpec& penalty,
                                               const PathSpec& spec,
                                               const SolverConfig& config) {
  if (R_candidates.empty()) throw config_error("select_R: no candidates");
  RSelectionResult out;
  out.candidates = R_candidates;
  out.paths.resize(R_candidates.size());
  for (std::size_t k = 0; k < R_candidates.size(); ++k) {
    SolverConfig ck = config;
    ck.seed = derive_seed(config.seed, 7000 + k);
    out.paths[k] = solve_path(data, val_data, R_candidates[k], penalty, spec, ck);
  }
  for (std::size_t k = 0; k < out.paths.size(); ++k) {
    const double v = out.paths[k].entries[out.paths[k].selected].val_metric;
    if (out.best_index < 0 ||
        v < out.paths[out.best_index].entries[out.paths[out.best_index].selected].val_metric)
      out.best_index = static_cast<int>(k);
  }
  return out;
}

}  // namespace mixtensor
