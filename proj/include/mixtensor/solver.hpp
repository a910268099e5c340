#pragma once

// Penalized EM for the latent-state mixture of multinomial logits.
//
// Each iteration alternates an E-step (responsibilities), one randomized
// blockwise-proximal pass over the rows of the coefficient tensor B, and the
// closed-form mixture-weight update. Row updates maximize a quadratic
// surrogate via the group soft-threshold; an Armijo-style backtracking line
// search accepts a step exactly when the true blockwise penalized objective
// does not decrease, which yields the monotone-ascent guarantee for the
// penalized observed-data objective.
//
// Linear scores X * beta are cached and maintained under rank-one row
// updates, turning a full sweep into O(n p C R) work; they are refreshed
// from scratch periodically to bound drift.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mixtensor/dataset.hpp"
#include "mixtensor/errors.hpp"
#include "mixtensor/model.hpp"
#include "mixtensor/rng.hpp"

namespace mixtensor {

struct Posterior {
  Eigen::MatrixXd pi;  // n x R, rows sum to one

  void validate() const {
    for (int i = 0; i < pi.rows(); ++i) {
      if (std::abs(pi.row(i).sum() - 1.0) > 1e-12)
        throw data_error("posterior: row " + std::to_string(i + 1) + " does not sum to 1");
      if ((pi.row(i).array() < -1e-15).any())
        throw data_error("posterior: negative responsibility at row " + std::to_string(i + 1));
    }
  }
};

enum class PenaltyKind { global, local, separate_group, separate_l1 };

inline std::string to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::global: return "global";
    case PenaltyKind::local: return "local";
    case PenaltyKind::separate_group: return "sep-group";
    case PenaltyKind::separate_l1: return "sep-l1";
  }
  return "?";
}

inline PenaltyKind penalty_kind_from_string(const std::string& s) {
  if (s == "global") return PenaltyKind::global;
  if (s == "local") return PenaltyKind::local;
  if (s == "sep-group") return PenaltyKind::separate_group;
  if (s == "sep-l1") return PenaltyKind::separate_l1;
  throw config_error("unknown penalty kind '" + s + "'");
}

struct PenaltySpec {
  PenaltyKind kind = PenaltyKind::global;
  double lambda = 0.0;
  std::vector<double> lambda_per_response;  // separate kinds; empty = common lambda

  bool is_separate() const {
    return kind == PenaltyKind::separate_group || kind == PenaltyKind::separate_l1;
  }
  double lambda_for(int m) const {
    return lambda_per_response.empty() ? lambda : lambda_per_response.at(m);
  }
  void validate(int M) const {
    if (lambda < 0) throw config_error("penalty: lambda must be >= 0");
    for (double l : lambda_per_response)
      if (l < 0) throw config_error("penalty: lambda must be >= 0");
    if (!lambda_per_response.empty() &&
        static_cast<int>(lambda_per_response.size()) != M)
      throw config_error("penalty: per-response lambda list length mismatch");
    if (!is_separate() && !lambda_per_response.empty())
      throw config_error("penalty: per-response lambdas only apply to separate kinds");
  }
};

struct SolverConfig {
  int max_em_iters = 500;
  double objective_tol = 1e-8;   // stop when |change in penalized objective| is below
  double delta_floor = 1e-8;     // mixture weights below this are zeroed and frozen
  double ls_initial_step = 1.0;
  double ls_shrink = 0.5;
  bool ls_warm_start = true;     // start each row's search near its last accepted step
  bool fixed_step = false;       // no line search; use the closed-form step-size bound
  double init_sd = 0.1;          // sd of the random coefficient initialization
  std::uint64_t seed = 1;
  int threads = 1;               // fan-out across independent fits (paths, replications)
  int score_refresh_period = 8;  // full score recomputation every k EM iterations
  bool merge_uniform_components = true;

  void validate() const {
    if (max_em_iters < 1) throw config_error("solver: max_em_iters must be >= 1");
    if (objective_tol <= 0) throw config_error("solver: objective_tol must be > 0");
    if (delta_floor <= 0) throw config_error("solver: delta_floor must be > 0");
    if (ls_shrink <= 0 || ls_shrink >= 1)
      throw config_error("solver: line-search shrink must be in (0,1)");
    if (ls_initial_step <= 0) throw config_error("solver: initial step must be > 0");
    if (init_sd < 0) throw config_error("solver: init_sd must be >= 0");
    if (threads < 1) throw config_error("solver: threads must be >= 1");
    if (score_refresh_period < 1) throw config_error("solver: refresh period must be >= 1");
  }
};

struct FitDiagnostics {
  long long step_halvings = 0;
  long long rows_skipped = 0;  // rows settled by the stay-at-zero condition
  double min_row_ascent = std::numeric_limits<double>::infinity();
};

struct FitResult {
  MixtureParams theta;
  std::vector<double> trace;  // penalized observed-data objective per iteration
  int iterations = 0;
  bool converged = false;
  int active_components = 0;         // count of delta_r above the floor
  std::vector<int> support;          // penalized predictors with a nonzero row
  FitDiagnostics diag;
  std::vector<std::string> warnings;

  double final_objective() const {
    return trace.empty() ? std::numeric_limits<double>::quiet_NaN() : trace.back();
  }
};

// Layout of one row of B as a flat vector: R component blocks of length
// C = sum_m c_m, each ordered by response then category.
struct RowLayout {
  int R = 1;
  std::vector<int> dims;
  std::vector<int> offsets;  // per-response offset within a component block
  int C = 0;

  static RowLayout make(const Shape& shape, int R) {
    RowLayout l;
    l.R = R;
    l.dims = shape.dims;
    l.offsets.resize(shape.dims.size());
    int off = 0;
    for (std::size_t m = 0; m < shape.dims.size(); ++m) {
      l.offsets[m] = off;
      off += shape.dims[m];
    }
    l.C = off;
    return l;
  }
  int length() const { return R * C; }
  int block_offset(int r, int m) const { return r * C + offsets[m]; }
};

// Penalty contribution of a single row vector.
inline double row_penalty(const Eigen::VectorXd& u, const PenaltySpec& spec,
                          const RowLayout& layout) {
  switch (spec.kind) {
    case PenaltyKind::global:
      return spec.lambda * u.norm();
    case PenaltyKind::local: {
      double s = 0.0;
      for (int r = 0; r < layout.R; ++r) s += u.segment(r * layout.C, layout.C).norm();
      return spec.lambda * s;
    }
    case PenaltyKind::separate_group: {
      double s = 0.0;
      for (std::size_t m = 0; m < layout.dims.size(); ++m)
        for (int r = 0; r < layout.R; ++r)
          s += spec.lambda_for(static_cast<int>(m)) *
               u.segment(layout.block_offset(r, static_cast<int>(m)), layout.dims[m]).norm();
      return s;
    }
    case PenaltyKind::separate_l1: {
      double s = 0.0;
      for (std::size_t m = 0; m < layout.dims.size(); ++m)
        for (int r = 0; r < layout.R; ++r)
          s += spec.lambda_for(static_cast<int>(m)) *
               u.segment(layout.block_offset(r, static_cast<int>(m)), layout.dims[m])
                   .lpNorm<1>();
      return s;
    }
  }
  return 0.0;
}

// Closed-form maximizer of the penalized quadratic surrogate: the group
// soft-threshold max(1 - lambda tau / ||u||, 0) u, applied to the whole row
// (global), per component block (local), per response block (separate group)
// or elementwise (separate L1). lambda = 0 returns u unchanged.
inline Eigen::VectorXd prox_row_update(const Eigen::VectorXd& u, const PenaltySpec& spec,
                                       double tau, const RowLayout& layout) {
  if (tau <= 0) throw config_error("prox_row_update: tau must be > 0");
  auto shrink = [](const Eigen::VectorXd& v, double t) -> Eigen::VectorXd {
    const double nrm = v.norm();
    if (nrm <= t) return Eigen::VectorXd::Zero(v.size());
    return (1.0 - t / nrm) * v;
  };
  Eigen::VectorXd out(u.size());
  switch (spec.kind) {
    case PenaltyKind::global:
      return shrink(u, spec.lambda * tau);
    case PenaltyKind::local:
      for (int r = 0; r < layout.R; ++r)
        out.segment(r * layout.C, layout.C) =
            shrink(u.segment(r * layout.C, layout.C), spec.lambda * tau);
      return out;
    case PenaltyKind::separate_group:
      for (int r = 0; r < layout.R; ++r)
        for (std::size_t m = 0; m < layout.dims.size(); ++m) {
          const int o = layout.block_offset(r, static_cast<int>(m));
          out.segment(o, layout.dims[m]) =
              shrink(u.segment(o, layout.dims[m]),
                     spec.lambda_for(static_cast<int>(m)) * tau);
        }
      return out;
    case PenaltyKind::separate_l1:
      for (int r = 0; r < layout.R; ++r)
        for (std::size_t m = 0; m < layout.dims.size(); ++m) {
          const int o = layout.block_offset(r, static_cast<int>(m));
          const double t = spec.lambda_for(static_cast<int>(m)) * tau;
          for (int k = 0; k < layout.dims[m]; ++k) {
            const double v = u[o + k];
            out[o + k] = v > t ? v - t : (v < -t ? v + t : 0.0);
          }
        }
      return out;
  }
  return u;
}

// E-step responsibilities pi_ir = delta_r f_r(Y_i | x_i) / sum_s delta_s f_s,
// computed in log space. Components with delta_r = 0 get zero responsibility.
inline Posterior e_step(const MixtureParams& theta, const Dataset& data) {
  theta.validate();
  if (data.p() != theta.p || !(data.shape == theta.shape))
    throw dimension_error("e_step: dataset does not match model dims");
  const int n = data.n();
  const int M = theta.shape.num_responses();
  Posterior post;
  post.pi = Eigen::MatrixXd::Zero(n, theta.R);
  Eigen::VectorXd logterm(theta.R);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = data.X.row(i).transpose();
    double best = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < theta.R; ++r) {
      if (theta.delta[r] <= 0.0) {
        logterm[r] = -std::numeric_limits<double>::infinity();
        continue;
      }
      double t = std::log(theta.delta[r]);
      for (int m = 0; m < M; ++m)
        t += log_class_probs(theta.beta[r][m], x)[data.Y(i, m)];
      logterm[r] = t;
      best = std::max(best, t);
    }
    if (!std::isfinite(best))
      throw data_error("e_step: observation " + std::to_string(i + 1) +
                       " has zero density under every component");
    double denom = 0.0;
    for (int r = 0; r < theta.R; ++r)
      if (std::isfinite(logterm[r])) denom += std::exp(logterm[r] - best);
    for (int r = 0; r < theta.R; ++r)
      post.pi(i, r) = std::isfinite(logterm[r]) ? std::exp(logterm[r] - best) / denom : 0.0;
  }
  return post;
}

// Weighted multinomial log-likelihood of response m under beta_mr.
inline double q_weighted_loglik(const Eigen::MatrixXd& beta_mr, const Dataset& data,
                                int m, const Eigen::VectorXd& weights) {
  if (weights.size() != data.n())
    throw dimension_error("q_weighted_loglik: weight length mismatch");
  if (m < 0 || m >= data.shape.num_responses())
    throw dimension_error("q_weighted_loglik: response index out of range");
  Eigen::MatrixXd S = data.X * beta_mr;  // n x c_m
  Eigen::VectorXd mx = S.rowwise().maxCoeff();
  Eigen::VectorXd lse =
      ((S.colwise() - mx).array().exp().rowwise().sum().log() + mx.array()).matrix();
  double total = 0.0;
  for (int i = 0; i < data.n(); ++i)
    total += weights[i] * (S(i, data.Y(i, m)) - lse[i]);
  return total;
}

// Gradient of sum_{m,r} l_mr with respect to row j of B, laid out per
// RowLayout: block (r, m, k) holds
//   sum_i pi_ir x_ij (1(Y_mi = k) - Pr(Y_m = k | x_i, beta_mr)).
inline Eigen::VectorXd q_gradient_row(const std::vector<std::vector<Eigen::MatrixXd>>& beta,
                                      int j, const Dataset& data, const Posterior& post) {
  const int R = static_cast<int>(beta.size());
  const int M = data.shape.num_responses();
  if (j < 0 || j >= data.p()) throw dimension_error("q_gradient_row: bad predictor index");
  RowLayout layout = RowLayout::make(data.shape, R);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(layout.length());
  for (int r = 0; r < R; ++r) {
    Eigen::VectorXd w = post.pi.col(r).cwiseProduct(data.X.col(j));
    for (int m = 0; m < M; ++m) {
      Eigen::MatrixXd S = data.X * beta[r][m];
      Eigen::VectorXd mx = S.rowwise().maxCoeff();
      Eigen::MatrixXd P = (S.colwise() - mx).array().exp();
      P.array().colwise() /= P.rowwise().sum().array();
      Eigen::VectorXd blk = -(P.transpose() * w);
      for (int i = 0; i < data.n(); ++i) blk[data.Y(i, m)] += w[i];
      g.segment(layout.block_offset(r, m), layout.dims[m]) = blk;
    }
  }
  return g;
}

// Column means of the responsibilities, with entries below `floor` set to
// exactly zero and the rest renormalized.
inline Eigen::VectorXd delta_update(const Posterior& post, double floor = 1e-8) {
  Eigen::VectorXd d = post.pi.colwise().mean();
  for (int r = 0; r < d.size(); ++r)
    if (d[r] < floor) d[r] = 0.0;
  const double s = d.sum();
  if (s <= 0.0) throw solver_error("delta_update: all mixture weights vanished");
  return d / s;
}

namespace detail {

// Mutable EM state with cached linear scores. Component r is "alive" until
// its mixture weight hits the floor; dead components are zeroed and excluded
// from sweeps, penalties and responsibilities.
class EmState {
 public:
  EmState(const Dataset& data, int R, const PenaltySpec& penalty,
          const SolverConfig& config)
      : data_(data),
        penalty_(penalty),
        config_(config),
        n_(data.n()),
        p_(data.p()),
        M_(data.shape.num_responses()),
        R_(R),
        layout_all_(RowLayout::make(data.shape, R)),
        alive_(R, 1),
        delta_(Eigen::VectorXd::Constant(R, 1.0 / R)),
        pi_(Eigen::MatrixXd::Zero(data.n(), R)),
        logf_(Eigen::MatrixXd::Zero(data.n(), R)) {
    cmax_sqrt_ = 0.0;
    for (int c : data.shape.dims) cmax_sqrt_ = std::max(cmax_sqrt_, std::sqrt(double(c)));
    colnorm_ = data.X.colwise().norm();
    B_.resize(R);
    scores_.resize(R);
    logz_.resize(R);
    for (int r = 0; r < R; ++r) {
      B_[r].resize(M_);
      scores_[r].resize(M_);
      logz_[r].resize(M_);
      for (int m = 0; m < M_; ++m) {
        B_[r][m] = Eigen::MatrixXd::Zero(p_, data.shape.dims[m]);
        scores_[r][m] = Eigen::MatrixXd::Zero(n_, data.shape.dims[m]);
        logz_[r][m] = Eigen::VectorXd::Constant(n_, std::log(double(data.shape.dims[m])));
      }
    }
    warm_tau_ = Eigen::VectorXd::Constant(p_, config.ls_initial_step);
    scratch_T_.resize(M_);
    scratch_vec_.resize(n_);
    for (int m = 0; m < M_; ++m) scratch_T_[m].resize(n_, data.shape.dims[m]);
  }

  void init_random(Rng& rng) {
    std::normal_distribution<double> normal(0.0, config_.init_sd);
    for (int r = 0; r < R_; ++r)
      for (int m = 0; m < M_; ++m)
        for (int jj = 0; jj < p_; ++jj)
          for (int k = 0; k < B_[r][m].cols(); ++k) B_[r][m](jj, k) = normal(rng);
    refresh_scores();
  }

  void init_from(const MixtureParams& theta) {
    if (theta.R != R_ || theta.p != p_ || !(theta.shape == data_.shape))
      throw dimension_error("fit: init parameters do not match data/R");
    B_ = theta.beta;
    delta_ = theta.delta;
    for (int r = 0; r < R_; ++r)
      if (delta_[r] <= 0.0) kill_component(r);
    refresh_scores();
  }

  void refresh_scores() {
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) continue;
      for (int m = 0; m < M_; ++m) {
        scores_[r][m].noalias() = data_.X * B_[r][m];
        update_logz(r, m);
      }
    }
  }

  void compute_logf() {
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) {
        logf_.col(r).setConstant(-std::numeric_limits<double>::infinity());
        continue;
      }
      logf_.col(r).setZero();
      for (int m = 0; m < M_; ++m) {
        const auto& S = scores_[r][m];
        const auto& lz = logz_[r][m];
        for (int i = 0; i < n_; ++i) logf_(i, r) += S(i, data_.Y(i, m)) - lz[i];
      }
    }
  }

  // Responsibilities from the current logf and delta.
  void run_e_step() {
    for (int i = 0; i < n_; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int r = 0; r < R_; ++r)
        if (alive_[r]) best = std::max(best, std::log(delta_[r]) + logf_(i, r));
      if (!std::isfinite(best))
        throw data_error("e_step: observation " + std::to_string(i + 1) +
                         " has zero density under every component");
      double denom = 0.0;
      for (int r = 0; r < R_; ++r) {
        if (!alive_[r]) {
          pi_(i, r) = 0.0;
          continue;
        }
        pi_(i, r) = std::exp(std::log(delta_[r]) + logf_(i, r) - best);
        denom += pi_(i, r);
      }
      pi_.row(i) /= denom;
    }
  }

  // Penalized observed-data objective F(theta) - P(B) at the current state.
  double objective() const {
    double F = 0.0;
    for (int i = 0; i < n_; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int r = 0; r < R_; ++r)
        if (alive_[r]) best = std::max(best, std::log(delta_[r]) + logf_(i, r));
      double s = 0.0;
      for (int r = 0; r < R_; ++r)
        if (alive_[r]) s += std::exp(std::log(delta_[r]) + logf_(i, r) - best);
      F += best + std::log(s);
    }
    return F - penalty_value();
  }

  double penalty_value() const {
    double P = 0.0;
    const RowLayout layout = alive_layout();
    Eigen::VectorXd row(layout.length());
    for (int j = 0; j < p_; ++j) {
      if (!data_.penalized_column(j)) continue;
      gather_row(j, layout, row);
      P += row_penalty(row, penalty_, layout);
    }
    return P;
  }

  // Complete-data weighted log-likelihood sum_{m,r} l_mr at the current B.
  double q_value() const {
    double q = 0.0;
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) continue;
      for (int m = 0; m < M_; ++m) q += block_loglik(r, m);
    }
    return q;
  }

  // One full randomized pass over the rows of B.
  void sweep(Rng& rng, FitDiagnostics& diag) {
    std::vector<int> perm(p_);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const RowLayout layout = alive_layout();
    Eigen::VectorXd b0(layout.length()), g(layout.length()), u(layout.length());
    for (int j : perm) update_row(j, layout, b0, g, u, diag);
  }

  // Mixture-weight update with the zero-out floor; newly dead components are
  // frozen: their coefficients are zeroed and they leave all later passes.
  void run_delta_update() {
    Eigen::VectorXd d = pi_.colwise().mean();
    for (int r = 0; r < R_; ++r)
      if (!alive_[r] || d[r] < config_.delta_floor) d[r] = 0.0;
    const double s = d.sum();
    if (s <= 0.0) throw solver_error("delta update: all mixture weights vanished");
    delta_ = d / s;
    for (int r = 0; r < R_; ++r)
      if (alive_[r] && delta_[r] == 0.0) kill_component(r);
  }

  // Fixed-responsibility mode (oracle labels): pin pi and delta.
  void set_fixed_posterior(const Eigen::MatrixXd& pi, const Eigen::VectorXd& delta) {
    pi_ = pi;
    delta_ = delta;
    for (int r = 0; r < R_; ++r)
      if (delta_[r] <= 0.0) kill_component(r);
  }

  MixtureParams params() const {
    MixtureParams theta;
    theta.shape = data_.shape;
    theta.R = R_;
    theta.p = p_;
    theta.intercept = data_.intercept;
    theta.delta = delta_;
    theta.beta = B_;
    return theta;
  }

  const Eigen::MatrixXd& pi() const { return pi_; }
  const Eigen::VectorXd& delta() const { return delta_; }
  const std::vector<std::vector<Eigen::MatrixXd>>& beta() const { return B_; }
  int alive_count() const {
    int c = 0;
    for (char a : alive_) c += a;
    return c;
  }

  // Merges components whose coefficient blocks are identically zero (they all
  // encode the same uniform sub-model) into the heaviest one. Leaves the
  // composed distribution and the penalized objective unchanged.
  void merge_uniform_components() {
    std::vector<int> uniform;
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r] || delta_[r] <= 0.0) continue;
      bool zero = true;
      for (int m = 0; m < M_ && zero; ++m) zero = (B_[r][m].array() == 0.0).all();
      if (zero) uniform.push_back(r);
    }
    if (uniform.size() < 2) return;
    int keep = uniform[0];
    for (int r : uniform)
      if (delta_[r] > delta_[keep]) keep = r;
    double mass = 0.0;
    for (int r : uniform) mass += delta_[r];
    for (int r : uniform)
      if (r != keep) {
        delta_[r] = 0.0;
        kill_component(r);
      }
    delta_[keep] = mass;
  }

  Eigen::VectorXd gather_full_row(int j) const {
    Eigen::VectorXd row(layout_all_.length());
    row.setZero();
    for (int r = 0; r < R_; ++r)
      for (int m = 0; m < M_; ++m)
        row.segment(layout_all_.block_offset(r, m), layout_all_.dims[m]) =
            B_[r][m].row(j).transpose();
    return row;
  }

 private:
  RowLayout alive_layout() const { return RowLayout::make(data_.shape, alive_count()); }

  void kill_component(int r) {
    alive_[r] = 0;
    for (int m = 0; m < M_; ++m) {
      B_[r][m].setZero();
      scores_[r][m].setZero();
      logz_[r][m].setConstant(std::log(double(data_.shape.dims[m])));
    }
    pi_.col(r).setZero();
  }

  void update_logz(int r, int m) {
    const auto& S = scores_[r][m];
    Eigen::VectorXd mx = S.rowwise().maxCoeff();
    logz_[r][m] =
        ((S.colwise() - mx).array().exp().rowwise().sum().log() + mx.array()).matrix();
  }

  std::vector<int> alive_indices() const {
    std::vector<int> idx;
    for (int r = 0; r < R_; ++r)
      if (alive_[r]) idx.push_back(r);
    return idx;
  }

  void gather_row(int j, const RowLayout& layout, Eigen::VectorXd& row) const {
    int rr = 0;
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) continue;
      for (int m = 0; m < M_; ++m)
        row.segment(layout.block_offset(rr, m), layout.dims[m]) = B_[r][m].row(j).transpose();
      ++rr;
    }
  }

  double block_loglik(int r, int m) const {
    const auto& S = scores_[r][m];
    const auto& lz = logz_[r][m];
    double ll = 0.0;
    for (int i = 0; i < n_; ++i) ll += pi_(i, r) * (S(i, data_.Y(i, m)) - lz[i]);
    return ll;
  }

  // Gradient of the alive part of the row objective, cached-score version.
  void gradient_row_cached(int j, const RowLayout& layout, Eigen::VectorXd& g) const {
    int rr = 0;
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) continue;
      Eigen::VectorXd w = pi_.col(r).cwiseProduct(data_.X.col(j));
      for (int m = 0; m < M_; ++m) {
        const auto& S = scores_[r][m];
        const auto& lz = logz_[r][m];
        Eigen::MatrixXd& P = scratch_T_[m];
        P = (S.colwise() - lz).array().exp();
        Eigen::VectorXd blk = -(P.transpose() * w);
        for (int i = 0; i < n_; ++i) blk[data_.Y(i, m)] += w[i];
        g.segment(layout.block_offset(rr, m), layout.dims[m]) = blk;
      }
      ++rr;
    }
  }

  // Weighted log-likelihood of all alive blocks with row j moved to `b`,
  // without committing. O(n C R) per call.
  double trial_loglik(int j, const RowLayout& layout, const Eigen::VectorXd& b0,
                      const Eigen::VectorXd& b) {
    double ll = 0.0;
    int rr = 0;
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) continue;
      for (int m = 0; m < M_; ++m) {
        const int o = layout.block_offset(rr, m);
        const int c = layout.dims[m];
        Eigen::VectorXd db = b.segment(o, c) - b0.segment(o, c);
        Eigen::MatrixXd& T = scratch_T_[m];
        if ((db.array() == 0.0).all()) {
          ll += block_loglik(r, m);
          continue;
        }
        T = scores_[r][m];
        T.noalias() += data_.X.col(j) * db.transpose();
        Eigen::VectorXd mx = T.rowwise().maxCoeff();
        scratch_vec_ =
            ((T.colwise() - mx).array().exp().rowwise().sum().log() + mx.array()).matrix();
        for (int i = 0; i < n_; ++i)
          ll += pi_(i, r) * (T(i, data_.Y(i, m)) - scratch_vec_[i]);
      }
      ++rr;
    }
    return ll;
  }

  void commit_row(int j, const RowLayout& layout, const Eigen::VectorXd& b0,
                  const Eigen::VectorXd& b) {
    int rr = 0;
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) continue;
      for (int m = 0; m < M_; ++m) {
        const int o = layout.block_offset(rr, m);
        const int c = layout.dims[m];
        Eigen::VectorXd db = b.segment(o, c) - b0.segment(o, c);
        if ((db.array() != 0.0).any()) {
          scores_[r][m].noalias() += data_.X.col(j) * db.transpose();
          update_logz(r, m);
        }
        B_[r][m].row(j) = b.segment(o, c).transpose();
      }
      ++rr;
    }
  }

  // Step-size bound {R M ||x_j|| max_k sqrt(c_k)}^{-1} for the fixed-step mode.
  double bound_step(int j) const {
    const double denom = alive_count() * M_ * colnorm_[j] * cmax_sqrt_;
    return denom > 0 ? 1.0 / denom : 1.0;
  }

  // True when the prox keeps a zero row at zero for every step size, so the
  // update can be skipped without evaluating the objective.
  bool stays_zero(const Eigen::VectorXd& g, const RowLayout& layout) const {
    switch (penalty_.kind) {
      case PenaltyKind::global:
        return g.norm() <= penalty_.lambda;
      case PenaltyKind::local: {
        for (int r = 0; r < layout.R; ++r)
          if (g.segment(r * layout.C, layout.C).norm() > penalty_.lambda) return false;
        return true;
      }
      case PenaltyKind::separate_group: {
        for (int r = 0; r < layout.R; ++r)
          for (std::size_t m = 0; m < layout.dims.size(); ++m)
            if (g.segment(layout.block_offset(r, static_cast<int>(m)), layout.dims[m])
                    .norm() > penalty_.lambda_for(static_cast<int>(m)))
              return false;
        return true;
      }
      case PenaltyKind::separate_l1: {
        for (int r = 0; r < layout.R; ++r)
          for (std::size_t m = 0; m < layout.dims.size(); ++m)
            if (g.segment(layout.block_offset(r, static_cast<int>(m)), layout.dims[m])
                    .lpNorm<Eigen::Infinity>() >
                penalty_.lambda_for(static_cast<int>(m)))
              return false;
        return true;
      }
    }
    return false;
  }

  void update_row(int j, const RowLayout& layout, Eigen::VectorXd& b0, Eigen::VectorXd& g,
                  Eigen::VectorXd& u, FitDiagnostics& diag) {
    gather_row(j, layout, b0);
    gradient_row_cached(j, layout, g);
    const bool penalized = data_.penalized_column(j);
    PenaltySpec rowspec = penalty_;
    if (!penalized) {
      rowspec.lambda = 0.0;
      for (double& l : rowspec.lambda_per_response) l = 0.0;
    }
    if ((b0.array() == 0.0).all()) {
      if (penalized && stays_zero(g, layout)) {
        ++diag.rows_skipped;
        return;
      }
      if (!penalized && (g.array() == 0.0).all()) {
        ++diag.rows_skipped;
        return;
      }
    }
    const double ll_old = current_row_loglik();
    const double pen_old = row_penalty(b0, rowspec, layout);
    const double guard = 1e-12 * (1.0 + std::abs(ll_old));

    if (config_.fixed_step) {
      const double tau = bound_step(j);
      u = b0 + tau * g;
      Eigen::VectorXd bnew = prox_row_update(u, rowspec, tau, layout);
      const double delta_obj = trial_loglik(j, layout, b0, bnew) - ll_old -
                               (row_penalty(bnew, rowspec, layout) - pen_old);
      diag.min_row_ascent = std::min(diag.min_row_ascent, delta_obj);
      commit_row(j, layout, b0, bnew);
      return;
    }

    double tau = config_.ls_initial_step;
    if (config_.ls_warm_start)
      tau = std::min(config_.ls_initial_step, 4.0 * warm_tau_[j]);
    for (int halvings = 0;; ++halvings) {
      if (halvings > 60)
        throw solver_error("line search exceeded 60 halvings at predictor " +
                           std::to_string(j + 1) + " (gradient inconsistency?)");
      u = b0 + tau * g;
      Eigen::VectorXd bnew = prox_row_update(u, rowspec, tau, layout);
      const double delta_obj = trial_loglik(j, layout, b0, bnew) - ll_old -
                               (row_penalty(bnew, rowspec, layout) - pen_old);
      if (delta_obj >= -guard) {
        diag.min_row_ascent = std::min(diag.min_row_ascent, delta_obj);
        commit_row(j, layout, b0, bnew);
        warm_tau_[j] = tau;
        return;
      }
      ++diag.step_halvings;
      tau *= config_.ls_shrink;
    }
  }

  // Row part of the objective at the current iterate (penalty handled by
  // callers): sum over alive blocks of the weighted log-likelihood.
  double current_row_loglik() const {
    double ll = 0.0;
    for (int r = 0; r < R_; ++r) {
      if (!alive_[r]) continue;
      for (int m = 0; m < M_; ++m) ll += block_loglik(r, m);
    }
    return ll;
  }

  const Dataset& data_;
  PenaltySpec penalty_;
  SolverConfig config_;
  int n_, p_, M_, R_;
  RowLayout layout_all_;
  std::vector<char> alive_;
  Eigen::VectorXd delta_;
  Eigen::MatrixXd pi_;
  Eigen::MatrixXd logf_;
  std::vector<std::vector<Eigen::MatrixXd>> B_;
  std::vector<std::vector<Eigen::MatrixXd>> scores_;
  std::vector<std::vector<Eigen::VectorXd>> logz_;
  Eigen::VectorXd colnorm_;
  Eigen::VectorXd warm_tau_;
  double cmax_sqrt_ = 1.0;
  mutable std::vector<Eigen::MatrixXd> scratch_T_;
  Eigen::VectorXd scratch_vec_;
};

inline void check_empty_categories(const Dataset& data, const PenaltySpec& penalty) {
  for (int m = 0; m < data.shape.num_responses(); ++m) {
    const double lam = penalty.is_separate() ? penalty.lambda_for(m) : penalty.lambda;
    if (lam > 0.0) continue;
    std::vector<int> counts(data.shape.dims[m], 0);
    for (int i = 0; i < data.n(); ++i) ++counts[data.Y(i, m)];
    for (int k = 0; k < data.shape.dims[m]; ++k)
      if (counts[k] == 0)
        throw data_error("fit: response " + std::to_string(m + 1) + " category " +
                         std::to_string(k + 1) +
                         " is unobserved and the penalty is zero; coefficients would "
                         "diverge");
  }
}

}  // namespace detail

// One randomized blockwise-proximal pass over the rows of B at fixed
// responsibilities. Exposed for testing; fit() drives the same machinery.
struct SweepResult {
  std::vector<std::vector<Eigen::MatrixXd>> beta;
  FitDiagnostics diag;
};

inline SweepResult m_step_sweep(const std::vector<std::vector<Eigen::MatrixXd>>& beta,
                                const Dataset& data, const Posterior& post,
                                const PenaltySpec& penalty, const SolverConfig& config,
                                Rng& rng) {
  const int R = static_cast<int>(beta.size());
  penalty.validate(data.shape.num_responses());
  detail::EmState state(data, R, penalty, config);
  MixtureParams theta;
  theta.shape = data.shape;
  theta.R = R;
  theta.p = data.p();
  theta.intercept = data.intercept;
  theta.delta = Eigen::VectorXd::Constant(R, 1.0 / R);
  theta.beta = beta;
  state.init_from(theta);
  state.set_fixed_posterior(post.pi, theta.delta);
  SweepResult out;
  state.sweep(rng, out.diag);
  out.beta = state.beta();
  return out;
}

// Penalized EM (randomized blockwise-proximal M-step). Initializes at
// delta_r = 1/R and i.i.d. normal(0, init_sd) coefficients unless `init` is
// given; stops when the penalized objective changes by less than
// objective_tol between consecutive iterations.
inline FitResult fit(const Dataset& data, int R, const PenaltySpec& penalty,
                     const SolverConfig& config, const MixtureParams* init = nullptr) {
  data.validate();
  config.validate();
  penalty.validate(data.shape.num_responses());
  if (R < 1) throw config_error("fit: R must be >= 1");
  if (penalty.is_separate() && R != 1)
    throw config_error("fit: separate penalties require R = 1");
  detail::check_empty_categories(data, penalty);

  detail::EmState state(data, R, penalty, config);
  Rng rng(config.seed);
  if (init)
    state.init_from(*init);
  else
    state.init_random(rng);

  FitResult res;
  state.compute_logf();
  res.trace.push_back(state.objective());
  int t = 0;
  for (; t < config.max_em_iters; ++t) {
    if (t > 0 && t % config.score_refresh_period == 0) {
      state.refresh_scores();
      state.compute_logf();
    }
    state.run_e_step();
    state.sweep(rng, res.diag);
    state.run_delta_update();
    state.compute_logf();
    const double obj = state.objective();
    if (!std::isfinite(obj))
      throw solver_error("fit: non-finite objective at iteration " + std::to_string(t + 1));
    res.trace.push_back(obj);
    if (std::abs(res.trace[t + 1] - res.trace[t]) < config.objective_tol) {
      res.converged = true;
      ++t;
      break;
    }
  }
  res.iterations = t;
  if (config.merge_uniform_components) state.merge_uniform_components();
  res.theta = state.params();
  res.active_components = 0;
  for (int r = 0; r < R; ++r)
    if (res.theta.delta[r] > config.delta_floor) ++res.active_components;
  const int j0 = data.intercept ? 1 : 0;
  for (int j = j0; j < data.p(); ++j) {
    bool nz = false;
    for (int r = 0; r < R && !nz; ++r)
      for (int m = 0; m < data.shape.num_responses() && !nz; ++m)
        nz = (res.theta.beta[r][m].row(j).array() != 0.0).any();
    if (nz) res.support.push_back(j - j0);
  }
  return res;
}

// Idealized estimator with known latent labels: the same blockwise-proximal
// scheme with responsibilities pinned at the label indicators. delta is the
// empirical label frequency; components with no observations are dropped.
inline FitResult fit_oracle_z(const Dataset& data, int R, const OracleLabels& labels,
                              const PenaltySpec& penalty, const SolverConfig& config) {
  data.validate();
  config.validate();
  penalty.validate(data.shape.num_responses());
  if (static_cast<int>(labels.z.size()) != data.n())
    throw dimension_error("fit_oracle_z: label count mismatch");
  for (int zi : labels.z)
    if (zi < 0 || zi >= R) throw data_error("fit_oracle_z: label out of range");

  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(data.n(), R);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(R);
  for (int i = 0; i < data.n(); ++i) {
    pi(i, labels.z[i]) = 1.0;
    counts[labels.z[i]] += 1.0;
  }
  FitResult res;
  for (int r = 0; r < R; ++r)
    if (counts[r] == 0.0)
      res.warnings.push_back("component " + std::to_string(r + 1) +
                             " has no observations; dropped");

  detail::EmState state(data, R, penalty, config);
  Rng rng(config.seed);
  state.init_random(rng);
  state.set_fixed_posterior(pi, counts / data.n());

  // Objective: complete-data weighted log-likelihood minus the penalty.
  res.trace.push_back(state.q_value() - state.penalty_value());
  int t = 0;
  for (; t < config.max_em_iters; ++t) {
    if (t > 0 && t % config.score_refresh_period == 0) state.refresh_scores();
    state.sweep(rng, res.diag);
    const double obj = state.q_value() - state.penalty_value();
    if (!std::isfinite(obj))
      throw solver_error("fit_oracle_z: non-finite objective at iteration " +
                         std::to_string(t + 1));
    res.trace.push_back(obj);
    if (std::abs(res.trace[t + 1] - res.trace[t]) < config.objective_tol) {
      res.converged = true;
      ++t;
      break;
    }
  }
  res.iterations = t;
  res.theta = state.params();
  res.active_components = 0;
  for (int r = 0; r < R; ++r)
    if (res.theta.delta[r] > config.delta_floor) ++res.active_components;
  return res;
}

// Separate per-response penalized multinomial fits (the rank-one baselines).
// The joint R = 1 objective is separable across responses, so one sweep-based
// fit with a per-response penalty is exactly M independent fits.
inline FitResult fit_separate(const Dataset& data, PenaltyKind kind,
                              const std::vector<double>& lambdas,
                              const SolverConfig& config) {
  if (kind != PenaltyKind::separate_group && kind != PenaltyKind::separate_l1)
    throw config_error("fit_separate: kind must be sep-group or sep-l1");
  PenaltySpec spec;
  spec.kind = kind;
  spec.lambda_per_response = lambdas;
  return fit(data, 1, spec, config);
}

}  // namespace mixtensor
