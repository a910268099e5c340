#pragma once

// Synthetic data generation: AR(1)-correlated Gaussian predictors, a sparse
// random mixture truth with the study's mixture-weight rules, and categorical
// responses drawn through the latent state. Everything is reproducible from
// (scenario, seed); train/validation/test use derived seed streams.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mixtensor/dataset.hpp"
#include "mixtensor/errors.hpp"
#include "mixtensor/model.hpp"
#include "mixtensor/prob_tensor.hpp"
#include "mixtensor/rng.hpp"
#include "mixtensor/solver.hpp"

namespace mixtensor {

struct SimScenario {
  std::string name = "scenario";
  int R_true = 2;
  int n_train = 300;
  int n_val = 200;
  int n_test = 1000;
  int p = 100;
  std::vector<int> dims = {4, 4, 4, 4};
  double delta1 = 0.5;
  double sigma_beta = 1.0;
  int n_active = 5;
  std::uint64_t seed = 1;
  bool intercept = false;  // prepend an unpenalized all-ones column
  bool keep_z = true;      // retain latent labels in generated datasets

  // delta_1 parameterizes the mixture weights: R=2 gives (d1, 1-d1); R=3
  // gives (d1, 2/3-d1, 1/3). R=1 ignores delta1.
  Eigen::VectorXd mixture_weights() const {
    Eigen::VectorXd d;
    if (R_true == 1) {
      d = Eigen::VectorXd::Ones(1);
    } else if (R_true == 2) {
      d = Eigen::VectorXd(2);
      d << delta1, 1.0 - delta1;
    } else if (R_true == 3) {
      d = Eigen::VectorXd(3);
      d << delta1, 2.0 / 3.0 - delta1, 1.0 / 3.0;
    } else {
      throw config_error("scenario: R_true must be 1, 2 or 3");
    }
    for (int r = 0; r < d.size(); ++r)
      if (d[r] <= 0.0)
        throw config_error("scenario: delta1 = " + std::to_string(delta1) +
                           " gives a non-positive mixture weight");
    return d;
  }

  void validate() const {
    if (n_train < 1 || n_val < 0 || n_test < 0)
      throw config_error("scenario: sample sizes must be positive");
    if (p < 1) throw config_error("scenario: p must be >= 1");
    Shape(dims).validate();
    if (n_active < 0 || n_active > p)
      throw config_error("scenario: n_active must be in [0, p]");
    if (sigma_beta < 0) throw config_error("scenario: sigma_beta must be >= 0");
    mixture_weights();
  }
};

struct SimTruth {
  MixtureParams theta_star;
  std::vector<int> active_set;  // zero-based indices into the non-intercept block
};

// n x p rows i.i.d. N(0, Sigma) with Sigma_{jk} = 0.5^{|j-k|}, via the AR(1)
// recursion x_j = 0.5 x_{j-1} + sqrt(1 - 0.25) e_j.
inline Eigen::MatrixXd gen_predictors(int n, int p, std::uint64_t seed) {
  if (n < 1 || p < 1) throw config_error("gen_predictors: n, p must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd X(n, p);
  const double rho = 0.5;
  const double innov = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = normal(rng);
    for (int j = 1; j < p; ++j) X(i, j) = rho * X(i, j - 1) + innov * normal(rng);
  }
  return X;
}

// Sparse mixture truth: n_active predictor rows (chosen without replacement)
// filled with i.i.d. N(0, sigma_beta^2) in every coefficient block, all other
// rows exactly zero.
inline SimTruth gen_truth(const SimScenario& sc) {
  sc.validate();
  Rng rng(derive_seed(sc.seed, 11));
  const Shape shape(sc.dims);
  const int M = shape.num_responses();
  const int p_model = sc.p + (sc.intercept ? 1 : 0);
  const int j0 = sc.intercept ? 1 : 0;

  std::vector<int> pool(sc.p);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<int> active;
  for (int k = 0; k < sc.n_active; ++k) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(pool.size()) - 1);
    const int idx = pick(rng);
    active.push_back(pool[idx]);
    pool.erase(pool.begin() + idx);
  }
  std::sort(active.begin(), active.end());

  std::normal_distribution<double> normal(0.0, sc.sigma_beta);
  SimTruth truth;
  truth.active_set = active;
  truth.theta_star.shape = shape;
  truth.theta_star.R = sc.R_true;
  truth.theta_star.p = p_model;
  truth.theta_star.intercept = sc.intercept;
  truth.theta_star.delta = sc.mixture_weights();
  truth.theta_star.beta.resize(sc.R_true);
  for (int r = 0; r < sc.R_true; ++r) {
    truth.theta_star.beta[r].resize(M);
    for (int m = 0; m < M; ++m) {
      truth.theta_star.beta[r][m] = Eigen::MatrixXd::Zero(p_model, shape.dims[m]);
      for (int a : active)
        for (int k = 0; k < shape.dims[m]; ++k)
          truth.theta_star.beta[r][m](j0 + a, k) = normal(rng);
    }
  }
  return truth;
}

// Draws the latent state Z ~ Categorical(delta), then each response
// independently from its state's class probabilities.
inline void gen_responses(const SimTruth& truth, const Eigen::MatrixXd& X,
                          std::uint64_t seed, Eigen::MatrixXi& Y, std::vector<int>& z) {
  const MixtureParams& th = truth.theta_star;
  const int n = static_cast<int>(X.rows());
  const int M = th.shape.num_responses();
  if (X.cols() != th.p) throw dimension_error("gen_responses: predictor dim mismatch");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Y.resize(n, M);
  z.resize(n);
  for (int i = 0; i < n; ++i) {
    double u = unif(rng);
    int zi = th.R - 1;
    double acc = 0.0;
    for (int r = 0; r < th.R; ++r) {
      acc += th.delta[r];
      if (u <= acc) {
        zi = r;
        break;
      }
    }
    z[i] = zi;
    const Eigen::VectorXd x = X.row(i).transpose();
    for (int m = 0; m < M; ++m) {
      const Eigen::VectorXd pr = class_probs(th.beta[zi][m], x);
      double v = unif(rng);
      int y = th.shape.dims[m] - 1;
      double c = 0.0;
      for (int k = 0; k < th.shape.dims[m]; ++k) {
        c += pr[k];
        if (v <= c) {
          y = k;
          break;
        }
      }
      Y(i, m) = y;
    }
  }
}

struct SimulatedData {
  SimTruth truth;
  Dataset train, val, test;
};

inline Dataset make_split(const SimTruth& truth, const SimScenario& sc, int n,
                          std::uint64_t x_seed, std::uint64_t y_seed) {
  Dataset d;
  d.shape = Shape(sc.dims);
  Eigen::MatrixXd Xraw = gen_predictors(n, sc.p, x_seed);
  if (sc.intercept) {
    d.X.resize(n, sc.p + 1);
    d.X.col(0).setOnes();
    d.X.rightCols(sc.p) = Xraw;
    d.intercept = true;
  } else {
    d.X = std::move(Xraw);
  }
  std::vector<int> z;
  gen_responses(truth, d.X, y_seed, d.Y, z);
  if (sc.keep_z) d.z = std::move(z);
  d.validate();
  return d;
}

inline SimulatedData simulate_scenario(const SimScenario& sc) {
  sc.validate();
  SimulatedData out;
  out.truth = gen_truth(sc);
  out.train = make_split(out.truth, sc, sc.n_train, derive_seed(sc.seed, 21),
                         derive_seed(sc.seed, 22));
  if (sc.n_val > 0)
    out.val = make_split(out.truth, sc, sc.n_val, derive_seed(sc.seed, 31),
                         derive_seed(sc.seed, 32));
  if (sc.n_test > 0)
    out.test = make_split(out.truth, sc, sc.n_test, derive_seed(sc.seed, 41),
                          derive_seed(sc.seed, 42));
  return out;
}

// Square-root average KL divergence over test predictors:
// sqrt(n^{-1} sum_i sum_cells Phat log(Phat / P)), estimate against truth.
inline double sqrt_avg_kl_test(const MixtureParams& theta_hat, const MixtureParams& truth,
                               const Eigen::MatrixXd& X_test) {
  if (theta_hat.p != truth.p || !(theta_hat.shape == truth.shape))
    throw dimension_error("sqrt_avg_kl_test: model dims differ");
  double total = 0.0;
  for (int i = 0; i < X_test.rows(); ++i) {
    const Eigen::VectorXd x = X_test.row(i).transpose();
    const double kl = kl_divergence(prob_tensor_at(truth, x), prob_tensor_at(theta_hat, x));
    if (std::isinf(kl)) return std::numeric_limits<double>::infinity();
    total += kl;
  }
  return std::sqrt(total / X_test.rows());
}

// Companion metric: average Hellinger distance over test predictors.
inline double avg_hellinger_test(const MixtureParams& theta_hat, const MixtureParams& truth,
                                 const Eigen::MatrixXd& X_test) {
  if (theta_hat.p != truth.p || !(theta_hat.shape == truth.shape))
    throw dimension_error("avg_hellinger_test: model dims differ");
  double total = 0.0;
  for (int i = 0; i < X_test.rows(); ++i) {
    const Eigen::VectorXd x = X_test.row(i).transpose();
    total += hellinger(prob_tensor_at(truth, x), prob_tensor_at(theta_hat, x));
  }
  return total / X_test.rows();
}

}  // namespace mixtensor
