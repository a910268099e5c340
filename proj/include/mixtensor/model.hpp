#pragma once

// Mixture-of-multinomial-logits parameterization. A model with R latent
// states carries mixture weights delta and, for each (response m, state r),
// a p x c_m coefficient matrix; conditional on the state, responses are
// independent multinomials with softmax link. All likelihood evaluation is
// done in log space with max subtraction.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mixtensor/dataset.hpp"
#include "mixtensor/errors.hpp"
#include "mixtensor/prob_tensor.hpp"
#include "mixtensor/shape.hpp"

namespace mixtensor {

struct MixtureParams {
  Shape shape;
  int R = 1;
  int p = 0;
  bool intercept = false;  // beta row 0 is an unpenalized intercept row
  Eigen::VectorXd delta;   // length R, nonnegative, sums to one
  std::vector<std::vector<Eigen::MatrixXd>> beta;  // [r][m]: p x c_m

  void validate() const {
    if (R < 1) throw dimension_error("model: R must be >= 1");
    if (delta.size() != R) throw dimension_error("model: delta length != R");
    if ((delta.array() < 0).any()) throw data_error("model: negative mixture weight");
    if (std::abs(delta.sum() - 1.0) > 1e-8)
      throw data_error("model: mixture weights do not sum to one");
    if (static_cast<int>(beta.size()) != R)
      throw dimension_error("model: beta component count != R");
    for (const auto& comp : beta) {
      if (static_cast<int>(comp.size()) != shape.num_responses())
        throw dimension_error("model: beta response count mismatch");
      for (int m = 0; m < shape.num_responses(); ++m)
        if (comp[m].rows() != p || comp[m].cols() != shape.dims[m])
          throw dimension_error("model: beta dims mismatch at response " +
                                std::to_string(m + 1));
    }
  }
};

// Latent state labels for the oracle estimator, zero-based.
struct OracleLabels {
  std::vector<int> z;
};

// Softmax class probabilities exp(beta_k' x) / sum_k exp(beta_k' x).
inline Eigen::VectorXd class_probs(const Eigen::MatrixXd& beta_mr,
                                   const Eigen::VectorXd& x) {
  if (beta_mr.rows() != x.size())
    throw dimension_error("class_probs: predictor length mismatch");
  Eigen::VectorXd scores = beta_mr.transpose() * x;
  for (int k = 0; k < scores.size(); ++k)
    if (!std::isfinite(scores[k]))
      throw data_error("class_probs: non-finite score at class " + std::to_string(k + 1));
  const double mx = scores.maxCoeff();
  Eigen::VectorXd e = (scores.array() - mx).exp();
  return e / e.sum();
}

inline Eigen::VectorXd log_class_probs(const Eigen::MatrixXd& beta_mr,
                                       const Eigen::VectorXd& x) {
  Eigen::VectorXd scores = beta_mr.transpose() * x;
  for (int k = 0; k < scores.size(); ++k)
    if (!std::isfinite(scores[k]))
      throw data_error("class_probs: non-finite score at class " + std::to_string(k + 1));
  const double mx = scores.maxCoeff();
  const double lse = mx + std::log((scores.array() - mx).exp().sum());
  return scores.array() - lse;
}

// log Pr(Y = y | X = x) under the mixture, via log-sum-exp over states.
inline double log_mixture_pmf(const MixtureParams& theta, const Eigen::VectorXd& x,
                              const std::vector<int>& y) {
  if (static_cast<int>(y.size()) != theta.shape.num_responses())
    throw dimension_error("mixture_pmf: response arity mismatch");
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(theta.R);
  for (int r = 0; r < theta.R; ++r) {
    if (theta.delta[r] <= 0.0) continue;
    double t = std::log(theta.delta[r]);
    for (int m = 0; m < theta.shape.num_responses(); ++m) {
      if (y[m] < 0 || y[m] >= theta.shape.dims[m])
        throw data_error("mixture_pmf: category out of range at response " +
                         std::to_string(m + 1));
      t += log_class_probs(theta.beta[r][m], x)[y[m]];
    }
    terms.push_back(t);
    best = std::max(best, t);
  }
  if (terms.empty() || !std::isfinite(best))
    return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double t : terms) s += std::exp(t - best);
  return best + std::log(s);
}

inline double mixture_pmf(const MixtureParams& theta, const Eigen::VectorXd& x,
                          const std::vector<int>& y) {
  return std::exp(log_mixture_pmf(theta, x, y));
}

// The conditional probability tensor at x: weights delta, factors the
// per-state class probabilities.
inline ProbTensor prob_tensor_at(const MixtureParams& theta, const Eigen::VectorXd& x) {
  RankRDecomposition d;
  d.shape = theta.shape;
  std::vector<double> w;
  for (int r = 0; r < theta.R; ++r) {
    if (theta.delta[r] <= 0.0) continue;
    w.push_back(theta.delta[r]);
    std::vector<Eigen::VectorXd> comp;
    comp.reserve(theta.shape.num_responses());
    for (int m = 0; m < theta.shape.num_responses(); ++m)
      comp.push_back(class_probs(theta.beta[r][m], x));
    d.factors.push_back(std::move(comp));
  }
  d.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  return compose(d);
}

// Observed-data log-likelihood; -infinity if some observation has zero mass.
inline double log_likelihood(const MixtureParams& theta, const Dataset& data) {
  if (data.p() != theta.p || !(data.shape == theta.shape))
    throw dimension_error("log_likelihood: dataset does not match model dims");
  double total = 0.0;
  std::vector<int> y(theta.shape.num_responses());
  for (int i = 0; i < data.n(); ++i) {
    for (int m = 0; m < data.Y.cols(); ++m) y[m] = data.Y(i, m);
    total += log_mixture_pmf(theta, data.X.row(i).transpose(), y);
  }
  return total;
}

// MAP category vector: argmax cell of the probability tensor at x, ties
// broken by the smallest lexicographic index.
inline std::vector<int> predict_map(const MixtureParams& theta, const Eigen::VectorXd& x) {
  ProbTensor t = prob_tensor_at(theta, x);
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.values.size(); ++i)
    if (t.values[i] > t.values[best]) best = i;
  return t.shape.cell_of(best);
}

// Free parameter counts: p(prod c_m - 1) for the vectorized multinomial,
// (R - 1) + p R sum_m (c_m - 1) for the rank-R mixture.
inline std::int64_t free_param_count(int p, const Shape& shape, int R, bool vectorized) {
  shape.validate();
  if (p < 0 || R < 1) throw dimension_error("free_param_count: invalid dims");
  if (vectorized) {
    std::int64_t cells = static_cast<std::int64_t>(shape.cell_count());
    return static_cast<std::int64_t>(p) * (cells - 1);
  }
  std::int64_t s = 0;
  for (int c : shape.dims) s += c - 1;
  return (R - 1) + static_cast<std::int64_t>(p) * R * s;
}

}  // namespace mixtensor
