#pragma once

// Test-set evaluation: deviance, joint error rate, and (when the generating
// truth is available) the tensor-distance metrics.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "mixtensor/dataset.hpp"
#include "mixtensor/model.hpp"
#include "mixtensor/simulate.hpp"

namespace mixtensor {

// Deviance: -2 times the observed-data log-likelihood of `data`.
inline double deviance(const MixtureParams& theta, const Dataset& data) {
  return -2.0 * log_likelihood(theta, data);
}

// Fraction of rows whose MAP category vector mismatches the observed one in
// any response.
inline double joint_error_rate(const MixtureParams& theta, const Dataset& data) {
  if (data.p() != theta.p || !(data.shape == theta.shape))
    throw dimension_error("joint_error_rate: dataset does not match model dims");
  int errors = 0;
  for (int i = 0; i < data.n(); ++i) {
    const std::vector<int> yhat = predict_map(theta, data.X.row(i).transpose());
    for (int m = 0; m < data.shape.num_responses(); ++m)
      if (yhat[m] != data.Y(i, m)) {
        ++errors;
        break;
      }
  }
  return static_cast<double>(errors) / data.n();
}

struct EvalMetrics {
  double deviance = std::numeric_limits<double>::quiet_NaN();
  double joint_error_rate = std::numeric_limits<double>::quiet_NaN();
  double sqrt_avg_kl = std::numeric_limits<double>::quiet_NaN();  // needs truth
  double sqrt_avg_kl_clamped = std::numeric_limits<double>::quiet_NaN();
  double hellinger_avg = std::numeric_limits<double>::quiet_NaN();
  bool kl_infinite = false;
};

inline EvalMetrics evaluate_model(const MixtureParams& theta, const Dataset& test,
                                  const MixtureParams* truth = nullptr) {
  EvalMetrics m;
  m.deviance = deviance(theta, test);
  m.joint_error_rate = joint_error_rate(theta, test);
  if (truth) {
    m.sqrt_avg_kl = sqrt_avg_kl_test(theta, *truth, test.X);
    m.kl_infinite = std::isinf(m.sqrt_avg_kl);
    double clamped = 0.0;
    for (int i = 0; i < test.n(); ++i) {
      const Eigen::VectorXd x = test.X.row(i).transpose();
      clamped += kl_divergence_clamped(prob_tensor_at(*truth, x), prob_tensor_at(theta, x));
    }
    m.sqrt_avg_kl_clamped = std::sqrt(clamped / test.n());
    m.hellinger_avg = avg_hellinger_test(theta, *truth, test.X);
  }
  return m;
}

// Replication statistics: mean, median, standard error sd/sqrt(reps).
struct SummaryStat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

inline SummaryStat summarize(std::vector<double> v) {
  SummaryStat s;
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  s.count = static_cast<int>(v.size());
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / v.size();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  if (n > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / (n - 1)) / std::sqrt(double(n));
  } else {
    s.se = 0.0;
  }
  return s;
}

}  // namespace mixtensor
