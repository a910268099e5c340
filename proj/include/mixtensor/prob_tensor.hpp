#pragma once

// Dense conditional probability tensors and their rank-structured form: a
// probability tensor is a sum of weighted outer products of per-response
// probability vectors. All operations here are pure functions.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mixtensor/errors.hpp"
#include "mixtensor/shape.hpp"

namespace mixtensor {

struct ProbTensor {
  Shape shape;
  std::vector<double> values;  // row-major, mode 1 slowest

  ProbTensor() = default;
  ProbTensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape.cell_count())
      throw dimension_error("prob tensor: value count does not match shape");
  }

  double at(const std::vector<int>& cell) const { return values[shape.linear_index(cell)]; }

  // Entrywise nonnegative, summing to one within 1e-10.
  bool is_valid(double sum_tol = 1e-10) const {
    double sum = 0.0;
    for (double v : values) {
      if (!(v >= 0.0)) return false;
      sum += v;
    }
    return std::abs(sum - 1.0) <= sum_tol;
  }
};

// Weighted sum of R rank-one tensors: sum_r delta_r p_{1r} x ... x p_{Mr}.
struct RankRDecomposition {
  Shape shape;
  Eigen::VectorXd weights;                        // delta_1..delta_R
  std::vector<std::vector<Eigen::VectorXd>> factors;  // [r][m], length c_m

  int rank() const { return static_cast<int>(weights.size()); }

  void check_dims() const {
    if (static_cast<int>(factors.size()) != rank())
      throw dimension_error("decomposition: factor rows do not match weight count");
    for (const auto& comp : factors) {
      if (static_cast<int>(comp.size()) != shape.num_responses())
        throw dimension_error("decomposition: factor count does not match responses");
      for (int m = 0; m < shape.num_responses(); ++m)
        if (comp[m].size() != shape.dims[m])
          throw dimension_error("decomposition: factor length mismatch at response " +
                                std::to_string(m + 1));
    }
  }
};

inline ProbTensor compose(const RankRDecomposition& d) {
  d.check_dims();
  const int M = d.shape.num_responses();
  const std::size_t cells = d.shape.cell_count();
  std::vector<double> out(cells, 0.0);
  std::vector<int> cell(M, 0);
  for (std::size_t idx = 0; idx < cells; ++idx) {
    double v = 0.0;
    for (int r = 0; r < d.rank(); ++r) {
      double term = d.weights[r];
      for (int m = 0; m < M; ++m) term *= d.factors[r][m][cell[m]];
      v += term;
    }
    out[idx] = v;
    for (int m = M - 1; m >= 0; --m) {  // odometer over (j_1..j_M)
      if (++cell[m] < d.shape.dims[m]) break;
      cell[m] = 0;
    }
  }
  return ProbTensor(d.shape, std::move(out));
}

// Marginal distribution of response m (zero-based), summing all other modes.
inline Eigen::VectorXd marginals(const ProbTensor& t, int m) {
  const int M = t.shape.num_responses();
  if (m < 0 || m >= M) throw dimension_error("marginals: response index out of range");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(t.shape.dims[m]);
  // stride of mode m in the row-major layout
  std::size_t stride = 1;
  for (int k = m + 1; k < M; ++k) stride *= static_cast<std::size_t>(t.shape.dims[k]);
  const std::size_t cm = static_cast<std::size_t>(t.shape.dims[m]);
  const std::size_t block = stride * cm;
  for (std::size_t base = 0; base < t.values.size(); base += block)
    for (std::size_t j = 0; j < cm; ++j)
      for (std::size_t s = 0; s < stride; ++s)
        out[static_cast<int>(j)] += t.values[base + j * stride + s];
  return out;
}

// Tests whether t factors as the outer product of its own marginals
// (conditional independence of the responses). Returns the rank-one
// decomposition when the max-norm deviation is within tol.
inline std::optional<RankRDecomposition> rank_one_check(const ProbTensor& t,
                                                        double tol = 1e-8) {
  RankRDecomposition d;
  d.shape = t.shape;
  d.weights = Eigen::VectorXd::Ones(1);
  d.factors.resize(1);
  for (int m = 0; m < t.shape.num_responses(); ++m) d.factors[0].push_back(marginals(t, m));
  ProbTensor recomposed = compose(d);
  double dev = 0.0;
  for (std::size_t i = 0; i < t.values.size(); ++i)
    dev = std::max(dev, std::abs(t.values[i] - recomposed.values[i]));
  if (dev <= tol) return d;
  return std::nullopt;
}

// Rewrites a decomposition whose rank-one terms compose to nonnegative
// tensors into the canonical form with delta_r > 0 summing to one and each
// factor nonnegative with unit L1 norm. Zero-weight components are dropped.
inline RankRDecomposition normalize(const RankRDecomposition& d) {
  d.check_dims();
  const int M = d.shape.num_responses();
  RankRDecomposition out;
  out.shape = d.shape;
  std::vector<double> new_weights;
  double weight_sum = 0.0;
  for (int r = 0; r < d.rank(); ++r) {
    double w = d.weights[r];
    if (w == 0.0) continue;  // factors of a zero-weight term are irrelevant
    std::vector<Eigen::VectorXd> comp(M);
    for (int m = 0; m < M; ++m) {
      Eigen::VectorXd f = d.factors[r][m];
      const bool all_nonneg = (f.array() >= 0.0).all();
      const bool all_nonpos = (f.array() <= 0.0).all();
      if (!all_nonneg && !all_nonpos)
        throw data_error("normalize: rank-one term with mixed-sign factor has no "
                         "nonnegative form");
      if (all_nonpos && !all_nonneg) {
        f = -f;
        w = -w;
      }
      const double l1 = f.lpNorm<1>();
      if (l1 == 0.0) {
        w = 0.0;
        break;
      }
      comp[m] = f / l1;
      w *= l1;
    }
    if (w < 0.0)
      throw data_error("normalize: rank-one term composes to a negative tensor");
    if (w == 0.0) continue;
    new_weights.push_back(w);
    out.factors.push_back(std::move(comp));
    weight_sum += w;
  }
  if (new_weights.empty())
    throw data_error("normalize: decomposition composes to the zero tensor");
  if (std::abs(weight_sum - 1.0) > 1e-8)
    throw data_error("normalize: composed tensor is not a probability tensor "
                     "(mass " + std::to_string(weight_sum) + ")");
  out.weights = Eigen::Map<Eigen::VectorXd>(new_weights.data(),
                                            static_cast<Eigen::Index>(new_weights.size()));
  return out;
}

// Largest rank ever needed for a probability tensor of this shape:
// prod_m c_m / max_k c_k, exact integer arithmetic.
inline std::size_t rank_upper_bound(const Shape& shape) {
  shape.validate();
  std::size_t prod = shape.cell_count();
  int cmax = 0;
  for (int c : shape.dims) cmax = std::max(cmax, c);
  return prod / static_cast<std::size_t>(cmax);
}

// KL divergence oriented as sum_cells q log(q / p) with p the reference
// (truth) and q the estimate. Cells with q = 0 contribute nothing; a cell
// with p = 0 < q makes the divergence +infinity.
inline double kl_divergence(const ProbTensor& p, const ProbTensor& q) {
  if (!(p.shape == q.shape)) throw dimension_error("kl_divergence: shape mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double qi = q.values[i];
    if (qi <= 0.0) continue;
    const double pi = p.values[i];
    if (pi <= 0.0) return std::numeric_limits<double>::infinity();
    kl += qi * std::log(qi / pi);
  }
  return std::max(kl, 0.0);
}

// Clamped variant for plotting: reference cells floored at `floor`.
inline double kl_divergence_clamped(const ProbTensor& p, const ProbTensor& q,
                                    double floor = 1e-12) {
  if (!(p.shape == q.shape)) throw dimension_error("kl_divergence: shape mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double qi = q.values[i];
    if (qi <= 0.0) continue;
    kl += qi * std::log(qi / std::max(p.values[i], floor));
  }
  return std::max(kl, 0.0);
}

// Hellinger distance sqrt(0.5 * sum_cells (sqrt(p) - sqrt(q))^2), in [0, 1].
inline double hellinger(const ProbTensor& p, const ProbTensor& q) {
  if (!(p.shape == q.shape)) throw dimension_error("hellinger: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double d = std::sqrt(std::max(p.values[i], 0.0)) -
                     std::sqrt(std::max(q.values[i], 0.0));
    s += d * d;
  }
  return std::sqrt(0.5 * s);
}

}  // namespace mixtensor
