#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mixtensor/model.hpp"
#include "test_util.hpp"

using namespace mixtensor;
using testutil::brute_force_cell;
using testutil::random_theta;
using testutil::random_x;

TEST(ClassProbs, ZeroBetaIsUniform) {
  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(3, 4);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
  Eigen::VectorXd pr = class_probs(beta, x);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(pr[k], 0.25, 1e-16);
}

TEST(ClassProbs, ShiftInvariance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto th = random_theta(rng, 1, 4, {5});
    Eigen::VectorXd x = random_x(rng, 4);
    Eigen::VectorXd base = class_probs(th.beta[0][0], x);
    Eigen::MatrixXd shifted = th.beta[0][0];
    Eigen::VectorXd a = random_x(rng, 4);
    for (int k = 0; k < shifted.cols(); ++k) shifted.col(k) += a;
    Eigen::VectorXd moved = class_probs(shifted, x);
    EXPECT_LT((base - moved).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(ClassProbs, LogOddsExample) {
  // scores (0, log 3) at x = 1: probabilities (1/4, 3/4)
  Eigen::MatrixXd beta(1, 2);
  beta << 0.0, std::log(3.0);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  Eigen::VectorXd pr = class_probs(beta, x);
  EXPECT_NEAR(pr[0], 0.25, 1e-15);
  EXPECT_NEAR(pr[1], 0.75, 1e-15);
}

TEST(ClassProbs, SimplexInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto th = random_theta(rng, 1, 6, {2 + trial % 4}, 2.0);
    Eigen::VectorXd pr = class_probs(th.beta[0][0], random_x(rng, 6));
    EXPECT_TRUE((pr.array() > 0).all());
    EXPECT_NEAR(pr.sum(), 1.0, 1e-14);
  }
}

TEST(ClassProbs, OverflowSafe) {
  // sigma_beta = 2 with p = 100 overflows naive exponentials
  std::mt19937_64 rng(6);
  auto th = random_theta(rng, 1, 100, {4}, 2.0);
  Eigen::VectorXd x = 10.0 * random_x(rng, 100);
  Eigen::VectorXd pr = class_probs(th.beta[0][0], x);
  EXPECT_NEAR(pr.sum(), 1.0, 1e-12);
  EXPECT_TRUE((pr.array() >= 0).all());
}

TEST(ClassProbs, NonFiniteScoreThrows) {
  Eigen::MatrixXd beta(1, 2);
  beta << 1.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(class_probs(beta, Eigen::VectorXd::Ones(1)), data_error);
}

TEST(MixturePmf, UniformCase) {
  std::mt19937_64 rng(7);
  auto th = random_theta(rng, 1, 3, {2, 2}, 0.0);  // beta = 0
  EXPECT_NEAR(mixture_pmf(th, random_x(rng, 3), {0, 1}), 0.25, 1e-15);
}

TEST(MixturePmf, IdenticalComponentsCollapse) {
  std::mt19937_64 rng(8);
  auto th1 = random_theta(rng, 1, 4, {3, 2});
  MixtureParams th2 = th1;
  th2.R = 2;
  th2.delta = Eigen::VectorXd(2);
  th2.delta << 0.3, 0.7;
  th2.beta.push_back(th1.beta[0]);
  Eigen::VectorXd x = random_x(rng, 4);
  EXPECT_NEAR(mixture_pmf(th1, x, {2, 1}), mixture_pmf(th2, x, {2, 1}), 1e-14);
}

TEST(MixturePmf, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int R = 1 + trial % 3;
    std::vector<int> dims{2 + trial % 2, 3};
    auto th = random_theta(rng, R, 5, dims);
    Eigen::VectorXd x = random_x(rng, 5);
    std::vector<int> y{trial % dims[0], (trial / 2) % 3};
    EXPECT_NEAR(mixture_pmf(th, x, y), brute_force_cell(th, x, y), 1e-12);
  }
}

TEST(MixturePmf, LabelSwitchingInvariance) {
  std::mt19937_64 rng(10);
  auto th = random_theta(rng, 3, 4, {2, 3});
  MixtureParams sw = th;
  std::swap(sw.delta[0], sw.delta[2]);
  std::swap(sw.beta[0], sw.beta[2]);
  Eigen::VectorXd x = random_x(rng, 4);
  EXPECT_NEAR(mixture_pmf(th, x, {1, 2}), mixture_pmf(sw, x, {1, 2}), 1e-14);
}

TEST(ProbTensorAt, RankOneWhenSingleComponent) {
  std::mt19937_64 rng(11);
  auto th = random_theta(rng, 1, 4, {3, 2, 2});
  auto t = prob_tensor_at(th, random_x(rng, 4));
  EXPECT_TRUE(rank_one_check(t, 1e-10).has_value());
}

TEST(ProbTensorAt, CellsSumToOne) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    auto th = random_theta(rng, 1 + trial % 4, 5, {2, 4, 3}, 1.5);
    auto t = prob_tensor_at(th, random_x(rng, 5));
    EXPECT_TRUE(t.is_valid(1e-10));
  }
}

TEST(ProbTensorAt, MatchesBruteForcePerCell) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 25; ++trial) {
    auto th = random_theta(rng, 2, 3, {2, 2});
    Eigen::VectorXd x = random_x(rng, 3);
    auto t = prob_tensor_at(th, x);
    for (std::size_t i = 0; i < t.values.size(); ++i)
      EXPECT_NEAR(t.values[i], brute_force_cell(th, x, t.shape.cell_of(i)), 1e-12);
  }
}

TEST(ProbTensorAt, MixtureOfMarginals) {
  std::mt19937_64 rng(14);
  auto th = random_theta(rng, 3, 5, {3, 4});
  Eigen::VectorXd x = random_x(rng, 5);
  auto t = prob_tensor_at(th, x);
  for (int m = 0; m < 2; ++m) {
    Eigen::VectorXd lhs = marginals(t, m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(th.shape.dims[m]);
    for (int r = 0; r < th.R; ++r) rhs += th.delta[r] * class_probs(th.beta[r][m], x);
    EXPECT_LT((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(LogLikelihood, UniformSingleObservation) {
  std::mt19937_64 rng(15);
  auto th = random_theta(rng, 1, 3, {2, 2}, 0.0);
  Dataset d;
  d.shape = th.shape;
  d.X = Eigen::MatrixXd::Random(1, 3);
  d.Y.resize(1, 2);
  d.Y << 0, 1;
  EXPECT_NEAR(log_likelihood(th, d), std::log(0.25), 1e-14);
}

TEST(LogLikelihood, AdditiveUnderDuplication) {
  std::mt19937_64 rng(16);
  auto th = random_theta(rng, 2, 4, {3, 2});
  Dataset d = testutil::random_dataset(rng, th, 6);
  Dataset dd;
  dd.shape = d.shape;
  dd.X.resize(12, 4);
  dd.Y.resize(12, 2);
  dd.X << d.X, d.X;
  dd.Y << d.Y, d.Y;
  EXPECT_NEAR(2.0 * log_likelihood(th, d), log_likelihood(th, dd), 1e-10);
}

TEST(LogLikelihood, MatchesTensorCells) {
  std::mt19937_64 rng(17);
  auto th = random_theta(rng, 2, 4, {2, 3});
  Dataset d = testutil::random_dataset(rng, th, 10);
  double from_pmf = log_likelihood(th, d);
  double from_tensor = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    auto t = prob_tensor_at(th, d.X.row(i).transpose());
    from_tensor += std::log(t.at({d.Y(i, 0), d.Y(i, 1)}));
  }
  EXPECT_NEAR(from_pmf, from_tensor, 1e-10);
}

TEST(PredictMap, PointMassAndTies) {
  std::mt19937_64 rng(18);
  auto th = random_theta(rng, 1, 2, {2, 2}, 0.0);  // uniform model
  // uniform tensor: tie broken toward the smallest lexicographic cell
  EXPECT_EQ(predict_map(th, random_x(rng, 2)), (std::vector<int>{0, 0}));

  // strong point mass
  th.beta[0][0].col(1).setConstant(5.0);
  th.beta[0][1].col(0).setConstant(5.0);
  Eigen::VectorXd x = Eigen::VectorXd::Ones(2);
  EXPECT_EQ(predict_map(th, x), (std::vector<int>{1, 0}));
}

TEST(PredictMap, RankOneFactorizes) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    auto th = random_theta(rng, 1, 4, {3, 4, 2});
    Eigen::VectorXd x = random_x(rng, 4);
    auto joint = predict_map(th, x);
    for (int m = 0; m < 3; ++m) {
      Eigen::VectorXd pr = class_probs(th.beta[0][m], x);
      int arg = 0;
      for (int k = 1; k < pr.size(); ++k)
        if (pr[k] > pr[arg]) arg = k;
      EXPECT_EQ(joint[m], arg);
    }
  }
}

TEST(FreeParamCount, PaperValues) {
  Shape s({4, 4, 4, 4});
  EXPECT_EQ(free_param_count(100, s, 1, true), 25500);
  EXPECT_EQ(free_param_count(100, s, 2, false), 2401);
  EXPECT_EQ(free_param_count(100, s, 3, false), 3602);
}

TEST(ModelValidate, CatchesBadDelta) {
  std::mt19937_64 rng(20);
  auto th = random_theta(rng, 2, 3, {2, 2});
  th.delta[0] += 0.5;
  EXPECT_THROW(th.validate(), data_error);
}

TEST(DatasetValidate, CatchesOutOfRangeCategory) {
  std::mt19937_64 rng(21);
  auto th = random_theta(rng, 1, 3, {2, 2});
  Dataset d = testutil::random_dataset(rng, th, 5);
  d.Y(2, 1) = 5;
  EXPECT_THROW(d.validate(), data_error);
}
