#include <gtest/gtest.h>

#include <cmath>

#include "mixtensor/metrics.hpp"
#include "mixtensor/simulate.hpp"

using namespace mixtensor;

TEST(GenPredictors, AR1CovarianceStructure) {
  const int n = 10000, p = 6;
  Eigen::MatrixXd X = gen_predictors(n, p, 123);
  Eigen::RowVectorXd mean = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - mean;
  for (int j = 0; j < p; ++j) {
    const double var = centered.col(j).squaredNorm() / (n - 1);
    EXPECT_NEAR(var, 1.0, 0.05);
    if (j + 1 < p) {
      const double cov = centered.col(j).dot(centered.col(j + 1)) / (n - 1);
      EXPECT_NEAR(cov, 0.5, 0.05);
    }
    if (j + 2 < p) {
      const double cov2 = centered.col(j).dot(centered.col(j + 2)) / (n - 1);
      EXPECT_NEAR(cov2, 0.25, 0.05);
    }
  }
}

TEST(GenPredictors, SingleColumnStandardNormal) {
  Eigen::MatrixXd X = gen_predictors(20000, 1, 7);
  EXPECT_NEAR(X.col(0).mean(), 0.0, 0.03);
  EXPECT_NEAR(X.col(0).squaredNorm() / X.rows(), 1.0, 0.05);
}

TEST(GenTruth, ZeroSigmaGivesUniformTensor) {
  SimScenario sc;
  sc.sigma_beta = 0.0;
  sc.p = 10;
  sc.dims = {3, 2};
  sc.seed = 5;
  SimTruth truth = gen_truth(sc);
  Eigen::VectorXd x = Eigen::VectorXd::Random(10);
  ProbTensor t = prob_tensor_at(truth.theta_star, x);
  for (double v : t.values) EXPECT_NEAR(v, 1.0 / 6, 1e-12);
}

TEST(GenTruth, ActiveRowStructure) {
  SimScenario sc;
  sc.p = 40;
  sc.seed = 9;
  SimTruth truth = gen_truth(sc);
  EXPECT_EQ(truth.active_set.size(), 5u);
  for (int r = 0; r < sc.R_true; ++r)
    for (std::size_t m = 0; m < sc.dims.size(); ++m)
      for (int j = 0; j < sc.p; ++j) {
        const bool active = std::find(truth.active_set.begin(), truth.active_set.end(), j) !=
                            truth.active_set.end();
        const bool nonzero =
            (truth.theta_star.beta[r][m].row(j).array() != 0.0).any();
        EXPECT_EQ(active, nonzero) << "row " << j;
      }
}

TEST(GenTruth, ActiveEntrySdMatchesSigmaBeta) {
  double ss = 0.0;
  long count = 0;
  for (int rep = 0; rep < 70; ++rep) {
    SimScenario sc;
    sc.sigma_beta = 1.7;
    sc.seed = 100 + rep;
    SimTruth truth = gen_truth(sc);
    for (int r = 0; r < sc.R_true; ++r)
      for (std::size_t m = 0; m < sc.dims.size(); ++m)
        for (int a : truth.active_set) {
          ss += truth.theta_star.beta[r][m].row(a).squaredNorm();
          count += truth.theta_star.beta[r][m].cols();
        }
  }
  EXPECT_GT(count, 10000);
  EXPECT_NEAR(std::sqrt(ss / count), 1.7, 0.17);
}

TEST(GenResponses, UniformFrequenciesUnderZeroBeta) {
  SimScenario sc;
  sc.sigma_beta = 0.0;
  sc.p = 5;
  sc.dims = {4, 4};
  sc.n_train = 8000;
  sc.seed = 31;
  SimulatedData sim = simulate_scenario(sc);
  for (int m = 0; m < 2; ++m)
    for (int k = 0; k < 4; ++k) {
      const double freq =
          (sim.train.Y.col(m).array() == k).cast<double>().sum() / sc.n_train;
      // 3 sigma binomial band around 1/4
      EXPECT_NEAR(freq, 0.25, 3 * std::sqrt(0.25 * 0.75 / sc.n_train));
    }
}

TEST(GenResponses, LatentFrequenciesMatchDelta) {
  SimScenario sc;
  sc.R_true = 3;
  sc.delta1 = 0.25;  // weights (0.25, 0.4166.., 0.3333..)
  sc.n_train = 9000;
  sc.p = 5;
  sc.seed = 37;
  SimulatedData sim = simulate_scenario(sc);
  const Eigen::VectorXd d = sc.mixture_weights();
  for (int r = 0; r < 3; ++r) {
    double freq = 0;
    for (int zi : sim.train.z) freq += (zi == r);
    freq /= sc.n_train;
    EXPECT_NEAR(freq, d[r], 3 * std::sqrt(d[r] * (1 - d[r]) / sc.n_train));
  }
}

TEST(GenResponses, RankOneTruthGivesIndependentResponses) {
  SimScenario sc;
  sc.R_true = 1;
  sc.p = 4;
  sc.dims = {2, 2};
  sc.n_train = 20000;
  sc.sigma_beta = 1.0;
  sc.n_active = 2;
  sc.seed = 41;
  SimulatedData sim = simulate_scenario(sc);
  // marginal product vs joint frequency, aggregated over X (independence
  // conditional on X implies it for the X-mixture cellwise comparison is
  // done against the model's own mixed tensor)
  double joint00 = 0, m0 = 0, m1 = 0, both_expected = 0;
  for (int i = 0; i < sc.n_train; ++i) {
    joint00 += (sim.train.Y(i, 0) == 0 && sim.train.Y(i, 1) == 0);
    m0 += (sim.train.Y(i, 0) == 0);
    m1 += (sim.train.Y(i, 1) == 0);
    ProbTensor t = prob_tensor_at(sim.truth.theta_star, sim.train.X.row(i).transpose());
    both_expected += t.at({0, 0});
  }
  joint00 /= sc.n_train;
  both_expected /= sc.n_train;
  EXPECT_NEAR(joint00, both_expected, 4 * std::sqrt(0.25 / sc.n_train));
}

TEST(Scenario, WeightRuleAndRejection) {
  SimScenario sc;
  sc.R_true = 3;
  sc.delta1 = 0.25;
  Eigen::VectorXd d = sc.mixture_weights();
  EXPECT_NEAR(d[0], 0.25, 1e-15);
  EXPECT_NEAR(d[1], 2.0 / 3 - 0.25, 1e-15);
  EXPECT_NEAR(d[2], 1.0 / 3, 1e-15);

  sc.delta1 = 0.7;  // second weight would be negative
  EXPECT_THROW(sc.validate(), config_error);
  sc.R_true = 2;
  sc.delta1 = 1.0;
  EXPECT_THROW(sc.validate(), config_error);
}

TEST(Scenario, BitReproducible) {
  SimScenario sc;
  sc.p = 8;
  sc.n_train = 50;
  sc.n_val = 20;
  sc.n_test = 20;
  sc.seed = 77;
  SimulatedData a = simulate_scenario(sc);
  SimulatedData b = simulate_scenario(sc);
  EXPECT_EQ((a.train.X - b.train.X).lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_EQ((a.train.Y - b.train.Y).lpNorm<Eigen::Infinity>(), 0);
  EXPECT_EQ(a.train.z, b.train.z);
  for (int r = 0; r < 2; ++r)
    for (int m = 0; m < 4; ++m)
      EXPECT_EQ((a.truth.theta_star.beta[r][m] - b.truth.theta_star.beta[r][m])
                    .lpNorm<Eigen::Infinity>(),
                0.0);
}

TEST(Scenario, TruthComposesToValidTensor) {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    SimScenario sc;
    sc.sigma_beta = 2.0;
    sc.seed = seed;
    SimTruth truth = gen_truth(sc);
    Eigen::MatrixXd X = gen_predictors(5, sc.p, seed + 10);
    for (int i = 0; i < 5; ++i) {
      ProbTensor t = prob_tensor_at(truth.theta_star, X.row(i).transpose());
      EXPECT_TRUE(t.is_valid(1e-10));
    }
  }
}

TEST(SqrtAvgKl, ZeroAtTruthAndLabelInvariant) {
  SimScenario sc;
  sc.p = 6;
  sc.n_test = 30;
  sc.seed = 51;
  SimulatedData sim = simulate_scenario(sc);
  EXPECT_DOUBLE_EQ(
      sqrt_avg_kl_test(sim.truth.theta_star, sim.truth.theta_star, sim.test.X), 0.0);

  MixtureParams swapped = sim.truth.theta_star;
  std::swap(swapped.delta[0], swapped.delta[1]);
  std::swap(swapped.beta[0], swapped.beta[1]);
  EXPECT_NEAR(sqrt_avg_kl_test(swapped, sim.truth.theta_star, sim.test.X), 0.0, 1e-7);
}

TEST(SqrtAvgKl, SinglePointReducesToCellwiseKl) {
  SimScenario sc;
  sc.p = 4;
  sc.dims = {3};
  sc.R_true = 2;
  sc.n_active = 2;
  sc.n_test = 1;
  sc.seed = 53;
  SimulatedData sim = simulate_scenario(sc);
  MixtureParams other = sim.truth.theta_star;
  other.beta[0][0].array() += 0.3;
  other.beta[1][0].array() -= 0.2;
  const Eigen::VectorXd x = sim.test.X.row(0).transpose();
  const double direct = kl_divergence(prob_tensor_at(sim.truth.theta_star, x),
                                      prob_tensor_at(other, x));
  EXPECT_NEAR(sqrt_avg_kl_test(other, sim.truth.theta_star, sim.test.X),
              std::sqrt(direct), 1e-12);
}

TEST(Metrics, NullModelJointErrorRateOnManyBinaryResponses) {
  // uniform truth over 14 binary responses: the MAP tie-break predicts the
  // all-ones cell, so the error rate is 1 - 0.5^14 up to sampling noise
  SimScenario sc;
  sc.sigma_beta = 0.0;
  sc.p = 4;
  sc.n_active = 2;
  sc.dims = std::vector<int>(14, 2);
  sc.n_train = 1500;
  sc.n_val = 0;
  sc.n_test = 0;
  sc.seed = 61;
  SimulatedData sim = simulate_scenario(sc);
  const double jer = joint_error_rate(sim.truth.theta_star, sim.train);
  EXPECT_GE(jer, 0.995);
  EXPECT_LE(jer, 1.0);
}

TEST(Metrics, DevianceOrdering) {
  SimScenario sc;
  sc.p = 6;
  sc.dims = {3, 3};
  sc.n_train = 400;
  sc.sigma_beta = 1.5;
  sc.seed = 67;
  SimulatedData sim = simulate_scenario(sc);
  MixtureParams null_model = sim.truth.theta_star;
  for (auto& comp : null_model.beta)
    for (auto& b : comp) b.setZero();
  EXPECT_LT(deviance(sim.truth.theta_star, sim.train), deviance(null_model, sim.train));
}

TEST(Metrics, SummaryStatistics) {
  SummaryStat s = summarize({3.0, 1.0, 2.0});
  EXPECT_DOUBLE_EQ(s.median, 2.0);
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_NEAR(s.se, 1.0 / std::sqrt(3.0), 1e-12);
  SummaryStat s4 = summarize({4.0, 1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(s4.median, 2.5);
}
