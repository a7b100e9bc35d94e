#include <cmath>

#include <gtest/gtest.h>

#include "nucdiff/errors.hpp"
#include "nucdiff/proxops.hpp"
#include "nucdiff/rpca.hpp"
#include "oracles.hpp"

using namespace nucdiff;

namespace {

CasoratiMatrix as_video(const Eigen::MatrixXd& m) { return CasoratiMatrix(m, 1, static_cast<int>(m.rows())); }

}  // namespace

TEST(RpcaObjective, TrivialCases) {
  const CasoratiMatrix zero = CasoratiMatrix::zeros(2, 2, 3);
  EXPECT_EQ(rpca_objective(zero, zero, zero, {}), 0.0);

  oracle::Rng rng(30);
  const CasoratiMatrix y = as_video(oracle::gaussian_matrix(rng, 4, 3));
  RpcaConfig cfg;
  cfg.lambda = 0.37;
  const CasoratiMatrix l = as_video(Eigen::MatrixXd::Zero(4, 3));
  EXPECT_DOUBLE_EQ(rpca_objective(y, l, y, cfg), 0.37 * y.values().lpNorm<1>());
}

TEST(RpcaObjective, MatchesTermwiseLoop) {
  oracle::Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd y = oracle::gaussian_matrix(rng, 4, 3);
    const Eigen::MatrixXd l = oracle::gaussian_matrix(rng, 4, 3);
    const Eigen::MatrixXd x = oracle::gaussian_matrix(rng, 4, 3);
    RpcaConfig cfg;
    cfg.mu = 0.5 + trial;
    const double lambda = cfg.lambda_for(4, 3);
    const double expected = oracle::lagrangian_loop(y, l, x, lambda, cfg.mu, 1.0);
    EXPECT_NEAR(rpca_objective(as_video(y), as_video(l), as_video(x), cfg), expected, 1e-10 * expected);
  }
}

TEST(RpcaObjective, ShapeMismatch) {
  const CasoratiMatrix a = CasoratiMatrix::zeros(2, 2, 3);
  const CasoratiMatrix b = CasoratiMatrix::zeros(2, 2, 4);
  EXPECT_THROW(rpca_objective(a, a, b, {}), ShapeError);
  EXPECT_THROW(rpca_log_posterior(a, b, a, {}, 1.0), ShapeError);
}

TEST(RpcaLogPosterior, NegatedObjectiveAtUnitGamma) {
  oracle::Rng rng(32);
  const CasoratiMatrix y = as_video(oracle::gaussian_matrix(rng, 5, 4));
  const CasoratiMatrix l = as_video(oracle::gaussian_matrix(rng, 5, 4));
  const CasoratiMatrix x = as_video(oracle::gaussian_matrix(rng, 5, 4));
  EXPECT_DOUBLE_EQ(rpca_log_posterior(y, l, x, {}, 1.0), -rpca_objective(y, l, x, {}));
}

TEST(RpcaLogPosterior, MatchesTermwiseLoop) {
  oracle::Rng rng(33);
  for (double gamma : {0.1, 1.0, 4.0}) {
    const Eigen::MatrixXd y = oracle::gaussian_matrix(rng, 6, 3);
    const Eigen::MatrixXd l = oracle::gaussian_matrix(rng, 6, 3);
    const Eigen::MatrixXd x = oracle::gaussian_matrix(rng, 6, 3);
    RpcaConfig cfg;
    cfg.lambda = 0.2;
    cfg.mu = 3.0;
    const double expected = -oracle::lagrangian_loop(y, l, x, 0.2, 3.0, gamma);
    EXPECT_NEAR(rpca_log_posterior(as_video(y), as_video(l), as_video(x), cfg, gamma), expected,
                1e-10 * std::abs(expected));
  }
}

TEST(RpcaLogPosterior, SmallerResidualRaisesValue) {
  oracle::Rng rng(34);
  const Eigen::MatrixXd l = oracle::gaussian_matrix(rng, 5, 4);
  const Eigen::MatrixXd x = oracle::gaussian_matrix(rng, 5, 4);
  const Eigen::MatrixXd r = oracle::gaussian_matrix(rng, 5, 4);
  double previous = -std::numeric_limits<double>::infinity();
  for (double scale : {2.0, 1.0, 0.5, 0.1, 0.0}) {
    const double v = rpca_log_posterior(as_video(l + x + scale * r), as_video(l), as_video(x), {}, 1.0);
    EXPECT_GT(v, previous);
    previous = v;
  }
}

TEST(RpcaLogPosterior, RejectsNonPositiveGamma) {
  const CasoratiMatrix z = CasoratiMatrix::zeros(2, 2, 2);
  EXPECT_THROW(rpca_log_posterior(z, z, z, {}, 0.0), ArgumentError);
}

TEST(RpcaSolve, ZeroInput) {
  const Decomposition d = rpca_solve(CasoratiMatrix::zeros(4, 4, 5));
  EXPECT_TRUE(d.converged);
  EXPECT_EQ(d.l.values().norm(), 0.0);
  EXPECT_EQ(d.x.values().norm(), 0.0);
  EXPECT_EQ(d.objective_trace.back(), 0.0);
}

TEST(RpcaSolve, RankOneWithoutSparsePart) {
  oracle::Rng rng(35);
  const Eigen::MatrixXd y = 10.0 * oracle::gaussian_matrix(rng, 60, 1) * oracle::gaussian_matrix(rng, 1, 8);
  RpcaConfig cfg;
  cfg.lambda = 1e3;
  cfg.mu = 2000.0;
  cfg.max_iters = 500;
  const Decomposition d = rpca_solve(as_video(y), cfg);
  EXPECT_TRUE(d.converged);
  EXPECT_LE((d.l.values() - y).norm() / y.norm(), 1e-3);
  EXPECT_EQ(d.x.values().norm(), 0.0);
}

TEST(RpcaSolve, PlantedRecovery) {
  oracle::Rng rng(36);
  const auto planted = oracle::planted_rpca(rng, 400, 50, 2, 0.05, 10.0);
  RpcaConfig cfg;
  cfg.max_iters = 2000;
  const Decomposition d = rpca_solve(as_video(planted.l + planted.x), cfg);
  EXPECT_LE((d.l.values() - planted.l).norm() / planted.l.norm(), 1e-2);
}

TEST(RpcaSolve, ObjectiveTraceIsMonotone) {
  oracle::Rng rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    const auto planted = oracle::planted_rpca(rng, 50, 12, 2, 0.1, 5.0);
    const Eigen::MatrixXd noise = 0.1 * oracle::gaussian_matrix(rng, 50, 12);
    RpcaConfig cfg;
    cfg.max_iters = 200;
    const Decomposition d = rpca_solve(as_video(planted.l + planted.x + noise), cfg);
    ASSERT_EQ(d.objective_trace.size(), static_cast<std::size_t>(d.iterations) + 1);
    for (std::size_t k = 1; k < d.objective_trace.size(); ++k) {
      EXPECT_LE(d.objective_trace[k], d.objective_trace[k - 1] + 1e-9) << "iteration " << k;
    }
  }
}

TEST(RpcaSolve, ConvergedIterateIsAFixedPoint) {
  oracle::Rng rng(38);
  const auto planted = oracle::planted_rpca(rng, 40, 10, 1, 0.05, 5.0);
  const Eigen::MatrixXd y = planted.l + planted.x;
  RpcaConfig cfg;
  cfg.max_iters = 5000;
  cfg.rel_tol = 1e-10;
  const Decomposition d = rpca_solve(as_video(y), cfg);
  ASSERT_TRUE(d.converged);
  const double lambda = cfg.lambda_for(40, 10);
  const Eigen::MatrixXd& l = d.l.values();
  const Eigen::MatrixXd& x = d.x.values();
  EXPECT_LE((soft_threshold(y - l, lambda / cfg.mu) - x).norm(), 1e-6 * std::max(1.0, x.norm()));
  EXPECT_LE((svt(y - x, 1.0 / cfg.mu) - l).norm(), 1e-6 * std::max(1.0, l.norm()));
}

TEST(RpcaSolve, IterationCapReportsNonConvergence) {
  oracle::Rng rng(39);
  RpcaConfig cfg;
  cfg.max_iters = 1;
  const Decomposition d = rpca_solve(as_video(oracle::gaussian_matrix(rng, 20, 5)), cfg);
  EXPECT_FALSE(d.converged);
  EXPECT_EQ(d.iterations, 1);
  EXPECT_EQ(d.objective_trace.size(), 2u);
}

TEST(RpcaConfig, Validation) {
  RpcaConfig cfg;
  cfg.lambda = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.mu = -1.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.rel_tol = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = {};
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  EXPECT_DOUBLE_EQ(RpcaConfig{}.lambda_for(400, 50), 0.05);
}
