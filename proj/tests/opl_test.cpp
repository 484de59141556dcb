#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace hila;
using namespace hila::opl;

namespace {

TransportProblem uniform_problem(Matrix cost, double eps) {
  const std::size_t m = cost.rows(), n = cost.cols();
  return {std::move(cost), uniform_marginal(m), uniform_marginal(n), {eps, 1e-9, 5000}};
}

Matrix random_cost(Rng& rng, std::size_t m, std::size_t n) {
  Matrix c(m, n);
  for (double& x : c.data()) x = rng.uniform(0.0, 2.0);
  return c;
}

}  // namespace

TEST(CostMatrix, CosineDistance) {
  const Matrix c = cost_matrix(Matrix{{1, 0}, {0, 2}, {-3, 0}}, Matrix{{2, 0}});
  EXPECT_DOUBLE_EQ(c(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(c(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(c(2, 0), 2.0);
}

TEST(CostMatrix, ZeroNormTokenIsDegenerate) {
  try {
    (void)cost_matrix(Matrix{{1, 0}, {0, 0}}, Matrix{{1, 1}});
    FAIL();
  } catch (const DegenerateError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
}

TEST(CostMatrix, DimensionMismatch) {
  EXPECT_THROW((void)cost_matrix(Matrix(2, 3, 1.0), Matrix(2, 4, 1.0)), DimensionError);
}

TEST(Sinkhorn, AntiDiagonalCostGivesDiagonalPlan) {
  const auto plan = sinkhorn(uniform_problem(Matrix{{0, 1}, {1, 0}}, 0.01));
  EXPECT_TRUE(plan.converged);
  EXPECT_NEAR(plan.plan(0, 0), 0.5, 1e-9);
  EXPECT_NEAR(plan.plan(1, 1), 0.5, 1e-9);
  EXPECT_NEAR(plan.cost_value, 0.0, 1e-9);
  EXPECT_NEAR(plan.cost_value, oracle::exact_transport_cost(Matrix{{0, 1}, {1, 0}}, {.5, .5}, {.5, .5}), 1e-9);
}

TEST(Sinkhorn, MarginalsAndEntropicGapOnRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 2 + rng.below(3), n = 2 + rng.below(3);
    const Matrix c = random_cost(rng, m, n);
    const double eps = 0.1;
    const auto plan = sinkhorn(uniform_problem(c, eps));
    ASSERT_TRUE(plan.converged);
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < n; ++j) row += plan.plan(i, j);
      EXPECT_NEAR(row, 1.0 / m, 1e-8);
    }
    for (std::size_t j = 0; j < n; ++j) {
      double col = 0;
      for (std::size_t i = 0; i < m; ++i) col += plan.plan(i, j);
      EXPECT_NEAR(col, 1.0 / n, 1e-8);
    }
    const double exact = oracle::exact_transport_cost(c, uniform_marginal(m), uniform_marginal(n));
    EXPECT_GE(plan.cost_value, exact - 1e-8);
    EXPECT_LE(plan.cost_value, exact + eps * std::log(static_cast<double>(m * n)) + 1e-8);
  }
}

TEST(Sinkhorn, TrivialInstances) {
  const auto one = sinkhorn(uniform_problem(Matrix{{0.5}}, 0.1));
  EXPECT_EQ(one.plan, (Matrix{{1.0}}));
  EXPECT_DOUBLE_EQ(one.cost_value, 0.5);
  const auto flat = sinkhorn(uniform_problem(Matrix(2, 2, 0.0), 0.3));
  for (double x : flat.plan.data()) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(Sinkhorn, NewtonPolishReachesTheSweepFixedPoint) {
  // Near-permutation optimum: plain sweeps contract slowly here.
  const Matrix c{{0.1, 1.9, 1.0}, {1.2, 0.2, 1.8}, {1.7, 1.1, 0.15}};
  TransportProblem slow = uniform_problem(c, 0.1);
  slow.options.newton_after = -1;
  slow.options.max_iters = 1000000;
  slow.options.tol = 1e-12;
  const auto reference = sinkhorn(slow);
  ASSERT_TRUE(reference.converged);
  TransportProblem fast = uniform_problem(c, 0.1);
  fast.options.tol = 1e-12;
  const auto polished = sinkhorn(fast);
  ASSERT_TRUE(polished.converged);
  EXPECT_LT(polished.iterations, reference.iterations);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(polished.plan.data()[i], reference.plan.data()[i], 1e-10);
}

TEST(Sinkhorn, NonConvergenceIsFlaggedNotThrown) {
  TransportProblem p = uniform_problem(Matrix{{0, 2, 1}, {1.5, 0, 1}, {1, 0.3, 0}}, 0.5);
  p.options.max_iters = 2;
  p.options.tol = 1e-15;
  const auto plan = sinkhorn(p);
  EXPECT_FALSE(plan.converged);
  EXPECT_EQ(plan.iterations, 2);
}

TEST(Sinkhorn, RejectsBadMarginals) {
  TransportProblem p = uniform_problem(Matrix(2, 2, 1.0), 0.1);
  p.u = {0.7, 0.7};
  EXPECT_THROW((void)sinkhorn(p), ConfigError);
  p.u = {1.0};
  EXPECT_THROW((void)sinkhorn(p), DimensionError);
}

TEST(MatchingProbability, TwoByOneHandValue) {
  const Matrix p = matching_probability(Matrix{{1.0}, {0.0}});
  const double e = std::exp(1.0);
  EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(p(1, 0), e / (1.0 + e), 1e-15);
  EXPECT_NEAR(p(0, 0), 0.2689, 1e-4);
}

TEST(AlignmentScore, SumsToPromptCount) {
  Rng rng(5);
  Matrix tokens(9, 6), prompts(3, 6);
  for (double& x : tokens.data()) x = rng.normal();
  for (double& x : prompts.data()) x = rng.normal();
  const auto res = match(tokens, prompts, 0.6, {});
  EXPECT_NEAR(std::accumulate(res.score.begin(), res.score.end(), 0.0), 3.0, 1e-12);
  EXPECT_EQ(res.selected.size(), 6u);
  EXPECT_TRUE(std::is_sorted(res.selected.begin(), res.selected.end()));
}

TEST(TopIndices, SizeAndTieBreaking) {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.5, 0.1};
  EXPECT_EQ(top_indices(s, 0.6), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(top_indices(s, 0.01), (std::vector<std::size_t>{1}));
  EXPECT_EQ(top_indices(s, 1.0).size(), 5u);
  EXPECT_EQ(selection_size(10, 0.6), 6u);
  EXPECT_EQ(selection_size(8, 0.6), 5u);
  EXPECT_THROW((void)selection_size(3, 0.0), ConfigError);
  EXPECT_THROW((void)selection_size(3, 1.5), ConfigError);
}

TEST(SelectTop, ReturnsRowsInOriginalOrder) {
  const Matrix tokens{{1, 1}, {2, 2}, {3, 3}, {4, 4}};
  const auto sel = select_top(tokens, std::vector<double>{0.1, 0.8, 0.2, 0.9}, 0.5);
  EXPECT_EQ(sel.indices, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(sel.tokens, (Matrix{{2, 2}, {4, 4}}));
}

TEST(Selection, ConcentratedRowsOutscoreUniformRows) {
  // Tokens 0 and 1 align with one prompt each; token 2 is orthogonal to both,
  // so its plan row is flat and its score is lowest.
  const Matrix tokens{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const Matrix prompts{{1, 0, 0}, {0, 1, 0}};
  const auto res = match(tokens, prompts, 0.6, {});
  EXPECT_EQ(res.selected, (std::vector<std::size_t>{0, 1}));
  EXPECT_LT(res.score[2], res.score[0]);
}
