#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "acn/qp.hpp"
#include "acn/solver.hpp"
#include "oracle.hpp"

namespace acn {
namespace {

TEST(Qp, BoxLp) {
  qp::Problem p(2);
  p.c = {-1.0, 2.0};
  p.lower = {0.0, -1.0};
  p.upper = {3.0, 4.0};
  const auto r = qp::solve(p);
  ASSERT_EQ(r.status, qp::Status::optimal);
  EXPECT_NEAR(r.x[0], 3.0, 1e-6);
  EXPECT_NEAR(r.x[1], -1.0, 1e-6);
}

TEST(Qp, EqualityConstrainedProjection) {
  // min (x-1)^2 + (y-2)^2  s.t. x + y = 1  ->  (0, 1)
  qp::Problem p(2);
  p.p_diag = {2.0, 2.0};
  p.c = {-2.0, -4.0};
  qp::SparseRow row;
  row.add(0, 1.0);
  row.add(1, 1.0);
  p.add_eq(row, 1.0);
  const auto r = qp::solve(p);
  ASSERT_EQ(r.status, qp::Status::optimal);
  EXPECT_NEAR(r.x[0], 0.0, 1e-6);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
}

TEST(Qp, InfeasibleRows) {
  qp::Problem p(1);
  p.lower = {0.0};
  p.upper = {10.0};
  qp::SparseRow a, b;
  a.add(0, 1.0);
  b.add(0, -1.0);
  p.add_ineq(a, 1.0);
  p.add_ineq(b, -2.0);
  EXPECT_EQ(qp::solve(p).status, qp::Status::infeasible);
}

TEST(Qp, FixedVariablesAreSubstituted) {
  qp::Problem p(2);
  p.c = {-1.0, -1.0};
  p.lower = {2.0, 0.0};
  p.upper = {2.0, 5.0};
  qp::SparseRow row;
  row.add(0, 1.0);
  row.add(1, 1.0);
  p.add_ineq(row, 3.0);
  const auto r = qp::solve(p);
  ASSERT_EQ(r.status, qp::Status::optimal);
  EXPECT_EQ(r.x[0], 2.0);
  EXPECT_NEAR(r.x[1], 1.0, 1e-6);
}

TEST(Solve, MaximizeOnBox) {
  ConvexProgram p(1);
  p.linear_cost = {1.0};
  p.lower = {0.0};
  p.upper = {5.0};
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.x[0], 5.0, 1e-4);
}

TEST(Solve, ProjectionOfUnconstrainedOptimum) {
  // -(x-3)^2 = -x^2 + 6x - 9
  ConvexProgram p(1);
  p.linear_cost = {6.0};
  p.quad_cost = {1.0};
  p.constant = -9.0;
  p.lower = {-10.0};
  p.upper = {2.0};
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.x[0], 2.0, 1e-4);
  EXPECT_NEAR(s.objective, -1.0, 1e-4);
}

TEST(Solve, DiskSymmetry) {
  ConvexProgram p(2);
  p.linear_cost = {1.0, 1.0};
  p.lower = {0.0, 0.0};
  p.upper = {10.0, 10.0};
  SocConstraint c;
  c.re.add(0, 1.0);
  c.im.add(1, 1.0);
  c.limit = std::sqrt(2.0);
  p.soc_constraints.push_back(c);
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.x[0], 1.0, 1e-3);
  EXPECT_NEAR(s.x[1], 1.0, 1e-3);
  EXPECT_LE(s.max_violation, 1e-4);
}

TEST(Solve, EmptyBoxIsInfeasible) {
  ConvexProgram p(1);
  p.lower = {1.0};
  p.upper = {0.0};
  EXPECT_THROW(p.validate(), std::invalid_argument);
  ConvexProgram q(1);
  q.lower = {0.0};
  q.upper = {1.0};
  LinearInequality row;
  row.expr.add(0, -1.0);
  row.rhs = -2.0;
  q.linear_ineqs.push_back(row);
  EXPECT_EQ(solve(q).status, SolveStatus::infeasible);
}

TEST(Solve, EpigraphTermTakesTheMax) {
  // maximize x + y - 2 max(x, y, 0.5) on [0,1]^2: every x = y >= 0.5 scores 0,
  // anything else scores less.
  ConvexProgram p(2);
  p.linear_cost = {1.0, 1.0};
  p.lower = {0.0, 0.0};
  p.upper = {1.0, 1.0};
  EpigraphTerm t;
  t.weight = 2.0;
  LinearExpr ex, ey, floor;
  ex.add(0, 1.0);
  ey.add(1, 1.0);
  floor.constant = 0.5;
  t.exprs = {ex, ey, floor};
  p.epigraph_terms.push_back(t);
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.objective, 0.0, 1e-4);
  EXPECT_NEAR(s.x[0], s.x[1], 1e-3);
  EXPECT_GE(s.x[0], 0.5 - 1e-3);
}

TEST(Solve, TwoNormPenalty) {
  // maximize x + y - 2 ||(x - 1, y - 1)||_2 on [0,3]^2: the penalty slope
  // exceeds the gain, so (1, 1) is optimal with value 2.
  ConvexProgram p(2);
  p.linear_cost = {1.0, 1.0};
  p.lower = {0.0, 0.0};
  p.upper = {3.0, 3.0};
  NormTerm t;
  t.weight = 2.0;
  t.order = 2;
  LinearExpr a, b;
  a.add(0, 1.0);
  a.constant = -1.0;
  b.add(1, 1.0);
  b.constant = -1.0;
  t.exprs = {a, b};
  p.norm_terms.push_back(t);
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.objective, 2.0, 1e-3);
}

TEST(Solve, OneNormPenalty) {
  // maximize 0.5 x - |x - 2| on [0, 5] -> x = 2.
  ConvexProgram p(1);
  p.linear_cost = {0.5};
  p.lower = {0.0};
  p.upper = {5.0};
  NormTerm t;
  t.weight = 1.0;
  t.order = 1;
  LinearExpr a;
  a.add(0, 1.0);
  a.constant = -2.0;
  t.exprs = {a};
  p.norm_terms.push_back(t);
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.x[0], 2.0, 1e-3);
}

ConvexProgram disk_program(double limit) {
  ConvexProgram p(2);
  p.lower = {-10.0, -10.0};
  p.upper = {10.0, 10.0};
  SocConstraint c;
  c.re.add(0, 1.0);
  c.im.add(1, 1.0);
  c.limit = limit;
  p.soc_constraints.push_back(c);
  return p;
}

TEST(Cut, AxisAligned) {
  ConvexProgram p(1);
  p.lower = {-5.0};
  p.upper = {5.0};
  SocConstraint c;
  c.re.add(0, 1.0);
  c.limit = 1.0;
  p.soc_constraints.push_back(c);
  std::vector<double> x{2.0};
  const auto cut = add_soc_cut(p, 0, x);
  ASSERT_EQ(cut.expr.index.size(), 1u);
  EXPECT_NEAR(cut.expr.coef[0], 1.0, 1e-12);
  EXPECT_NEAR(cut.rhs - cut.expr.constant, 1.0, 1e-12);
}

TEST(Cut, GradientAtViolatingPoint) {
  const auto p = disk_program(2.5);
  std::vector<double> x{3.0, 4.0};
  const auto cut = add_soc_cut(p, 0, x);
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t k = 0; k < cut.expr.index.size(); ++k) (cut.expr.index[k] == 0 ? c0 : c1) += cut.expr.coef[k];
  EXPECT_NEAR(c0, 0.6, 1e-12);
  EXPECT_NEAR(c1, 0.8, 1e-12);
  EXPECT_NEAR(cut.rhs, 2.5, 1e-12);
  EXPECT_GT(cut.expr.eval(x), cut.rhs);
}

TEST(Cut, FeasiblePointRejected) {
  const auto p = disk_program(2.5);
  std::vector<double> x{1.0, 1.0};
  EXPECT_THROW(add_soc_cut(p, 0, x), std::invalid_argument);
}

// Property: a cut never excludes a point of the disk.
TEST(Cut, ValidityProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto p = disk_program(1.0);
  std::vector<LinearInequality> cuts;
  for (int i = 0; i < 50; ++i) {
    const double a = std::numbers::pi * u(rng), m = 1.5 + u(rng) * 0.4;
    std::vector<double> x{m * std::cos(a), m * std::sin(a)};
    cuts.push_back(add_soc_cut(p, 0, x));
  }
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> x{u(rng), u(rng)};
    if (std::hypot(x[0], x[1]) > 1.0) continue;
    for (const auto& c : cuts) EXPECT_LE(c.expr.eval(x), c.rhs + 1e-12);
  }
}

TEST(Solve, CutLoopReachesTolerance) {
  ConvexProgram p = disk_program(3.0);
  p.linear_cost = {0.3, 1.0};
  const auto s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_LE(std::hypot(s.x[0], s.x[1]), 3.0 + 1e-4);
  EXPECT_NEAR(s.objective, 3.0 * std::hypot(0.3, 1.0), 1e-3);
  EXPECT_FALSE(s.cut_angles[0].empty());
}

TEST(Solve, SeedAnglesPreactivateConstraint) {
  ConvexProgram p = disk_program(3.0);
  p.linear_cost = {0.3, 1.0};
  const auto first = solve(p);
  p.soc_constraints[0].seed_angles = first.cut_angles[0];
  const auto second = solve(p);
  ASSERT_EQ(second.status, SolveStatus::optimal);
  EXPECT_LE(second.outer_iterations, first.outer_iterations);
  EXPECT_NEAR(second.objective, first.objective, 1e-4);
}

TEST(Solve, StrictlyConcaveIsReproducible) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    ConvexProgram p = testing::random_small_program(rng);
    for (double& d : p.quad_cost) d = std::max(d, 0.05);
    const auto a = solve(p), b = solve(p);
    ASSERT_EQ(a.status, SolveStatus::optimal);
    for (std::size_t j = 0; j < a.x.size(); ++j) EXPECT_NEAR(a.x[j], b.x[j], 1e-3);
  }
}

TEST(Solve, GridSearchOracle) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 25; ++i) {
    const ConvexProgram p = testing::random_small_program(rng);
    const auto s = solve(p);
    ASSERT_EQ(s.status, SolveStatus::optimal) << "instance " << i;
    EXPECT_LE(s.max_violation, 1e-4);
    EXPECT_NEAR(s.objective, testing::grid_search_max(p, 0.01), 1e-2) << "instance " << i;
  }
}

TEST(Program, JsonDumpHasAllParts) {
  ConvexProgram p = disk_program(1.0);
  const auto j = program_to_json(p);
  EXPECT_EQ(j["n"], 2);
  EXPECT_EQ(j["soc_constraints"].size(), 1u);
}

}  // namespace
}  // namespace acn
