#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace acn {

/// Sparse affine expression sum_k coef[k] * x[index[k]] + constant.
struct LinearExpr {
  std::vector<int> index;
  std::vector<double> coef;
  double constant = 0.0;

  void add(int i, double c) {
    index.push_back(i);
    coef.push_back(c);
  }
  double eval(std::span<const double> x) const;
};

/// expr(x) <= rhs
struct LinearInequality {
  LinearExpr expr;
  double rhs = 0.0;
};

/// expr(x) == rhs
struct LinearEquality {
  LinearExpr expr;
  double rhs = 0.0;
};

/// Subtracts weight * max_k exprs[k](x) from the objective.
struct EpigraphTerm {
  double weight = 0.0;
  std::vector<LinearExpr> exprs;
};

/// Subtracts weight * || (exprs[k](x))_k ||_order from the objective.
/// Orders 1 and 2 are supported.
struct NormTerm {
  double weight = 0.0;
  int order = 1;
  std::vector<LinearExpr> exprs;
};

/// || (re(x), im(x)) ||_2 <= limit
struct SocConstraint {
  LinearExpr re;
  LinearExpr im;
  double limit = 0.0;
  /// Directions (radians) of supporting cuts to place up front.
  std::vector<double> seed_angles;
};

/// maximize  linear_cost'x - sum_j quad_cost[j] x_j^2 - epigraph/norm terms + constant
/// subject to the box, linear rows and SOC constraints.
struct ConvexProgram {
  int n = 0;
  std::vector<double> linear_cost;
  std::vector<double> quad_cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<EpigraphTerm> epigraph_terms;
  std::vector<NormTerm> norm_terms;
  std::vector<LinearInequality> linear_ineqs;
  std::vector<LinearEquality> linear_eqs;
  std::vector<SocConstraint> soc_constraints;
  double constant = 0.0;

  explicit ConvexProgram(int vars = 0);
  int add_variable(double lo, double hi, double cost = 0.0, double quad = 0.0);

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
  double objective(std::span<const double> x) const;
  /// Largest violation over box, linear rows and SOC constraints (exact norms).
  double max_violation(std::span<const double> x) const;
};

enum class SolveStatus { optimal, infeasible, max_iter };
std::string to_string(SolveStatus s);

struct Solution {
  std::vector<double> x;
  SolveStatus status = SolveStatus::max_iter;
  double objective = 0.0;
  double max_violation = 0.0;
  int outer_iterations = 0;
  int cuts = 0;
  /// Cut directions in use per SOC constraint; reusable as seed_angles.
  std::vector<std::vector<double>> cut_angles;
};

struct SolverOptions {
  double tol = 1e-4;
  int max_outer = 50;
  /// Iteration cap of each inner interior-point solve.
  int max_inner = 200;
};

Solution solve(const ConvexProgram& program, const SolverOptions& options = {});

/// Supporting half-space of the SOC disk at a violating point, in x-space:
/// g'(M x + m) <= limit with g the unit phasor direction at the point.
/// Throws std::invalid_argument when the point satisfies the constraint.
LinearInequality add_soc_cut(const ConvexProgram& program, std::size_t soc_index,
                             std::span<const double> violating_point);

nlohmann::json program_to_json(const ConvexProgram& program);
void dump_program(const ConvexProgram& program, const std::string& path);

}  // namespace acn
