#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "acn/solver.hpp"

namespace acn::testing {

/// Box widths per variable count keep the step-0.01 grid near 10^6 points.
inline double grid_box_width(int n) {
  static constexpr double widths[] = {0.0, 2.0, 2.0, 1.0, 0.3};
  return widths[n];
}

/// Random program with 1..4 variables, a box, up to two linear rows and up to
/// one SOC constraint. The rows are built around an interior point with at
/// least 0.02 of slack, so the grid always holds feasible points.
inline ConvexProgram random_small_program(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 4), rows(0, 2), socs(0, 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0), half(0.0, 0.5), slack(0.02, 0.3);
  const int n = count(rng);
  ConvexProgram p(n);
  const double width = grid_box_width(n);
  std::vector<double> x0(static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < x0.size(); ++j) {
    p.lower[j] = std::round(unit(rng) * 50.0) / 100.0;  // on the grid
    p.upper[j] = p.lower[j] + width;
    p.linear_cost[j] = 0.5 * unit(rng);
    p.quad_cost[j] = rng() % 3 == 0 ? 0.0 : 0.25 * half(rng);
    x0[j] = p.lower[j] + width * (0.25 + 0.5 * (unit(rng) + 1.0) / 2.0);
  }
  auto random_expr = [&] {
    LinearExpr e;
    for (int j = 0; j < n; ++j) e.add(j, unit(rng));
    return e;
  };
  for (int r = rows(rng); r > 0; --r) {
    LinearInequality row{random_expr(), 0.0};
    row.rhs = row.expr.eval(x0) + slack(rng);
    p.linear_ineqs.push_back(row);
  }
  if (socs(rng) == 1) {
    SocConstraint c{random_expr(), random_expr(), 0.0, {}};
    c.re.constant = 0.3 * unit(rng);
    c.im.constant = 0.3 * unit(rng);
    c.limit = std::hypot(c.re.eval(x0), c.im.eval(x0)) + slack(rng);
    p.soc_constraints.push_back(c);
  }
  return p;
}

/// Best objective over the feasible points of the step-sized grid on the box.
/// Evaluates the quadratic objective and constraints directly, independent of
/// the solver's own helpers.
inline double grid_search_max(const ConvexProgram& p, double step) {
  const int n = p.n;
  std::vector<int> steps(static_cast<std::size_t>(n));
  for (std::size_t j = 0; j < steps.size(); ++j)
    steps[j] = static_cast<int>(std::floor((p.upper[j] - p.lower[j]) / step + 1e-9));
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  std::vector<double> x(static_cast<std::size_t>(n));
  double best = -std::numeric_limits<double>::infinity();
  for (;;) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = p.lower[j] + idx[j] * step;
    bool ok = true;
    for (const auto& row : p.linear_ineqs) {
      double s = row.expr.constant;
      for (std::size_t k = 0; k < row.expr.index.size(); ++k) s += row.expr.coef[k] * x[row.expr.index[k]];
      if (s > row.rhs) {
        ok = false;
        break;
      }
    }
    for (std::size_t c = 0; ok && c < p.soc_constraints.size(); ++c) {
      const auto& soc = p.soc_constraints[c];
      double re = soc.re.constant, im = soc.im.constant;
      for (std::size_t k = 0; k < soc.re.index.size(); ++k) re += soc.re.coef[k] * x[soc.re.index[k]];
      for (std::size_t k = 0; k < soc.im.index.size(); ++k) im += soc.im.coef[k] * x[soc.im.index[k]];
      ok = re * re + im * im <= soc.limit * soc.limit;
    }
    if (ok) {
      double f = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) f += p.linear_cost[j] * x[j] - p.quad_cost[j] * x[j] * x[j];
      best = std::max(best, f);
    }
    std::size_t j = 0;
    while (j < idx.size() && ++idx[j] > steps[j]) idx[j++] = 0;
    if (j == idx.size()) break;
  }
  return best;
}

}  // namespace acn::testing
