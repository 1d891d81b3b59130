#pragma once

#include <limits>
#include <vector>

namespace acn::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct SparseRow {
  std::vector<int> index;
  std::vector<double> value;

  void add(int i, double v) {
    index.push_back(i);
    value.push_back(v);
  }
  double dot(const std::vector<double>& x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k) s += value[k] * x[static_cast<std::size_t>(index[k])];
    return s;
  }
};

/// minimize 1/2 x'Px + c'x  s.t.  lower <= x <= upper,  A x = b,  G x <= h,
/// with P diagonal and non-negative.
struct Problem {
  int n = 0;
  std::vector<double> p_diag;
  std::vector<double> c;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<SparseRow> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<SparseRow> ineq_rows;
  std::vector<double> ineq_rhs;

  explicit Problem(int vars = 0)
      : n(vars), p_diag(vars, 0.0), c(vars, 0.0), lower(vars, -kInf), upper(vars, kInf) {}

  int add_variable(double lo, double hi, double cost = 0.0, double quad = 0.0) {
    lower.push_back(lo);
    upper.push_back(hi);
    c.push_back(cost);
    p_diag.push_back(quad);
    return n++;
  }
  void add_eq(SparseRow row, double rhs) {
    eq_rows.push_back(std::move(row));
    eq_rhs.push_back(rhs);
  }
  void add_ineq(SparseRow row, double rhs) {
    ineq_rows.push_back(std::move(row));
    ineq_rhs.push_back(rhs);
  }
};

enum class Status { optimal, infeasible, max_iter };

struct Options {
  /// Relative tolerance on primal/dual residuals and complementarity.
  double tol = 1e-9;
  int max_iter = 200;
};

struct Result {
  Status status = Status::max_iter;
  std::vector<double> x;
  /// Multipliers of the inequality rows (>= 0).
  std::vector<double> ineq_dual;
  double objective = 0.0;
  int iterations = 0;
};

/// Primal-dual interior point method (Mehrotra predictor-corrector) on the
/// regularized quasi-definite KKT system. Fixed variables are eliminated first.
Result solve(const Problem& problem, const Options& options = {});

}  // namespace acn::qp
