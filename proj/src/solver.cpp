#include "acn/solver.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <fmt/core.h>

#include "acn/qp.hpp"

namespace acn {

double LinearExpr::eval(std::span<const double> x) const {
  double s = constant;
  for (std::size_t k = 0; k < index.size(); ++k) s += coef[k] * x[static_cast<std::size_t>(index[k])];
  return s;
}

ConvexProgram::ConvexProgram(int vars)
    : n(vars), linear_cost(vars, 0.0), quad_cost(vars, 0.0), lower(vars, -qp::kInf), upper(vars, qp::kInf) {}

int ConvexProgram::add_variable(double lo, double hi, double cost, double quad) {
  lower.push_back(lo);
  upper.push_back(hi);
  linear_cost.push_back(cost);
  quad_cost.push_back(quad);
  return n++;
}

namespace {

// Relative distance below which a returned variable is placed on its bound.
constexpr double kBoundSnap = 1e-7;

void check_expr(const LinearExpr& e, int n, const char* what) {
  if (e.index.size() != e.coef.size()) throw std::invalid_argument(fmt::format("{}: index/coef size mismatch", what));
  for (int i : e.index)
    if (i < 0 || i >= n) throw std::invalid_argument(fmt::format("{}: variable index {} out of range", what, i));
}

double norm_of(const NormTerm& term, std::span<const double> x) {
  double acc = 0.0;
  for (const auto& e : term.exprs) {
    double v = e.eval(x);
    acc += term.order == 1 ? std::abs(v) : v * v;
  }
  return term.order == 1 ? acc : std::sqrt(acc);
}

double soc_magnitude(const SocConstraint& c, std::span<const double> x) {
  return std::hypot(c.re.eval(x), c.im.eval(x));
}

}  // namespace

void ConvexProgram::validate() const {
  const auto un = static_cast<std::size_t>(n);
  if (linear_cost.size() != un || quad_cost.size() != un || lower.size() != un || upper.size() != un)
    throw std::invalid_argument("program: vector sizes do not match n");
  for (std::size_t j = 0; j < un; ++j) {
    if (quad_cost[j] < 0.0) throw std::invalid_argument(fmt::format("program: quad_cost[{}] < 0", j));
    if (lower[j] > upper[j]) throw std::invalid_argument(fmt::format("program: empty box at {}", j));
  }
  for (const auto& t : epigraph_terms) {
    if (t.weight < 0.0) throw std::invalid_argument("program: negative epigraph weight");
    if (t.exprs.empty()) throw std::invalid_argument("program: epigraph term without expressions");
    for (const auto& e : t.exprs) check_expr(e, n, "epigraph");
  }
  for (const auto& t : norm_terms) {
    if (t.weight < 0.0) throw std::invalid_argument("program: negative norm weight");
    if (t.order != 1 && t.order != 2) throw std::invalid_argument("program: norm order must be 1 or 2");
    for (const auto& e : t.exprs) check_expr(e, n, "norm");
  }
  for (const auto& r : linear_ineqs) check_expr(r.expr, n, "inequality");
  for (const auto& r : linear_eqs) check_expr(r.expr, n, "equality");
  for (const auto& c : soc_constraints) {
    if (c.limit < 0.0) throw std::invalid_argument("program: negative SOC limit");
    check_expr(c.re, n, "soc");
    check_expr(c.im, n, "soc");
  }
}

double ConvexProgram::objective(std::span<const double> x) const {
  double f = constant;
  for (int j = 0; j < n; ++j) {
    auto uj = static_cast<std::size_t>(j);
    f += linear_cost[uj] * x[uj] - quad_cost[uj] * x[uj] * x[uj];
  }
  for (const auto& t : epigraph_terms) {
    double m = -qp::kInf;
    for (const auto& e : t.exprs) m = std::max(m, e.eval(x));
    f -= t.weight * m;
  }
  for (const auto& t : norm_terms) f -= t.weight * norm_of(t, x);
  return f;
}

double ConvexProgram::max_violation(std::span<const double> x) const {
  double v = 0.0;
  for (int j = 0; j < n; ++j) {
    auto uj = static_cast<std::size_t>(j);
    v = std::max({v, lower[uj] - x[uj], x[uj] - upper[uj]});
  }
  for (const auto& r : linear_ineqs) v = std::max(v, r.expr.eval(x) - r.rhs);
  for (const auto& r : linear_eqs) v = std::max(v, std::abs(r.expr.eval(x) - r.rhs));
  for (const auto& c : soc_constraints) v = std::max(v, soc_magnitude(c, x) - c.limit);
  return v;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

LinearInequality add_soc_cut(const ConvexProgram& program, std::size_t soc_index,
                             std::span<const double> violating_point) {
  const SocConstraint& c = program.soc_constraints.at(soc_index);
  double ur = c.re.eval(violating_point);
  double ui = c.im.eval(violating_point);
  double mag = std::hypot(ur, ui);
  if (mag <= c.limit) throw std::invalid_argument("add_soc_cut: point satisfies the constraint");
  double gr = ur / mag, gi = ui / mag;
  LinearInequality cut;
  for (std::size_t k = 0; k < c.re.index.size(); ++k) cut.expr.add(c.re.index[k], gr * c.re.coef[k]);
  for (std::size_t k = 0; k < c.im.index.size(); ++k) cut.expr.add(c.im.index[k], gi * c.im.coef[k]);
  cut.expr.constant = gr * c.re.constant + gi * c.im.constant;
  cut.rhs = c.limit;
  return cut;
}

namespace {

qp::SparseRow to_row(const LinearExpr& e) {
  qp::SparseRow row;
  for (std::size_t k = 0; k < e.index.size(); ++k) row.add(e.index[k], e.coef[k]);
  return row;
}

// A constraint whose terms all point the same way on non-negative variables
// and carries no offset has magnitude equal to a non-negative linear form.
bool aligned_linear(const SocConstraint& c, const ConvexProgram& p, qp::SparseRow& row) {
  if (c.re.constant != 0.0 || c.im.constant != 0.0) return false;
  std::vector<std::pair<int, std::pair<double, double>>> terms;
  for (std::size_t k = 0; k < c.re.index.size(); ++k) terms.push_back({c.re.index[k], {c.re.coef[k], 0.0}});
  for (std::size_t k = 0; k < c.im.index.size(); ++k) terms.push_back({c.im.index[k], {0.0, c.im.coef[k]}});
  std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<int, std::complex<double>>> merged;
  for (const auto& [i, v] : terms) {
    std::complex<double> z(v.first, v.second);
    if (!merged.empty() && merged.back().first == i)
      merged.back().second += z;
    else
      merged.push_back({i, z});
  }
  std::complex<double> dir(0.0, 0.0);
  for (const auto& [i, z] : merged) {
    if (std::abs(z) == 0.0) continue;
    if (p.lower[static_cast<std::size_t>(i)] < 0.0) return false;
    std::complex<double> u = z / std::abs(z);
    if (std::abs(dir) == 0.0)
      dir = u;
    else if (std::abs(u - dir) > 1e-12)
      return false;
  }
  for (const auto& [i, z] : merged)
    if (std::abs(z) != 0.0) row.add(i, std::abs(z));
  return true;
}

struct SocState {
  enum class Kind { inactive, linear, lifted } kind = Kind::inactive;
  int u_re = -1, u_im = -1;
  std::vector<double> angles;
};

struct NormState {
  int w = -1;               // epigraph variable of the norm (order 2)
  std::vector<int> lifted;  // one variable per expression (order 2)
};

void add_angle_cut(qp::Problem& qp, const SocState& s, double angle, double limit) {
  qp::SparseRow row;
  row.add(s.u_re, std::cos(angle));
  row.add(s.u_im, std::sin(angle));
  qp.add_ineq(std::move(row), limit);
}

void lift(qp::Problem& qp, const SocConstraint& c, SocState& s) {
  s.kind = SocState::Kind::lifted;
  s.u_re = qp.add_variable(-c.limit, c.limit);
  s.u_im = qp.add_variable(-c.limit, c.limit);
  qp::SparseRow re = to_row(c.re);
  re.add(s.u_re, -1.0);
  qp.add_eq(std::move(re), -c.re.constant);
  qp::SparseRow im = to_row(c.im);
  im.add(s.u_im, -1.0);
  qp.add_eq(std::move(im), -c.im.constant);
}

bool has_angle(const std::vector<double>& angles, double a) {
  for (double b : angles)
    if (std::abs(std::remainder(a - b, 2.0 * std::numbers::pi)) < 1e-6) return true;
  return false;
}

}  // namespace

Solution solve(const ConvexProgram& program, const SolverOptions& options) {
  program.validate();
  Solution sol;
  const int n = program.n;
  qp::Problem qp(n);
  for (int j = 0; j < n; ++j) {
    auto uj = static_cast<std::size_t>(j);
    qp.c[uj] = -program.linear_cost[uj];
    qp.p_diag[uj] = 2.0 * program.quad_cost[uj];
    qp.lower[uj] = program.lower[uj];
    qp.upper[uj] = program.upper[uj];
  }
  for (const auto& r : program.linear_ineqs) qp.add_ineq(to_row(r.expr), r.rhs - r.expr.constant);
  for (const auto& r : program.linear_eqs) qp.add_eq(to_row(r.expr), r.rhs - r.expr.constant);

  for (const auto& t : program.epigraph_terms) {
    double floor = -qp::kInf;
    std::vector<const LinearExpr*> varying;
    for (const auto& e : t.exprs) {
      if (e.index.empty())
        floor = std::max(floor, e.constant);
      else
        varying.push_back(&e);
    }
    int z = qp.add_variable(floor, qp::kInf, t.weight);
    for (const LinearExpr* e : varying) {
      qp::SparseRow row = to_row(*e);
      row.add(z, -1.0);
      qp.add_ineq(std::move(row), -e->constant);
    }
  }

  std::vector<NormState> norms(program.norm_terms.size());
  for (std::size_t k = 0; k < program.norm_terms.size(); ++k) {
    const NormTerm& t = program.norm_terms[k];
    if (t.order == 1) {
      for (const auto& e : t.exprs) {
        int a = qp.add_variable(0.0, qp::kInf, t.weight);
        qp::SparseRow pos = to_row(e);
        pos.add(a, -1.0);
        qp.add_ineq(std::move(pos), -e.constant);
        qp::SparseRow neg = to_row(e);
        for (double& v : neg.value) v = -v;
        neg.add(a, -1.0);
        qp.add_ineq(std::move(neg), e.constant);
      }
      continue;
    }
    NormState& s = norms[k];
    s.w = qp.add_variable(0.0, qp::kInf, t.weight);
    for (const auto& e : t.exprs) {
      int v = qp.add_variable(-qp::kInf, qp::kInf);
      qp::SparseRow row = to_row(e);
      row.add(v, -1.0);
      qp.add_eq(std::move(row), -e.constant);
      s.lifted.push_back(v);
      // |v| <= w seeds the outer approximation of the 2-norm.
      for (double sign : {1.0, -1.0}) {
        qp::SparseRow b;
        b.add(v, sign);
        b.add(s.w, -1.0);
        qp.add_ineq(std::move(b), 0.0);
      }
    }
  }

  std::vector<SocState> socs(program.soc_constraints.size());
  for (std::size_t k = 0; k < socs.size(); ++k) {
    const SocConstraint& c = program.soc_constraints[k];
    qp::SparseRow row;
    if (aligned_linear(c, program, row)) {
      socs[k].kind = SocState::Kind::linear;
      qp.add_ineq(std::move(row), c.limit);
      continue;
    }
    if (!c.seed_angles.empty()) {
      lift(qp, c, socs[k]);
      for (double a : c.seed_angles) {
        if (has_angle(socs[k].angles, a)) continue;
        socs[k].angles.push_back(a);
        add_angle_cut(qp, socs[k], a, c.limit);
      }
    }
  }

  qp::Options inner;
  inner.max_iter = options.max_inner;
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  sol.status = SolveStatus::max_iter;
  for (int outer = 0; outer < options.max_outer; ++outer) {
    sol.outer_iterations = outer + 1;
    qp::Result res = qp::solve(qp, inner);
    if (res.status == qp::Status::infeasible) {
      sol.status = SolveStatus::infeasible;
      break;
    }
    x.assign(res.x.begin(), res.x.begin() + n);
    bool converged = res.status == qp::Status::optimal;
    if (!converged) break;

    for (std::size_t k = 0; k < socs.size(); ++k) {
      const SocConstraint& c = program.soc_constraints[k];
      SocState& s = socs[k];
      if (s.kind == SocState::Kind::linear) continue;
      double ur = c.re.eval(x), ui = c.im.eval(x);
      double mag = std::hypot(ur, ui);
      if (mag <= c.limit + options.tol) continue;
      converged = false;
      double angle = std::atan2(ui, ur);
      if (s.kind == SocState::Kind::inactive) {
        lift(qp, c, s);
        for (int q = 0; q < 8; ++q) {
          double a = q * std::numbers::pi / 4.0 - std::numbers::pi + std::numbers::pi / 4.0;
          s.angles.push_back(a);
          add_angle_cut(qp, s, a, c.limit);
        }
      }
      if (!has_angle(s.angles, angle)) {
        s.angles.push_back(angle);
        add_angle_cut(qp, s, angle, c.limit);
        ++sol.cuts;
      }
    }
    for (std::size_t k = 0; k < norms.size(); ++k) {
      const NormTerm& t = program.norm_terms[k];
      const NormState& s = norms[k];
      if (t.order != 2) continue;
      double w = res.x[static_cast<std::size_t>(s.w)];
      double acc = 0.0;
      for (int v : s.lifted) acc += res.x[static_cast<std::size_t>(v)] * res.x[static_cast<std::size_t>(v)];
      double nrm = std::sqrt(acc);
      if (nrm <= w + options.tol * (1.0 + nrm) || nrm == 0.0) continue;
      converged = false;
      qp::SparseRow row;
      for (int v : s.lifted) row.add(v, res.x[static_cast<std::size_t>(v)] / nrm);
      row.add(s.w, -1.0);
      qp.add_ineq(std::move(row), 0.0);
      ++sol.cuts;
    }
    if (converged) {
      sol.status = SolveStatus::optimal;
      break;
    }
  }

  // Interior-point iterates never touch their bounds; put near-active ones on them.
  auto near = [](double v, double bound) {
    return std::isfinite(bound) && std::abs(v - bound) <= kBoundSnap * (1.0 + std::abs(bound));
  };
  for (std::size_t j = 0; j < static_cast<std::size_t>(program.n); ++j) {
    if (near(x[j], program.lower[j])) x[j] = program.lower[j];
    if (near(x[j], program.upper[j])) x[j] = program.upper[j];
  }
  sol.x = std::move(x);
  sol.objective = program.objective(sol.x);
  sol.max_violation = program.max_violation(sol.x);
  sol.cut_angles.resize(socs.size());
  for (std::size_t k = 0; k < socs.size(); ++k) sol.cut_angles[k] = socs[k].angles;
  return sol;
}

namespace {

nlohmann::json expr_json(const LinearExpr& e) {
  return {{"index", e.index}, {"coef", e.coef}, {"constant", e.constant}};
}

}  // namespace

nlohmann::json program_to_json(const ConvexProgram& p) {
  auto finite = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double d : v) a.push_back(std::isfinite(d) ? nlohmann::json(d) : nlohmann::json(d > 0 ? "inf" : "-inf"));
    return a;
  };
  nlohmann::json j;
  j["n"] = p.n;
  j["linear_cost"] = p.linear_cost;
  j["quad_cost"] = p.quad_cost;
  j["lower"] = finite(p.lower);
  j["upper"] = finite(p.upper);
  j["constant"] = p.constant;
  for (const auto& t : p.epigraph_terms) {
    nlohmann::json e{{"weight", t.weight}, {"exprs", nlohmann::json::array()}};
    for (const auto& x : t.exprs) e["exprs"].push_back(expr_json(x));
    j["epigraph_terms"].push_back(e);
  }
  for (const auto& t : p.norm_terms) {
    nlohmann::json e{{"weight", t.weight}, {"order", t.order}, {"exprs", nlohmann::json::array()}};
    for (const auto& x : t.exprs) e["exprs"].push_back(expr_json(x));
    j["norm_terms"].push_back(e);
  }
  for (const auto& r : p.linear_ineqs) j["linear_ineqs"].push_back({{"expr", expr_json(r.expr)}, {"rhs", r.rhs}});
  for (const auto& r : p.linear_eqs) j["linear_eqs"].push_back({{"expr", expr_json(r.expr)}, {"rhs", r.rhs}});
  for (const auto& c : p.soc_constraints)
    j["soc_constraints"].push_back({{"re", expr_json(c.re)}, {"im", expr_json(c.im)}, {"limit", c.limit}});
  return j;
}

void dump_program(const ConvexProgram& program, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path));
  out << program_to_json(program).dump(1) << '\n';
}

}  // namespace acn
