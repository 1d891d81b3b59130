#include "acn/qp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace acn::qp {

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

constexpr double kRegPrimal = 1e-9;
constexpr double kRegDual = 1e-9;
constexpr double kStepScale = 0.99;
constexpr double kStallStep = 1e-8;
constexpr int kStallIterations = 5;
// Bound slacks are computed as x - bound and lose all digits right at the
// bound; this floor keeps the barrier terms finite.
constexpr double kSlackFloor = 1e-13;
// Relative accuracy accepted when the iteration cannot make further progress.
constexpr double kReducedTol = 1e-6;

struct CompactRow {
  std::vector<int> index;
  std::vector<double> value;
};

// Problem with fixed variables substituted out and duplicate row entries merged.
struct Reduced {
  int n = 0;
  std::vector<int> map;  // original -> reduced index, -1 when fixed
  std::vector<double> fixed_value;
  Vec p, c, lower, upper;
  std::vector<CompactRow> eq, ineq;
  Vec b, h;
  bool infeasible = false;
};

CompactRow compact(const SparseRow& row, const std::vector<int>& map, const std::vector<double>& fixed,
                   double& rhs) {
  std::map<int, double> merged;
  for (std::size_t k = 0; k < row.index.size(); ++k) {
    int j = row.index[k];
    if (map[static_cast<std::size_t>(j)] < 0)
      rhs -= row.value[k] * fixed[static_cast<std::size_t>(j)];
    else
      merged[map[static_cast<std::size_t>(j)]] += row.value[k];
  }
  CompactRow out;
  for (auto [j, v] : merged) {
    if (v == 0.0) continue;
    out.index.push_back(j);
    out.value.push_back(v);
  }
  return out;
}

Reduced reduce(const Problem& pr) {
  Reduced r;
  const auto n = static_cast<std::size_t>(pr.n);
  if (pr.p_diag.size() != n || pr.c.size() != n || pr.lower.size() != n || pr.upper.size() != n)
    throw std::invalid_argument("qp: vector sizes do not match variable count");
  r.map.assign(n, -1);
  r.fixed_value.assign(n, 0.0);
  std::vector<double> p, c, lo, hi;
  for (std::size_t j = 0; j < n; ++j) {
    if (pr.lower[j] > pr.upper[j] + 1e-12) {
      r.infeasible = true;
      return r;
    }
    if (pr.upper[j] - pr.lower[j] <= 1e-12) {
      r.fixed_value[j] = pr.lower[j];
      continue;
    }
    r.map[j] = static_cast<int>(p.size());
    p.push_back(pr.p_diag[j]);
    c.push_back(pr.c[j]);
    lo.push_back(pr.lower[j]);
    hi.push_back(pr.upper[j]);
  }
  r.n = static_cast<int>(p.size());
  r.p = Eigen::Map<Vec>(p.data(), r.n);
  r.c = Eigen::Map<Vec>(c.data(), r.n);
  r.lower = Eigen::Map<Vec>(lo.data(), r.n);
  r.upper = Eigen::Map<Vec>(hi.data(), r.n);

  std::vector<double> b, h;
  for (std::size_t i = 0; i < pr.eq_rows.size(); ++i) {
    double rhs = pr.eq_rhs[i];
    CompactRow row = compact(pr.eq_rows[i], r.map, r.fixed_value, rhs);
    if (row.index.empty()) {
      if (std::abs(rhs) > 1e-9 * (1.0 + std::abs(pr.eq_rhs[i]))) r.infeasible = true;
      continue;
    }
    r.eq.push_back(std::move(row));
    b.push_back(rhs);
  }
  for (std::size_t i = 0; i < pr.ineq_rows.size(); ++i) {
    double rhs = pr.ineq_rhs[i];
    CompactRow row = compact(pr.ineq_rows[i], r.map, r.fixed_value, rhs);
    if (row.index.empty()) {
      if (rhs < -1e-9 * (1.0 + std::abs(pr.ineq_rhs[i]))) r.infeasible = true;
      continue;
    }
    r.ineq.push_back(std::move(row));
    h.push_back(rhs);
  }
  r.b = Eigen::Map<Vec>(b.data(), static_cast<Eigen::Index>(b.size()));
  r.h = Eigen::Map<Vec>(h.data(), static_cast<Eigen::Index>(h.size()));
  return r;
}

Vec row_product(const std::vector<CompactRow>& rows, const Vec& x) {
  Vec out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < rows[i].index.size(); ++k) s += rows[i].value[k] * x[rows[i].index[k]];
    out[static_cast<Eigen::Index>(i)] = s;
  }
  return out;
}

void add_transpose_product(const std::vector<CompactRow>& rows, const Vec& y, Vec& out) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double yi = y[static_cast<Eigen::Index>(i)];
    if (yi == 0.0) continue;
    for (std::size_t k = 0; k < rows[i].index.size(); ++k) out[rows[i].index[k]] += rows[i].value[k] * yi;
  }
}

double max_step(const Vec& v, const Vec& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

class KktSystem {
 public:
  KktSystem(const Reduced& r) : r_(r), n_(r.n), me_(static_cast<int>(r.eq.size())), mi_(static_cast<int>(r.ineq.size())) {
    const int dim = n_ + me_ + mi_;
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < dim; ++k) trip.emplace_back(k, k, 1.0);
    for (int e = 0; e < me_; ++e)
      for (std::size_t k = 0; k < r.eq[e].index.size(); ++k) trip.emplace_back(n_ + e, r.eq[e].index[k], r.eq[e].value[k]);
    for (int i = 0; i < mi_; ++i)
      for (std::size_t k = 0; k < r.ineq[i].index.size(); ++k)
        trip.emplace_back(n_ + me_ + i, r.ineq[i].index[k], r.ineq[i].value[k]);
    k_.resize(dim, dim);
    k_.setFromTriplets(trip.begin(), trip.end());
    k_.makeCompressed();
    diag_pos_.resize(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) diag_pos_[static_cast<std::size_t>(k)] = &k_.coeffRef(k, k) - k_.valuePtr();
    reg_.resize(dim);
    ldlt_.analyzePattern(k_);
  }

  // Sets the (1,1) block diagonal to dx and the (3,3) block to -dz.
  bool factorize(const Vec& dx, const Vec& dz) {
    double* values = k_.valuePtr();
    for (int j = 0; j < n_; ++j) {
      reg_[j] = kRegPrimal;
      values[diag_pos_[static_cast<std::size_t>(j)]] = dx[j] + kRegPrimal;
    }
    for (int e = 0; e < me_; ++e) {
      reg_[n_ + e] = -kRegDual;
      values[diag_pos_[static_cast<std::size_t>(n_ + e)]] = -kRegDual;
    }
    for (int i = 0; i < mi_; ++i) {
      reg_[n_ + me_ + i] = -kRegDual;
      values[diag_pos_[static_cast<std::size_t>(n_ + me_ + i)]] = -dz[i] - kRegDual;
    }
    ldlt_.factorize(k_);
    return ldlt_.info() == Eigen::Success;
  }

  // Solves the unregularized system with iterative refinement.
  Vec solve(const Vec& rhs) const {
    Vec sol = ldlt_.solve(rhs);
    for (int pass = 0; pass < 3; ++pass) {
      Vec kv = k_.selfadjointView<Eigen::Lower>() * sol;
      Vec res = rhs - (kv - reg_.cwiseProduct(sol));
      if (res.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
      sol += ldlt_.solve(res);
    }
    return sol;
  }

 private:
  const Reduced& r_;
  int n_, me_, mi_;
  SpMat k_;
  std::vector<Eigen::Index> diag_pos_;
  Vec reg_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

}  // namespace

Result solve(const Problem& problem, const Options& options) {
  Result result;
  Reduced r = reduce(problem);
  const auto n_orig = static_cast<std::size_t>(problem.n);
  auto expand = [&](const Vec& xr) {
    std::vector<double> x(n_orig);
    for (std::size_t j = 0; j < n_orig; ++j) x[j] = r.map[j] < 0 ? r.fixed_value[j] : xr[r.map[j]];
    return x;
  };
  auto objective = [&](const std::vector<double>& x) {
    double f = 0.0;
    for (std::size_t j = 0; j < n_orig; ++j) f += 0.5 * problem.p_diag[j] * x[j] * x[j] + problem.c[j] * x[j];
    return f;
  };
  if (r.infeasible) {
    result.status = Status::infeasible;
    result.x = expand(Vec::Zero(r.n));
    return result;
  }

  const int n = r.n;
  const int me = static_cast<int>(r.eq.size());
  const int mi = static_cast<int>(r.ineq.size());

  std::vector<int> lo_idx, hi_idx;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(r.lower[j])) lo_idx.push_back(j);
    if (std::isfinite(r.upper[j])) hi_idx.push_back(j);
  }
  const int nl = static_cast<int>(lo_idx.size());
  const int nu = static_cast<int>(hi_idx.size());
  const int m_total = mi + nl + nu;

  // Initial point: strictly inside the box.
  Vec x(n);
  for (int j = 0; j < n; ++j) {
    double lo = r.lower[j], hi = r.upper[j];
    if (std::isfinite(lo) && std::isfinite(hi))
      x[j] = 0.5 * (lo + hi);
    else if (std::isfinite(lo))
      x[j] = lo + 1.0;
    else if (std::isfinite(hi))
      x[j] = hi - 1.0;
    else
      x[j] = 0.0;
  }
  Vec gx = row_product(r.ineq, x);
  Vec s(mi), z = Vec::Ones(mi);
  for (int i = 0; i < mi; ++i) s[i] = std::max(r.h[i] - gx[i], 1.0);
  Vec nu_eq = Vec::Zero(me);
  Vec yl = Vec::Ones(nl), yu = Vec::Ones(nu);

  const double scale_p = 1.0 + std::max(r.b.size() ? r.b.lpNorm<Eigen::Infinity>() : 0.0,
                                        r.h.size() ? r.h.lpNorm<Eigen::Infinity>() : 0.0);
  const double scale_d = 1.0 + (n ? r.c.lpNorm<Eigen::Infinity>() : 0.0);

  KktSystem kkt(r);
  Vec wl(nl), wu(nu);
  double best_pres = kInf;
  int stall = 0;
  int short_steps = 0;

  for (int it = 0; it < options.max_iter; ++it) {
    result.iterations = it;
    for (int k = 0; k < nl; ++k)
      wl[k] = std::max(x[lo_idx[k]] - r.lower[lo_idx[k]], kSlackFloor * (1.0 + std::abs(r.lower[lo_idx[k]])));
    for (int k = 0; k < nu; ++k)
      wu[k] = std::max(r.upper[hi_idx[k]] - x[hi_idx[k]], kSlackFloor * (1.0 + std::abs(r.upper[hi_idx[k]])));

    Vec rd = r.p.cwiseProduct(x) + r.c;
    add_transpose_product(r.eq, nu_eq, rd);
    add_transpose_product(r.ineq, z, rd);
    for (int k = 0; k < nl; ++k) rd[lo_idx[k]] -= yl[k];
    for (int k = 0; k < nu; ++k) rd[hi_idx[k]] += yu[k];
    Vec re = row_product(r.eq, x) - r.b;
    Vec ri = row_product(r.ineq, x) + s - r.h;

    double comp = s.dot(z) + wl.dot(yl) + wu.dot(yu);
    double mu = m_total > 0 ? comp / m_total : 0.0;
    double pres = std::max(me ? re.lpNorm<Eigen::Infinity>() : 0.0, mi ? ri.lpNorm<Eigen::Infinity>() : 0.0);
    double dres = n ? rd.lpNorm<Eigen::Infinity>() : 0.0;
    double pobj = 0.5 * x.dot(r.p.cwiseProduct(x)) + r.c.dot(x);

    auto accurate = [&](double tol) {
      return pres <= tol * scale_p && dres <= tol * scale_d && comp <= tol * (1.0 + std::abs(pobj));
    };
    if (accurate(options.tol)) {
      result.status = Status::optimal;
      break;
    }
    const Status stuck = accurate(std::max(options.tol, kReducedTol)) ? Status::optimal
                         : pres > 1e-6 * scale_p                      ? Status::infeasible
                                                                      : Status::max_iter;
    // Diverging duals with a stalled primal residual signal an empty feasible set.
    if (pres < 0.5 * best_pres) {
      best_pres = pres;
      stall = 0;
    } else {
      ++stall;
    }
    double dual_size = std::max({z.size() ? z.lpNorm<Eigen::Infinity>() : 0.0,
                                 yl.size() ? yl.lpNorm<Eigen::Infinity>() : 0.0,
                                 yu.size() ? yu.lpNorm<Eigen::Infinity>() : 0.0});
    if (pres > 1e-6 * scale_p && ((dual_size > 1e12 * scale_d && stall > 5) || stall > 40)) {
      result.status = Status::infeasible;
      break;
    }

    Vec dx_diag = r.p;
    for (int k = 0; k < nl; ++k) dx_diag[lo_idx[k]] += yl[k] / wl[k];
    for (int k = 0; k < nu; ++k) dx_diag[hi_idx[k]] += yu[k] / wu[k];
    Vec dz_diag = s.cwiseQuotient(z);
    if (!kkt.factorize(dx_diag, dz_diag)) {
      result.status = stuck == Status::infeasible ? Status::max_iter : stuck;
      break;
    }

    Vec dx, dnu, dz, ds, dyl(nl), dyu(nu);
    auto newton = [&](const Vec& rsz, const Vec& rl, const Vec& ru) {
      Vec rhs(n + me + mi);
      Vec rx = -rd;
      for (int k = 0; k < nl; ++k) rx[lo_idx[k]] -= rl[k] / wl[k];
      for (int k = 0; k < nu; ++k) rx[hi_idx[k]] += ru[k] / wu[k];
      rhs.head(n) = rx;
      rhs.segment(n, me) = -re;
      rhs.tail(mi) = rsz.cwiseQuotient(z) - ri;
      Vec sol = kkt.solve(rhs);
      dx = sol.head(n);
      dnu = sol.segment(n, me);
      dz = sol.tail(mi);
      ds = -ri - row_product(r.ineq, dx);
      for (int k = 0; k < nl; ++k) dyl[k] = -(rl[k] + yl[k] * dx[lo_idx[k]]) / wl[k];
      for (int k = 0; k < nu; ++k) dyu[k] = (-ru[k] + yu[k] * dx[hi_idx[k]]) / wu[k];
    };
    auto step_length = [&]() {
      Vec dwl(nl), dwu(nu);
      for (int k = 0; k < nl; ++k) dwl[k] = dx[lo_idx[k]];
      for (int k = 0; k < nu; ++k) dwu[k] = -dx[hi_idx[k]];
      return std::min({max_step(s, ds), max_step(z, dz), max_step(wl, dwl), max_step(wu, dwu),
                       max_step(yl, dyl), max_step(yu, dyu)});
    };

    // Predictor.
    Vec rsz = s.cwiseProduct(z);
    Vec rl = wl.cwiseProduct(yl);
    Vec ru = wu.cwiseProduct(yu);
    newton(rsz, rl, ru);
    if (m_total > 0) {
      double a_aff = step_length();
      double comp_aff = (s + a_aff * ds).dot(z + a_aff * dz);
      for (int k = 0; k < nl; ++k) comp_aff += (wl[k] + a_aff * dx[lo_idx[k]]) * (yl[k] + a_aff * dyl[k]);
      for (int k = 0; k < nu; ++k) comp_aff += (wu[k] - a_aff * dx[hi_idx[k]]) * (yu[k] + a_aff * dyu[k]);
      double sigma = std::pow(std::max(0.0, comp_aff / comp), 3.0);
      // Corrector.
      Vec rsz_c = rsz + ds.cwiseProduct(dz) - Vec::Constant(mi, sigma * mu);
      Vec rl_c(nl), ru_c(nu);
      for (int k = 0; k < nl; ++k) rl_c[k] = rl[k] + dx[lo_idx[k]] * dyl[k] - sigma * mu;
      for (int k = 0; k < nu; ++k) ru_c[k] = ru[k] - dx[hi_idx[k]] * dyu[k] - sigma * mu;
      newton(rsz_c, rl_c, ru_c);
    }
    double alpha = m_total > 0 ? std::min(1.0, kStepScale * step_length()) : 1.0;
    short_steps = alpha < kStallStep ? short_steps + 1 : 0;
    if (short_steps > kStallIterations) {
      result.iterations = it + 1;
      result.status = stuck;
      break;
    }
    x += alpha * dx;
    nu_eq += alpha * dnu;
    s += alpha * ds;
    z += alpha * dz;
    yl += alpha * dyl;
    yu += alpha * dyu;
    if (m_total == 0) {
      result.status = Status::optimal;
      result.iterations = it + 1;
      break;
    }
    if (it + 1 == options.max_iter) {
      result.iterations = it + 1;
      result.status = pres > 1e-6 * scale_p ? Status::infeasible : Status::max_iter;
    }
  }

  // Snap to the box; interior iterates may sit a hair outside after rounding.
  for (int j = 0; j < n; ++j) x[j] = std::clamp(x[j], r.lower[j], r.upper[j]);
  result.x = expand(x);
  result.objective = objective(result.x);
  result.ineq_dual.assign(problem.ineq_rows.size(), 0.0);
  // Duals of dropped empty rows stay zero; map the rest back in order.
  {
    std::size_t kept = 0;
    for (std::size_t i = 0; i < problem.ineq_rows.size() && kept < static_cast<std::size_t>(mi); ++i) {
      bool empty = true;
      for (int j : problem.ineq_rows[i].index)
        if (r.map[static_cast<std::size_t>(j)] >= 0) {
          empty = false;
          break;
        }
      if (!empty) result.ineq_dual[i] = z[static_cast<Eigen::Index>(kept++)];
    }
  }
  return result;
}

}  // namespace acn::qp
