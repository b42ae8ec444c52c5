#pragma once

// Dense linear programs, solved by the conic interior-point method.

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kroa/conic.hpp"

namespace kroa {

/// minimize c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub.
/// Empty lb/ub mean free variables; infinite entries mean no bound.
struct LinearProgram {
  Eigen::VectorXd c;
  Eigen::MatrixXd A_ub;
  Eigen::VectorXd b_ub;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;
};

struct LpResult {
  double value = 0.0;
  Eigen::VectorXd x;
  int iterations = 0;
  bool inaccurate = false;
};

class LpError : public std::runtime_error {
 public:
  enum class Kind { infeasible, unbounded, numerical };
  LpError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
  Kind kind;
};

struct LpOptions {
  double tol = 1e-10;
  /// Accepted accuracy when the solver stalls before reaching tol.
  double fallback_tol = 1e-7;
  /// Dual residual tolerated in that case; ill-conditioned but solved
  /// instances hover around 1e-6 here.
  double fallback_dres = 1e-5;
  int max_iter = 200;
  bool verbose = false;
};

inline LpResult solve_lp(const LinearProgram& lp, const LpOptions& opt = {}) {
  const int n = static_cast<int>(lp.c.size());
  if (n == 0) throw std::invalid_argument("solve_lp: no variables");
  auto check = [&](const Eigen::MatrixXd& M, const Eigen::VectorXd& v, const char* what) {
    if (M.rows() != v.size() || (M.rows() && M.cols() != n)) {
      throw std::invalid_argument(std::string("solve_lp: shape mismatch in ") + what);
    }
    if (!M.allFinite() || !v.allFinite()) throw std::invalid_argument(std::string("solve_lp: non-finite ") + what);
  };
  check(lp.A_ub, lp.b_ub, "A_ub/b_ub");
  check(lp.A_eq, lp.b_eq, "A_eq/b_eq");
  if (!lp.c.allFinite()) throw std::invalid_argument("solve_lp: non-finite objective");
  if ((lp.lb.size() && lp.lb.size() != n) || (lp.ub.size() && lp.ub.size() != n)) {
    throw std::invalid_argument("solve_lp: bound vector size mismatch");
  }

  std::vector<int> lo_idx, hi_idx;
  for (int j = 0; j < n; ++j) {
    if (lp.lb.size() && std::isfinite(lp.lb[j])) lo_idx.push_back(j);
    if (lp.ub.size() && std::isfinite(lp.ub[j])) hi_idx.push_back(j);
  }
  const int m_ub = static_cast<int>(lp.A_ub.rows());
  const int rows = m_ub + static_cast<int>(lo_idx.size() + hi_idx.size());

  conic::Problem P;
  P.c = lp.c;
  P.Gl = Eigen::MatrixXd::Zero(rows, n);
  P.hl = Eigen::VectorXd::Zero(rows);
  if (m_ub) {
    P.Gl.topRows(m_ub) = lp.A_ub;
    P.hl.head(m_ub) = lp.b_ub;
  }
  int r = m_ub;
  for (int j : lo_idx) {
    P.Gl(r, j) = -1.0;
    P.hl[r++] = -lp.lb[j];
  }
  for (int j : hi_idx) {
    P.Gl(r, j) = 1.0;
    P.hl[r++] = lp.ub[j];
  }
  P.A = lp.A_eq.rows() ? lp.A_eq : Eigen::MatrixXd(0, n);
  P.b = lp.b_eq.rows() ? lp.b_eq : Eigen::VectorXd(0);

  conic::Options o;
  o.abstol = o.reltol = o.feastol = opt.tol;
  o.max_iter = opt.max_iter;
  o.verbose = opt.verbose;
  const conic::Solution s = conic::solve(P, o);
  switch (s.status) {
    case conic::Status::primal_infeasible:
      throw LpError(LpError::Kind::infeasible, "solve_lp: infeasible");
    case conic::Status::dual_infeasible:
      throw LpError(LpError::Kind::unbounded, "solve_lp: unbounded");
    default:
      break;
  }
  LpResult out;
  out.x = s.x;
  out.value = lp.c.dot(s.x);
  out.iterations = s.iterations;
  if (s.status != conic::Status::optimal) {
    const double relgap = s.gap / std::max(1.0, std::abs(out.value));
    if (!(s.pres <= opt.fallback_tol && s.dres <= opt.fallback_dres && relgap <= opt.fallback_tol)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "solve_lp: solver %s (pres=%.3e, dres=%.3e, relgap=%.3e)",
                    conic::to_string(s.status), s.pres, s.dres, relgap);
      throw LpError(LpError::Kind::numerical, buf);
    }
    out.inaccurate = true;
  }
  return out;
}

}  // namespace kroa
