#pragma once

// SDP feasibility: find X_k >= 0 (PSD) with sum_k <A_ik, X_k> = b_i.
//
// Solved as  max t  s.t.  sum_k <A_ik, Y_k + t I> = b_i,  Y_k >= 0,  t <= 1,
// so that t* > 0 exhibits a strictly feasible point and t* < 0 proves
// infeasibility. The program above is handed to the conic solver as its
// dual, with one x-variable per equality row.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "kroa/conic.hpp"

namespace kroa {

/// Coefficient of entry (r, c), r <= c, of block `block`. Off-diagonal
/// entries stand for v * (X_rc + X_cr).
struct SdpEntry {
  int block;
  int r;
  int c;
  double v;
};

struct SdpInstance {
  std::vector<int> block_sizes;
  std::vector<std::vector<SdpEntry>> rows;
  std::vector<double> rhs;

  int num_rows() const { return static_cast<int>(rows.size()); }
};

enum class SdpStatus { feasible, infeasible, unknown };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::feasible: return "feasible";
    case SdpStatus::infeasible: return "infeasible";
    case SdpStatus::unknown: return "unknown";
  }
  return "?";
}

struct SdpResult {
  SdpStatus status = SdpStatus::unknown;
  std::vector<Eigen::MatrixXd> X;
  double t = 0.0;
  double min_eig = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::string message;
};

struct SdpOptions {
  double tol = 1e-8;
  double verify_tol = 1e-7;
  int max_iter = 120;
};

/// Equality residual max_i |sum_k <A_ik, X_k> - b_i| / max(1, |b_i|).
inline double sdp_residual(const SdpInstance& inst, const std::vector<Eigen::MatrixXd>& X) {
  double res = 0.0;
  for (int i = 0; i < inst.num_rows(); ++i) {
    double acc = 0.0;
    for (const auto& e : inst.rows[i]) {
      const auto& M = X[e.block];
      acc += e.v * (e.r == e.c ? M(e.r, e.r) : M(e.r, e.c) + M(e.c, e.r));
    }
    res = std::max(res, std::abs(acc - inst.rhs[i]) / std::max(1.0, std::abs(inst.rhs[i])));
  }
  return res;
}

inline double min_eigenvalue(const Eigen::MatrixXd& M) {
  if (M.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

inline void validate(const SdpInstance& inst) {
  if (inst.rows.size() != inst.rhs.size()) throw std::invalid_argument("SdpInstance: rows/rhs size mismatch");
  for (int m : inst.block_sizes) {
    if (m <= 0) throw std::invalid_argument("SdpInstance: block size must be positive");
  }
  for (const auto& row : inst.rows) {
    for (const auto& e : row) {
      if (e.block < 0 || e.block >= static_cast<int>(inst.block_sizes.size())) {
        throw std::invalid_argument("SdpInstance: block index out of range");
      }
      const int m = inst.block_sizes[e.block];
      if (e.r < 0 || e.c < e.r || e.c >= m) throw std::invalid_argument("SdpInstance: entry index out of range");
      if (!std::isfinite(e.v)) throw std::invalid_argument("SdpInstance: non-finite coefficient");
    }
  }
  for (double b : inst.rhs) {
    if (!std::isfinite(b)) throw std::invalid_argument("SdpInstance: non-finite rhs");
  }
}

/// Verifies witnesses; a failing candidate is reported as unknown.
inline SdpStatus verify_witness(const SdpInstance& inst, const std::vector<Eigen::MatrixXd>& X, double tol,
                                double* min_eig_out = nullptr, double* res_out = nullptr) {
  double worst = 0.0;
  bool ok = true;
  for (const auto& M : X) {
    const double me = min_eigenvalue(M);
    worst = std::min(worst, me);
    if (me < -tol * (1.0 + M.norm())) ok = false;
  }
  const double res = sdp_residual(inst, X);
  if (min_eig_out) *min_eig_out = worst;
  if (res_out) *res_out = res;
  if (res > tol) ok = false;
  return ok ? SdpStatus::feasible : SdpStatus::unknown;
}

inline SdpResult solve_sdp(const SdpInstance& inst, const SdpOptions& opt = {}) {
  validate(inst);
  SdpResult out;
  const int K = static_cast<int>(inst.block_sizes.size());

  // Merge duplicate entries, normalize rows, drop empty rows.
  std::vector<std::vector<SdpEntry>> rows;
  std::vector<double> rhs, row_scale;
  for (int i = 0; i < inst.num_rows(); ++i) {
    std::map<std::tuple<int, int, int>, double> merged;
    for (const auto& e : inst.rows[i]) merged[{e.block, e.r, e.c}] += e.v;
    std::vector<SdpEntry> row;
    double mx = 0.0;
    for (const auto& [key, v] : merged) {
      if (v == 0.0) continue;
      row.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), v});
      mx = std::max(mx, std::abs(v));
    }
    if (row.empty()) {
      if (std::abs(inst.rhs[i]) > 1e-12) {
        out.status = SdpStatus::infeasible;
        out.message = "row " + std::to_string(i) + " has no entries but nonzero rhs";
        return out;
      }
      continue;
    }
    for (auto& e : row) e.v /= mx;
    rows.push_back(std::move(row));
    rhs.push_back(inst.rhs[i] / mx);
    row_scale.push_back(mx);
  }
  const int m = static_cast<int>(rows.size());

  if (m == 0) {
    out.status = SdpStatus::feasible;
    for (int k = 0; k < K; ++k) out.X.push_back(Eigen::MatrixXd::Zero(inst.block_sizes[k], inst.block_sizes[k]));
    return out;
  }

  conic::Problem P;
  P.c = Eigen::VectorXd::Zero(m + 1);
  for (int i = 0; i < m; ++i) P.c[i] = -rhs[i];
  P.c[m] = -1.0;
  P.Gl = Eigen::MatrixXd::Zero(1, m + 1);
  P.Gl(0, m) = 1.0;
  P.hl = Eigen::VectorXd::Zero(1);
  P.psd_sizes = inst.block_sizes;
  P.Gs.assign(K, std::vector<std::vector<conic::SymEntry>>(m + 1));
  P.A = Eigen::MatrixXd::Zero(1, m + 1);
  for (int i = 0; i < m; ++i) {
    double trace = 0.0;
    for (const auto& e : rows[i]) {
      P.Gs[e.block][i].push_back({e.r, e.c, e.v});
      if (e.r == e.c) trace += e.v;
    }
    P.A(0, i) = trace;
  }
  P.A(0, m) = 1.0;
  P.b = Eigen::VectorXd::Constant(1, -1.0);
  for (int k = 0; k < K; ++k) P.hs.push_back(Eigen::MatrixXd::Zero(inst.block_sizes[k], inst.block_sizes[k]));

  auto assemble = [&](const conic::Solution& s, double t) {
    std::vector<Eigen::MatrixXd> X;
    for (int k = 0; k < K; ++k) {
      Eigen::MatrixXd M = 0.5 * (s.z.s[k] + s.z.s[k].transpose());
      M.diagonal().array() += t;
      X.push_back(std::move(M));
    }
    return X;
  };

  bool early_feasible = false, early_infeasible = false;
  conic::Options co;
  co.abstol = co.reltol = co.feastol = opt.tol;
  co.max_iter = opt.max_iter;
  co.stop = [&](const conic::Solution& s) {
    const double t = s.y[0];
    // Interior z plus t > 0 is strictly PSD; stop once the equalities hold.
    if (t > 1e-6 && s.dres < 10 * opt.verify_tol &&
        sdp_residual(inst, assemble(s, t)) < 0.1 * opt.verify_tol) {
      early_feasible = true;
      return true;
    }
    // Farkas certificate: sum_i x_i A_i negative definite with b'x > 0.
    if (s.pcost < -1e-6) {
      const Eigen::VectorXd x = s.x.head(m);
      double bx = 0.0;
      for (int i = 0; i < m; ++i) bx += rhs[i] * x[i];
      if (!(bx > 1e-9 * x.norm())) return false;
      for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(inst.block_sizes[k], inst.block_sizes[k]);
        for (int i = 0; i < m; ++i) {
          for (const auto& e : P.Gs[k][i]) {
            M(e.r, e.c) += x[i] * e.v;
            if (e.r != e.c) M(e.c, e.r) += x[i] * e.v;
          }
        }
        if (!(-min_eigenvalue(-M) < 0.0)) return false;
      }
      early_infeasible = true;
      return true;
    }
    return false;
  };
  conic::Solution s;
  try {
    s = conic::solve(P, co);
  } catch (const std::exception& e) {
    out.status = SdpStatus::unknown;
    out.message = std::string("solver failure: ") + e.what();
    return out;
  }
  out.iterations = s.iterations;

  if (s.status == conic::Status::dual_infeasible) {
    // Unbounded below: the equality system admits no solution at all.
    out.status = SdpStatus::infeasible;
    out.message = "inconsistent equality constraints";
    return out;
  }
  if (s.status == conic::Status::primal_infeasible) {
    out.status = SdpStatus::unknown;
    out.message = "solver reported an unbounded max-t program";
    return out;
  }
  const double t = s.y.size() ? s.y[0] : 0.0;
  out.t = t;
  if (early_infeasible || (s.status == conic::Status::optimal && t < -opt.verify_tol)) {
    out.status = SdpStatus::infeasible;
    out.message = early_infeasible ? "Farkas certificate" : "max-t optimum " + std::to_string(t) + " < 0";
    return out;
  }
  if (early_feasible || s.status == conic::Status::optimal || t > 0) {
    std::vector<Eigen::MatrixXd> X = assemble(s, std::max(t, 0.0));
    out.status = verify_witness(inst, X, opt.verify_tol, &out.min_eig, &out.residual);
    out.X = std::move(X);
    out.message = out.status == SdpStatus::feasible ? "verified" : "witness failed verification";
    return out;
  }
  out.status = SdpStatus::unknown;
  out.message = std::string("solver ") + conic::to_string(s.status);
  return out;
}

/// Sparse text export: header "blocks <K> <m_1> ... <m_K>", then one line per
/// nonzero "<row> <block> <r> <c> <v>", then "rhs <b_1> ... <b_m>".
inline void write_sdp_text(std::ostream& os, const SdpInstance& inst) {
  os << "blocks " << inst.block_sizes.size();
  for (int m : inst.block_sizes) os << ' ' << m;
  os << '\n' << "rows " << inst.num_rows() << '\n';
  os.precision(17);
  for (int i = 0; i < inst.num_rows(); ++i) {
    for (const auto& e : inst.rows[i]) os << i << ' ' << e.block << ' ' << e.r << ' ' << e.c << ' ' << e.v << '\n';
  }
  os << "rhs";
  for (double b : inst.rhs) os << ' ' << b;
  os << '\n';
}

}  // namespace kroa
