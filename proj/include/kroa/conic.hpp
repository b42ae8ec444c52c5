#pragma once

// Homogeneous self-dual interior-point method for linear cone programs
//
//   minimize    c'x
//   subject to  G x + s = h,  A x = b,  s in K
//
// where K is a product of a nonnegative orthant and PSD cones. The dual is
//
//   maximize    -h'z - b'y
//   subject to  G'z + A'y + c = 0,  z in K.
//
// Nesterov-Todd scaling, Mehrotra predictor-corrector. The reduced KKT
// system  [H A'; A 0]  with H = G' W^-1 W^-T G  is formed densely, which
// suits the problem sizes in this library (a few hundred x-variables).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kroa::conic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Entry of a symmetric matrix stored once (r <= c). Off-diagonal entries
/// stand for v * (E_rc + E_cr).
struct SymEntry {
  int r;
  int c;
  double v;
};

struct Problem {
  VectorXd c;
  // Orthant rows: Gl x + sl = hl, sl >= 0.
  MatrixXd Gl;
  VectorXd hl;
  // PSD blocks: (G x)_k = sum_i x_i * Gs[k][i].
  std::vector<int> psd_sizes;
  std::vector<std::vector<std::vector<SymEntry>>> Gs;
  std::vector<MatrixXd> hs;
  MatrixXd A;
  VectorXd b;

  int nx() const { return static_cast<int>(c.size()); }
  int nl() const { return static_cast<int>(hl.size()); }
};

enum class Status { optimal, primal_infeasible, dual_infeasible, stalled, max_iterations };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::primal_infeasible: return "primal_infeasible";
    case Status::dual_infeasible: return "dual_infeasible";
    case Status::stalled: return "stalled";
    case Status::max_iterations: return "max_iterations";
  }
  return "?";
}

struct ConeVec {
  VectorXd l;
  std::vector<MatrixXd> s;
};

struct Solution {
  Status status = Status::stalled;
  VectorXd x, y;
  ConeVec s, z;
  int iterations = 0;
  double pcost = 0, dcost = 0, gap = 0, pres = 0, dres = 0;
};

struct Options {
  double abstol = 1e-8;
  double reltol = 1e-8;
  double feastol = 1e-8;
  int max_iter = 100;
  double step = 0.99;
  bool verbose = false;
  /// Optional early exit, called with the normalized iterate (x/tau, y/tau,
  /// z/tau) and the primal/dual residuals; return true to stop.
  std::function<bool(const Solution&)> stop;
};

namespace detail {

inline double dot(const ConeVec& a, const ConeVec& b) {
  double d = a.l.dot(b.l);
  for (std::size_t k = 0; k < a.s.size(); ++k) d += (a.s[k].array() * b.s[k].array()).sum();
  return d;
}
inline double norm(const ConeVec& a) { return std::sqrt(dot(a, a)); }
inline void axpy(double alpha, const ConeVec& x, ConeVec& y) {
  y.l += alpha * x.l;
  for (std::size_t k = 0; k < y.s.size(); ++k) y.s[k] += alpha * x.s[k];
}
inline ConeVec scaled(const ConeVec& a, double f) {
  ConeVec r = a;
  r.l *= f;
  for (auto& m : r.s) m *= f;
  return r;
}
inline ConeVec zeros_like(const Problem& P) {
  ConeVec v;
  v.l = VectorXd::Zero(P.nl());
  for (int m : P.psd_sizes) v.s.push_back(MatrixXd::Zero(m, m));
  return v;
}
inline ConeVec identity_like(const Problem& P) {
  ConeVec v;
  v.l = VectorXd::Ones(P.nl());
  for (int m : P.psd_sizes) v.s.push_back(MatrixXd::Identity(m, m));
  return v;
}

inline ConeVec apply_G(const Problem& P, const VectorXd& x) {
  ConeVec out;
  out.l = P.nl() ? VectorXd(P.Gl * x) : VectorXd(0);
  for (std::size_t k = 0; k < P.psd_sizes.size(); ++k) {
    MatrixXd M = MatrixXd::Zero(P.psd_sizes[k], P.psd_sizes[k]);
    for (int i = 0; i < P.nx(); ++i) {
      if (x[i] == 0.0) continue;
      for (const auto& e : P.Gs[k][i]) {
        M(e.r, e.c) += x[i] * e.v;
        if (e.r != e.c) M(e.c, e.r) += x[i] * e.v;
      }
    }
    out.s.push_back(std::move(M));
  }
  return out;
}

inline VectorXd apply_Gt(const Problem& P, const ConeVec& z) {
  VectorXd out = P.nl() ? VectorXd(P.Gl.transpose() * z.l) : VectorXd::Zero(P.nx());
  for (std::size_t k = 0; k < P.psd_sizes.size(); ++k) {
    const MatrixXd& Z = z.s[k];
    for (int i = 0; i < P.nx(); ++i) {
      double acc = 0.0;
      for (const auto& e : P.Gs[k][i]) acc += e.v * (e.r == e.c ? Z(e.r, e.r) : Z(e.r, e.c) + Z(e.c, e.r));
      out[i] += acc;
    }
  }
  return out;
}

/// Most negative eigenvalue (or component) over all cones, as a positive
/// number when the vector is outside the cone.
inline double max_violation(const ConeVec& v) {
  double t = -std::numeric_limits<double>::infinity();
  if (v.l.size()) t = std::max(t, -v.l.minCoeff());
  for (const auto& M : v.s) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
    t = std::max(t, -es.eigenvalues()[0]);
  }
  return t;
}

// Nesterov-Todd scaling. Orthant: W = diag(d), d = sqrt(s/z).
// PSD: W(u) = R' u R, W^T(v) = R v R', rti = R^-T, lambda = diag.
struct Scaling {
  VectorXd d;
  VectorXd lam_l;
  std::vector<MatrixXd> R, rti;
  std::vector<VectorXd> lam_s;
};

inline bool compute_scaling(const ConeVec& s, const ConeVec& z, Scaling& W) {
  if (s.l.size()) {
    if ((s.l.array() <= 0).any() || (z.l.array() <= 0).any()) return false;
    W.d = (s.l.array() / z.l.array()).sqrt();
    W.lam_l = (s.l.array() * z.l.array()).sqrt();
  } else {
    W.d.resize(0);
    W.lam_l.resize(0);
  }
  W.R.clear();
  W.rti.clear();
  W.lam_s.clear();
  for (std::size_t k = 0; k < s.s.size(); ++k) {
    Eigen::LLT<MatrixXd> ls(s.s[k]), lz(z.s[k]);
    if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) return false;
    const MatrixXd Ls = ls.matrixL(), Lz = lz.matrixL();
    Eigen::JacobiSVD<MatrixXd> svd(Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const VectorXd lam = svd.singularValues();
    if (!(lam.minCoeff() > 0.0)) return false;
    const VectorXd isq = lam.array().rsqrt();
    W.R.push_back(Ls * svd.matrixV() * isq.asDiagonal());
    W.rti.push_back(Lz * svd.matrixU() * isq.asDiagonal());
    W.lam_s.push_back(lam);
  }
  return true;
}

inline Scaling identity_scaling(const Problem& P) {
  Scaling W;
  W.d = VectorXd::Ones(P.nl());
  W.lam_l = VectorXd::Ones(P.nl());
  for (int m : P.psd_sizes) {
    W.R.push_back(MatrixXd::Identity(m, m));
    W.rti.push_back(MatrixXd::Identity(m, m));
    W.lam_s.push_back(VectorXd::Ones(m));
  }
  return W;
}

// W^-1 W^-T u
inline ConeVec apply_Winv2(const Scaling& W, const ConeVec& u) {
  ConeVec r;
  r.l = u.l.array() / W.d.array().square();
  for (std::size_t k = 0; k < u.s.size(); ++k) {
    const MatrixXd& T = W.rti[k];
    MatrixXd inner = T.transpose() * u.s[k] * T;
    r.s.push_back(T * inner * T.transpose());
  }
  return r;
}
// W u (z-space to scaled)
inline ConeVec apply_W(const Scaling& W, const ConeVec& u) {
  ConeVec r;
  r.l = u.l.array() * W.d.array();
  for (std::size_t k = 0; k < u.s.size(); ++k) r.s.push_back(W.R[k].transpose() * u.s[k] * W.R[k]);
  return r;
}
// W^T v (scaled to s-space)
inline ConeVec apply_Wt(const Scaling& W, const ConeVec& v) {
  ConeVec r;
  r.l = v.l.array() * W.d.array();
  for (std::size_t k = 0; k < v.s.size(); ++k) r.s.push_back(W.R[k] * v.s[k] * W.R[k].transpose());
  return r;
}

inline ConeVec lambda_vec(const Scaling& W) {
  ConeVec r;
  r.l = W.lam_l;
  for (const auto& lam : W.lam_s) r.s.push_back(lam.asDiagonal().toDenseMatrix());
  return r;
}

// Symmetric (Jordan) product.
inline ConeVec jordan(const ConeVec& a, const ConeVec& b) {
  ConeVec r;
  r.l = a.l.array() * b.l.array();
  for (std::size_t k = 0; k < a.s.size(); ++k) {
    MatrixXd ab = a.s[k] * b.s[k];
    r.s.push_back(0.5 * (ab + ab.transpose()));
  }
  return r;
}

// Solve lambda o q = r for q.
inline ConeVec lambda_div(const Scaling& W, const ConeVec& r) {
  ConeVec q;
  q.l = r.l.array() / W.lam_l.array();
  for (std::size_t k = 0; k < r.s.size(); ++k) {
    const VectorXd& lam = W.lam_s[k];
    const int m = static_cast<int>(lam.size());
    MatrixXd Q(m, m);
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < m; ++i) Q(i, j) = 2.0 * r.s[k](i, j) / (lam[i] + lam[j]);
    }
    q.s.push_back(std::move(Q));
  }
  return q;
}

// Largest alpha with lambda + alpha * v in the cone (inf if unbounded).
inline double max_step(const Scaling& W, const ConeVec& v) {
  double a = std::numeric_limits<double>::infinity();
  for (int i = 0; i < v.l.size(); ++i) {
    if (v.l[i] < 0) a = std::min(a, -W.lam_l[i] / v.l[i]);
  }
  for (std::size_t k = 0; k < v.s.size(); ++k) {
    const VectorXd isq = W.lam_s[k].array().rsqrt();
    MatrixXd M = isq.asDiagonal() * v.s[k] * isq.asDiagonal();
    M = 0.5 * (M + M.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(M, Eigen::EigenvaluesOnly);
    const double mn = es.eigenvalues()[0];
    if (mn < 0) a = std::min(a, -1.0 / mn);
  }
  return a;
}

class KKT {
 public:
  KKT(const Problem& P, const Scaling& W) : P_(P), W_(W) {
    const int n = P.nx();
    MatrixXd H = MatrixXd::Zero(n, n);
    if (P.nl()) {
      MatrixXd Gs = (W.d.array().inverse()).matrix().asDiagonal() * P.Gl;
      H.selfadjointView<Eigen::Lower>().rankUpdate(Gs.transpose());
    }
    for (std::size_t k = 0; k < P.psd_sizes.size(); ++k) {
      const int m = P.psd_sizes[k];
      const MatrixXd& T = W.rti[k];
      std::vector<int> cols;
      for (int i = 0; i < n; ++i) {
        if (!P.Gs[k][i].empty()) cols.push_back(i);
      }
      if (cols.empty()) continue;
      MatrixXd Tm(static_cast<Eigen::Index>(m) * m, cols.size());
      for (std::size_t ci = 0; ci < cols.size(); ++ci) {
        Eigen::Map<MatrixXd> Ti(Tm.col(ci).data(), m, m);
        Ti.setZero();
        for (const auto& e : P.Gs[k][cols[ci]]) {
          if (e.r == e.c) {
            Ti.noalias() += e.v * T.row(e.r).transpose() * T.row(e.r);
          } else {
            Ti.noalias() += e.v * T.row(e.r).transpose() * T.row(e.c);
          }
        }
        // Symmetrize the off-diagonal contributions.
        MatrixXd tmp = Ti;
        Ti = tmp + tmp.transpose();
        for (const auto& e : P.Gs[k][cols[ci]]) {
          if (e.r == e.c) {
            // Diagonal entries were doubled above.
            Ti.noalias() -= e.v * T.row(e.r).transpose() * T.row(e.r);
          }
        }
      }
      MatrixXd Hk = MatrixXd::Zero(cols.size(), cols.size());
      Hk.selfadjointView<Eigen::Lower>().rankUpdate(Tm.transpose());
      for (std::size_t a = 0; a < cols.size(); ++a) {
        for (std::size_t b = 0; b <= a; ++b) H(cols[a], cols[b]) += Hk(a, b);
      }
    }
    H = H.selfadjointView<Eigen::Lower>();
    H_ = H;
    double reg = 0.0;
    const double base = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 12; ++attempt) {
      MatrixXd Hr = H;
      Hr.diagonal().array() += reg;
      llt_.compute(Hr);
      if (llt_.info() == Eigen::Success) break;
      reg = reg == 0.0 ? 1e-14 * base : reg * 100.0;
    }
    if (llt_.info() != Eigen::Success) throw std::runtime_error("conic: KKT factorization failed");
    if (P.A.rows()) {
      HiAt_ = llt_.solve(P.A.transpose());
      MatrixXd S = P.A * HiAt_;
      S_.compute(S);
    }
  }

  // Solves A'dy + G'dz = bx, A dx = by, G dx - W'W dz = bz.
  void solve(const VectorXd& bx, const VectorXd& by, const ConeVec& bz, VectorXd& dx, VectorXd& dy,
             ConeVec& dz) const {
    solve_once(bx, by, bz, dx, dy, dz);
    for (int r = 0; r < refine_steps; ++r) refine(bx, by, bz, dx, dy, dz);
  }

  int refine_steps = 2;

 private:
  // Iterative refinement on the full system.
  void refine(const VectorXd& bx, const VectorXd& by, const ConeVec& bz, VectorXd& dx, VectorXd& dy,
              ConeVec& dz) const {
    VectorXd rx = bx - apply_Gt(P_, dz);
    if (P_.A.rows()) rx -= P_.A.transpose() * dy;
    VectorXd ry = P_.A.rows() ? VectorXd(by - P_.A * dx) : VectorXd(0);
    ConeVec Gdx = apply_G(P_, dx);
    ConeVec Wdz = apply_Wt(W_, apply_W(W_, dz));
    ConeVec rz = bz;
    axpy(-1.0, Gdx, rz);
    axpy(1.0, Wdz, rz);
    VectorXd ex, ey;
    ConeVec ez;
    solve_once(rx, ry, rz, ex, ey, ez);
    dx += ex;
    if (dy.size()) dy += ey;
    axpy(1.0, ez, dz);
  }

  void solve_once(const VectorXd& bx, const VectorXd& by, const ConeVec& bz, VectorXd& dx,
                  VectorXd& dy, ConeVec& dz) const {
    VectorXd rhs = bx + apply_Gt(P_, apply_Winv2(W_, bz));
    VectorXd u = llt_.solve(rhs);
    if (P_.A.rows()) {
      dy = S_.solve(P_.A * u - by);
      dx = u - HiAt_ * dy;
    } else {
      dy.resize(0);
      dx = u;
    }
    ConeVec Gdx = apply_G(P_, dx);
    axpy(-1.0, bz, Gdx);
    dz = apply_Winv2(W_, Gdx);
  }

  const Problem& P_;
  const Scaling& W_;
  MatrixXd H_;
  Eigen::LLT<MatrixXd> llt_;
  MatrixXd HiAt_;
  Eigen::ColPivHouseholderQR<MatrixXd> S_;
};

}  // namespace detail

inline Solution solve(const Problem& P, const Options& opt = {}) {
  using namespace detail;
  const int nx = P.nx();
  const int ny = static_cast<int>(P.A.rows());
  if (P.Gl.rows() != P.nl() || (P.nl() && P.Gl.cols() != nx)) {
    throw std::invalid_argument("conic: Gl/hl shape mismatch");
  }
  if (P.Gs.size() != P.psd_sizes.size() || P.hs.size() != P.psd_sizes.size()) {
    throw std::invalid_argument("conic: PSD block data mismatch");
  }
  if (ny && (P.A.cols() != nx || P.b.size() != ny)) throw std::invalid_argument("conic: A/b shape mismatch");
  for (std::size_t k = 0; k < P.Gs.size(); ++k) {
    if (static_cast<int>(P.Gs[k].size()) != nx) throw std::invalid_argument("conic: Gs column count");
  }
  const VectorXd b = ny ? P.b : VectorXd(0);
  ConeVec h;
  h.l = P.hl;
  h.s = P.hs;
  const int cdeg = P.nl() + std::accumulate(P.psd_sizes.begin(), P.psd_sizes.end(), 0);

  const double resx0 = std::max(1.0, P.c.norm());
  const double resy0 = std::max(1.0, b.norm());
  const double resz0 = std::max(1.0, norm(h));

  Solution sol;
  VectorXd x, y;
  ConeVec s, z;
  {
    const Scaling I = identity_scaling(P);
    KKT kkt(P, I);
    ConeVec ds;
    kkt.solve(VectorXd::Zero(nx), b, h, x, y, ds);
    s = scaled(ds, -1.0);
    VectorXd x2;
    kkt.solve(-P.c, VectorXd::Zero(ny), zeros_like(P), x2, y, z);
    const ConeVec e = identity_like(P);
    const double ts = max_violation(s), tz = max_violation(z);
    if (ts >= -1e-8 * std::max(norm(s), 1.0)) axpy(1.0 + ts, e, s);
    if (tz >= -1e-8 * std::max(norm(z), 1.0)) axpy(1.0 + tz, e, z);
  }
  double tau = 1.0, kappa = 1.0;

  Scaling W;
  for (int it = 0; it <= opt.max_iter; ++it) {
    VectorXd hrx = -apply_Gt(P, z);
    if (ny) hrx -= P.A.transpose() * y;
    const VectorXd hry = ny ? VectorXd(P.A * x) : VectorXd(0);
    ConeVec hrz = apply_G(P, x);
    axpy(1.0, s, hrz);
    const double hresx = hrx.norm(), hresy = hry.norm(), hresz = norm(hrz);

    const VectorXd rx = -(hrx - P.c * tau);  // A'y + G'z + c tau
    const VectorXd ry = ny ? VectorXd(hry - b * tau) : VectorXd(0);
    ConeVec rz = hrz;
    axpy(-tau, h, rz);
    const double cx = P.c.dot(x), by = ny ? b.dot(y) : 0.0, hz = dot(h, z);
    const double rt = kappa + cx + by + hz;
    const double gap = dot(s, z);
    const double mu = (gap + kappa * tau) / (cdeg + 1);
    const double pcost = cx / tau, dcost = -(by + hz) / tau;
    double relgap = std::numeric_limits<double>::infinity();
    if (dcost < 0) relgap = gap / tau / -dcost;
    if (pcost > 0) relgap = gap / tau / pcost;
    const double pres = std::max(ry.norm() / tau / resy0, norm(rz) / tau / resz0);
    const double dres = rx.norm() / tau / resx0;
    const double pinfres = (hz + by < 0) ? hresx / resx0 / -(hz + by) : std::numeric_limits<double>::infinity();
    const double dinfres = (cx < 0) ? std::max(hresy / resy0, hresz / resz0) / -cx
                                    : std::numeric_limits<double>::infinity();

    auto fill = [&](Status st) {
      sol.status = st;
      sol.iterations = it;
      sol.pcost = pcost;
      sol.dcost = dcost;
      sol.gap = gap / tau / tau;
      sol.pres = pres;
      sol.dres = dres;
      sol.x = x / tau;
      sol.y = y / tau;
      sol.s = scaled(s, 1.0 / tau);
      sol.z = scaled(z, 1.0 / tau);
    };

    if (opt.verbose) {
      std::fprintf(stderr, "%3d pcost % .8e dcost % .8e gap %.2e pres %.2e dres %.2e tau %.2e kappa %.2e\n", it,
                   pcost, dcost, gap / tau / tau, pres, dres, tau, kappa);
    }
    if (pres <= opt.feastol && dres <= opt.feastol &&
        (gap / tau / tau <= opt.abstol || relgap <= opt.reltol)) {
      fill(Status::optimal);
      return sol;
    }
    if (pinfres <= opt.feastol) {
      fill(Status::primal_infeasible);
      const double f = -(hz + by);
      sol.y = y / f;
      sol.z = scaled(z, 1.0 / f);
      return sol;
    }
    if (dinfres <= opt.feastol) {
      fill(Status::dual_infeasible);
      sol.x = x / -cx;
      sol.s = scaled(s, 1.0 / -cx);
      return sol;
    }
    if (opt.stop) {
      fill(Status::optimal);
      if (opt.stop(sol)) return sol;
    }
    if (it == opt.max_iter) {
      fill(Status::max_iterations);
      return sol;
    }
    if (!compute_scaling(s, z, W)) {
      fill(Status::stalled);
      return sol;
    }
    const ConeVec lam = lambda_vec(W);
    const ConeVec lamsq = jordan(lam, lam);

    std::unique_ptr<KKT> kkt;
    try {
      kkt = std::make_unique<KKT>(P, W);
    } catch (const std::runtime_error&) {
      fill(Status::stalled);
      return sol;
    }
    VectorXd dx1, dy1;
    ConeVec dz1;
    kkt->solve(-P.c, b, h, dx1, dy1, dz1);
    const double den_base = P.c.dot(dx1) + (ny ? b.dot(dy1) : 0.0) + dot(h, dz1);

    VectorXd dx, dy;
    ConeVec dz, dsl, dzl;
    double dtau = 0, dkappa = 0;
    double sigma = 0.0;
    ConeVec corr = zeros_like(P);
    double corr_k = 0.0;
    bool failed = false;
    for (int pass = 0; pass < 2; ++pass) {
      const double eta = 1.0 - sigma;
      ConeVec rc = scaled(identity_like(P), sigma * mu);
      axpy(-1.0, lamsq, rc);
      axpy(-1.0, corr, rc);
      const double rk = sigma * mu - kappa * tau - corr_k;
      const ConeVec q = lambda_div(W, rc);
      ConeVec bz = scaled(rz, -eta);
      axpy(-1.0, apply_Wt(W, q), bz);
      VectorXd dx2, dy2;
      ConeVec dz2;
      kkt->solve(-eta * rx, -eta * ry, bz, dx2, dy2, dz2);
      const double num = -eta * rt - rk / tau -
                         (P.c.dot(dx2) + (ny ? b.dot(dy2) : 0.0) + dot(h, dz2));
      const double den = den_base - kappa / tau;
      if (!std::isfinite(num / den)) {
        failed = true;
        break;
      }
      dtau = num / den;
      dx = dx2 + dtau * dx1;
      dy = ny ? VectorXd(dy2 + dtau * dy1) : VectorXd(0);
      dz = dz2;
      axpy(dtau, dz1, dz);
      dkappa = (rk - kappa * dtau) / tau;
      dzl = apply_W(W, dz);
      dsl = q;
      axpy(-1.0, dzl, dsl);

      double amax = std::min(max_step(W, dsl), max_step(W, dzl));
      if (dtau < 0) amax = std::min(amax, -tau / dtau);
      if (dkappa < 0) amax = std::min(amax, -kappa / dkappa);
      if (pass == 0) {
        const double a = std::min(1.0, amax);
        sigma = std::pow(1.0 - a, 3);
        corr = jordan(dsl, dzl);
        corr_k = dkappa * dtau;
      } else {
        const double a = std::min(1.0, opt.step * amax);
        if (!(a > 1e-12)) {
          failed = true;
          break;
        }
        x += a * dx;
        if (ny) y += a * dy;
        axpy(a, dz, z);
        axpy(a, apply_Wt(W, dsl), s);
        tau += a * dtau;
        kappa += a * dkappa;
      }
    }
    if (failed) {
      fill(Status::stalled);
      return sol;
    }
  }
  return sol;
}

}  // namespace kroa::conic
