#pragma once

// SOS certification of the annulus {g1 <= V <= g2}: for every sign pattern r,
//   P_r = -R_r - s1 (V - g1) - s2 (g2 - V)
// must be SOS with SOS multipliers s1, s2. Each query is an SDP feasibility
// problem over Gram matrices.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kroa/levels.hpp"
#include "kroa/polycore.hpp"
#include "kroa/sdp.hpp"
#include "kroa/validity.hpp"

namespace kroa {

struct SosProgram {
  SparsePoly V;
  std::vector<SparsePoly> R;
  double g1 = 0.0;
  double g2 = 1.0;
  int d_sigma1 = 0;
  int d_sigma2 = 0;
  bool per_pattern = false;  // separate multipliers for every pattern
};

/// Gram layout of an instance built by sos_to_sdp.
struct SosLayout {
  std::vector<MultiIndex> z_sigma1, z_sigma2, z_P;
  std::vector<int> pattern_of_R;  // distinct R index -> first pattern
  int blocks_per_pattern = 1;
  // Block indices: sigma blocks then P blocks, per distinct R.
  std::vector<int> b_sigma1, b_sigma2, b_P;
  int half_degree = 0;
};

inline int default_sigma_degree(const SparsePoly& V, const std::vector<SparsePoly>& R) {
  int dR = 0;
  for (const auto& r : R) dR = std::max(dR, r.degree());
  int d = std::max(0, dR - V.degree());
  return d + (d % 2);
}

namespace detail {

inline MultiIndex add_alpha(const MultiIndex& a, const MultiIndex& b) {
  MultiIndex c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

// Adds the Gram coefficients of z' Q z * q to the rows indexed by monomial.
inline void add_gram_times(std::map<MultiIndex, std::vector<SdpEntry>, GradedLex>& rows, int block,
                           const std::vector<MultiIndex>& z, const SparsePoly& q) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = i; j < z.size(); ++j) {
      const MultiIndex zz = add_alpha(z[i], z[j]);
      for (const auto& [a, c] : q.terms()) {
        rows[add_alpha(zz, a)].push_back({block, static_cast<int>(i), static_cast<int>(j), c});
      }
    }
  }
}

}  // namespace detail

inline SdpInstance sos_to_sdp(const SosProgram& prog, SosLayout* layout_out = nullptr) {
  const int n = prog.V.dim();
  if (prog.R.empty()) throw std::invalid_argument("sos_to_sdp: no R polynomials");
  if (prog.d_sigma1 < 0 || prog.d_sigma2 < 0 || prog.d_sigma1 % 2 || prog.d_sigma2 % 2) {
    throw std::invalid_argument("sos_to_sdp: multiplier degrees must be even and >= 0");
  }
  if (!(prog.g1 >= 0.0) || !(prog.g2 > prog.g1)) throw std::invalid_argument("sos_to_sdp: need 0 <= g1 < g2");
  for (const auto& r : prog.R) {
    if (r.dim() != n) throw std::invalid_argument("sos_to_sdp: dimension mismatch");
  }
  const std::vector<SparsePoly> R = distinct_patterns(prog.R);
  const int dV = prog.V.degree();
  int dR = 0;
  for (const auto& r : R) dR = std::max(dR, r.degree());
  const int dS = std::max(prog.d_sigma1, prog.d_sigma2) + dV;
  if (dR % 2 == 1 && dR > dS) {
    throw std::invalid_argument("sos_to_sdp: odd leading degree " + std::to_string(dR) +
                                " of R cannot be matched by the multipliers; raise their degree");
  }
  const int h = (std::max(dR, dS) + 1) / 2;

  // With g1 = 0 the identity at the origin forces s2(0) = 0 and P(0) = 0.
  const bool reduce = prog.g1 == 0.0;
  SosLayout L;
  L.half_degree = h;
  L.z_sigma1 = monomials_up_to(n, prog.d_sigma1 / 2);
  L.z_sigma2 = monomials_up_to(n, prog.d_sigma2 / 2, reduce ? 1 : 0);
  L.z_P = monomials_up_to(n, h, reduce ? 1 : 0);

  SdpInstance inst;
  const SparsePoly Vm1 = prog.V - SparsePoly::constant(n, prog.g1);
  const SparsePoly Vm2 = SparsePoly::constant(n, prog.g2) - prog.V;
  auto new_block = [&](std::size_t size) {
    inst.block_sizes.push_back(static_cast<int>(size));
    return static_cast<int>(inst.block_sizes.size()) - 1;
  };
  int s1 = -1, s2 = -1;
  for (std::size_t k = 0; k < R.size(); ++k) {
    std::map<MultiIndex, std::vector<SdpEntry>, GradedLex> rows;
    for (const auto& a : monomials_up_to(n, 2 * h)) rows[a];
    if (k == 0 || prog.per_pattern) {
      s1 = L.z_sigma1.empty() ? -1 : new_block(L.z_sigma1.size());
      s2 = L.z_sigma2.empty() ? -1 : new_block(L.z_sigma2.size());
      L.b_sigma1.push_back(s1);
      L.b_sigma2.push_back(s2);
    }
    const int bp = L.z_P.empty() ? -1 : new_block(L.z_P.size());
    L.b_P.push_back(bp);
    if (s1 >= 0) detail::add_gram_times(rows, s1, L.z_sigma1, Vm1);
    if (s2 >= 0) detail::add_gram_times(rows, s2, L.z_sigma2, Vm2);
    if (bp >= 0) detail::add_gram_times(rows, bp, L.z_P, SparsePoly::constant(n, 1.0));
    for (const auto& [a, c] : R[k].terms()) {
      if (!rows.count(a)) throw std::logic_error("sos_to_sdp: monomial outside the Gram span");
    }
    for (auto& [a, entries] : rows) {
      inst.rows.push_back(std::move(entries));
      inst.rhs.push_back(-R[k].coeff(a));
    }
  }
  if (layout_out) *layout_out = std::move(L);
  return inst;
}

/// z' Q z as a polynomial.
inline SparsePoly gram_poly(int n, const std::vector<MultiIndex>& z, const Eigen::MatrixXd& Q) {
  SparsePoly p(n);
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = 0; j < z.size(); ++j) {
      p.add_term(detail::add_alpha(z[i], z[j]), Q(i, j));
    }
  }
  p.prune();
  return p;
}

struct SosCheck {
  double identity_residual = 0.0;  // max coefficient residual / max |coeff R|
  double min_gram_eig = 0.0;
};

/// Rebuilds P_r + s1 (V - g1) + s2 (g2 - V) + R_r from a witness.
inline SosCheck check_sos_witness(const SosProgram& prog, const SosLayout& L, const std::vector<Eigen::MatrixXd>& X) {
  const int n = prog.V.dim();
  const std::vector<SparsePoly> R = distinct_patterns(prog.R);
  SosCheck out;
  for (const auto& M : X) out.min_gram_eig = std::min(out.min_gram_eig, min_eigenvalue(M));
  const SparsePoly Vm1 = prog.V - SparsePoly::constant(n, prog.g1);
  const SparsePoly Vm2 = SparsePoly::constant(n, prog.g2) - prog.V;
  for (std::size_t k = 0; k < R.size(); ++k) {
    const std::size_t ks = prog.per_pattern ? k : 0;
    SparsePoly id = R[k];
    if (L.b_sigma1[ks] >= 0) id += gram_poly(n, L.z_sigma1, X[L.b_sigma1[ks]]) * Vm1;
    if (L.b_sigma2[ks] >= 0) id += gram_poly(n, L.z_sigma2, X[L.b_sigma2[ks]]) * Vm2;
    if (L.b_P[k] >= 0) id += gram_poly(n, L.z_P, X[L.b_P[k]]);
    const double scale = std::max(1.0, R[k].max_abs_coeff());
    out.identity_residual = std::max(out.identity_residual, id.max_abs_coeff() / scale);
  }
  return out;
}

struct SosOptions {
  int d_sigma1 = -1;  // -1: default degree
  int d_sigma2 = -1;
  bool per_pattern = false;
  SdpOptions sdp;
  LevelSearchOptions levels;
  int cap_samples_per_face = 1000;
  double witness_tol = 1e-6;
};

struct SosCertification {
  LevelSearchResult search;
  int d_sigma1 = 0;
  int d_sigma2 = 0;
  long feasible_probes = 0;
  long unknown_probes = 0;
  double worst_identity_residual = 0.0;
  double worst_gram_eig = 0.0;
  double seconds = 0.0;

  nlohmann::json diagnostics() const {
    return {{"feasible_probes", feasible_probes},
            {"unknown_probes", unknown_probes},
            {"worst_identity_residual", worst_identity_residual},
            {"worst_gram_eig", worst_gram_eig},
            {"probes", static_cast<long>(search.probes.size())},
            {"cap", search.cap}};
  }
};

/// One feasibility query. Unknown and infeasible both count as not
/// certified; a feasible answer must also pass the identity check.
inline bool sos_feasible(const SosProgram& prog, const SosOptions& opt, SosCertification* diag = nullptr) {
  SosLayout L;
  const SdpInstance inst = sos_to_sdp(prog, &L);
  const SdpResult res = solve_sdp(inst, opt.sdp);
  if (res.status == SdpStatus::unknown && diag) ++diag->unknown_probes;
  if (res.status != SdpStatus::feasible) return false;
  const SosCheck chk = check_sos_witness(prog, L, res.X);
  if (diag) {
    ++diag->feasible_probes;
    diag->worst_identity_residual = std::max(diag->worst_identity_residual, chk.identity_residual);
    diag->worst_gram_eig = std::min(diag->worst_gram_eig, chk.min_gram_eig);
  }
  return chk.identity_residual <= opt.witness_tol && chk.min_gram_eig >= -opt.witness_tol;
}

inline SosCertification certify_levels_sos(const ValiditySystem& vs, const SosOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  SosCertification out;
  SosProgram prog;
  prog.V = vs.V;
  prog.R = vs.R;
  prog.per_pattern = opt.per_pattern;
  const int d = default_sigma_degree(vs.V, vs.R);
  prog.d_sigma1 = out.d_sigma1 = opt.d_sigma1 >= 0 ? opt.d_sigma1 : d;
  prog.d_sigma2 = out.d_sigma2 = opt.d_sigma2 >= 0 ? opt.d_sigma2 : d;
  const CompiledPoly Vc(vs.V);
  const double cap = boundary_cap([&](const Point& x) { return Vc(x); }, vs.domain, opt.cap_samples_per_face);
  out.search = search_levels(
      cap,
      [&](double g1, double g2) {
        prog.g1 = g1;
        prog.g2 = g2;
        return sos_feasible(prog, opt, &out);
      },
      opt.levels);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace kroa
