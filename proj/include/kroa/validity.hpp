#pragma once

// Semi-algebraic inner approximation of {x : dV/dt < 0}: one polynomial
//   R_r = grad V . P + sum_j (-1)^{r_j} dV/dx_j eps_j
// per sign pattern r in {0,1}^n.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kroa/dynamics.hpp"
#include "kroa/polyapprox.hpp"
#include "kroa/polycore.hpp"

namespace kroa {

constexpr int kMaxValidityDim = 16;

struct ValiditySystem {
  SparsePoly V;
  std::vector<SparsePoly> gradV;
  std::vector<SparsePoly> P;    // field proxy per component
  std::vector<SparsePoly> eps;  // error envelope per component
  std::vector<std::string> models;
  std::vector<SparsePoly> R;  // index bit j set <=> r_j = 1
  Box domain;

  int dim() const { return V.dim(); }
  int patterns() const { return static_cast<int>(R.size()); }

  /// grad V . P + sum_j |dV/dx_j| eps_j, the absolute-value form of max_R.
  double abs_form(const Point& x) const {
    double s = 0.0;
    for (int j = 0; j < dim(); ++j) {
      const double g = gradV[j].eval(x);
      s += g * P[j].eval(x) + std::abs(g) * eps[j].eval(x);
    }
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["V"] = kroa::to_json(V);
    j["models"] = models;
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : R) rs.push_back(kroa::to_json(r));
    j["R"] = rs;
    return j;
  }
};

inline ValiditySystem build_validity_system(const SparsePoly& V, const std::vector<PolyApprox>& approx,
                                            const Box& domain) {
  const int n = V.dim();
  if (n < 1 || n > kMaxValidityDim) throw std::invalid_argument("build_validity_system: unsupported dimension");
  if (static_cast<int>(approx.size()) != n) {
    throw std::invalid_argument("build_validity_system: need one approximation per component");
  }
  if (domain.dim() != n) throw std::invalid_argument("build_validity_system: domain dimension mismatch");
  ValiditySystem vs;
  vs.V = V;
  vs.gradV = V.gradient();
  vs.domain = domain;
  for (const auto& a : approx) {
    if (a.P.dim() != n) throw std::invalid_argument("build_validity_system: proxy dimension mismatch");
    if (a.model == PolyApprox::Model::taylor && a.s % 2 == 0) {
      throw std::invalid_argument("build_validity_system: Taylor order must be odd");
    }
    vs.P.push_back(a.P);
    vs.eps.push_back(a.error_poly());
    vs.models.push_back(a.model == PolyApprox::Model::taylor ? "taylor" : "minimax");
  }
  SparsePoly base(n);
  std::vector<SparsePoly> corr;
  for (int j = 0; j < n; ++j) {
    base += vs.gradV[j] * vs.P[j];
    corr.push_back(vs.gradV[j] * vs.eps[j]);
  }
  const int np = 1 << n;
  for (int r = 0; r < np; ++r) {
    SparsePoly R = base;
    for (int j = 0; j < n; ++j) {
      if (corr[j].is_zero()) continue;
      if (r >> j & 1) {
        R -= corr[j];
      } else {
        R += corr[j];
      }
    }
    vs.R.push_back(std::move(R));
  }
  return vs;
}

/// Exact polynomial field, no approximation error.
inline std::vector<PolyApprox> exact_proxies(const VectorField& F) {
  std::vector<PolyApprox> out;
  for (const auto& p : F.polys()) {
    PolyApprox a;
    a.P = p;
    a.model = PolyApprox::Model::taylor;
    a.c = 0.0;
    a.s = 1;
    a.domain = F.domain();
    out.push_back(std::move(a));
  }
  return out;
}

/// Deduplicated R list (exact fields give identical patterns).
inline std::vector<SparsePoly> distinct_patterns(const std::vector<SparsePoly>& R) {
  std::vector<SparsePoly> out;
  for (const auto& r : R) {
    if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  return out;
}

inline double max_R(const ValiditySystem& vs, const Point& x) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& R : vs.R) m = std::max(m, R.eval(x));
  return m;
}

}  // namespace kroa
