#pragma once

// Polynomial proxies with error models: Taylor polynomials with a remainder
// envelope c |x|^(s+1), and discrete minimax (Remez-type exchange) fits with
// a constant error bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kroa/dynamics.hpp"
#include "kroa/lp.hpp"
#include "kroa/polycore.hpp"

namespace kroa {

struct PolyApprox {
  enum class Model { taylor, minimax };

  SparsePoly P;
  Model model = Model::taylor;
  double c = 0.0;  // taylor: |f - P| <= c |x|^(s+1)
  int s = 1;
  double eps = 0.0;      // minimax: |f - P| <= eps (margin applied)
  double eps_bar = 0.0;  // minimax: discrete error before the margin
  bool flagged = false;  // minimax: round budget exhausted
  int rounds = 0;
  std::vector<double> eps_history;
  Box domain;

  /// Error envelope as a polynomial: c |x|^(s+1) or the constant eps.
  SparsePoly error_poly() const {
    const int n = P.dim();
    if (model == Model::taylor) return norm_power_poly(n, s) * c;
    return SparsePoly::constant(n, eps);
  }

  double error_bound(const Point& x) const {
    if (model == Model::taylor) return c * std::pow(x.norm(), s + 1);
    return eps;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = kroa::to_json(P);
    if (model == Model::taylor) {
      j["error_model"] = {{"type", "taylor"}, {"c", c}, {"s", s}};
    } else {
      j["error_model"] = {{"type", "minimax"}, {"eps", eps}, {"eps_bar", eps_bar},
                          {"flagged", flagged}, {"rounds", rounds}};
    }
    return j;
  }

  static PolyApprox from_json(const nlohmann::json& j) {
    PolyApprox a;
    a.P = poly_from_json(j);
    const auto& em = j.at("error_model");
    const std::string type = em.at("type").get<std::string>();
    if (type == "taylor") {
      a.model = Model::taylor;
      a.c = em.at("c").get<double>();
      a.s = em.at("s").get<int>();
    } else if (type == "minimax") {
      a.model = Model::minimax;
      a.eps = em.at("eps").get<double>();
      a.eps_bar = em.value("eps_bar", a.eps);
      a.flagged = em.value("flagged", false);
      a.rounds = em.value("rounds", 0);
    } else {
      throw std::invalid_argument("PolyApprox: unknown error model '" + type + "'");
    }
    return a;
  }
};

// ---------------------------------------------------------------------------
// Taylor

inline PolyApprox taylor_approx(const ScalarField& f, int s, double c, const Box& domain) {
  if (s < 1 || s % 2 == 0) throw std::invalid_argument("taylor_approx: order s must be odd and >= 1");
  if (!(c >= 0.0)) throw std::invalid_argument("taylor_approx: remainder constant must be >= 0");
  PolyApprox a;
  a.P = f.taylor(s);
  if (a.P.dim() != domain.dim()) a.P = SparsePoly(domain.dim()) + a.P;
  a.model = PolyApprox::Model::taylor;
  a.c = c;
  a.s = s;
  a.domain = domain;
  return a;
}

/// Rounding noise level of the residual f(x) - P(x).
inline double residual_noise(double fx, const SparsePoly& P, const Point& x) {
  return 64.0 * std::numeric_limits<double>::epsilon() * (std::abs(fx) + P.eval_abs(x));
}

/// margin * max over a tensor grid (density points per axis, origin
/// excluded) of |f - P| / |x|^(s+1). Points whose residual is below the
/// rounding noise level carry no information and are skipped.
inline double estimate_taylor_constant(const std::function<double(const Point&)>& f, const SparsePoly& P, int s,
                                       const Box& domain, int density = 200, double margin = 1.5) {
  if (density < 2) throw std::invalid_argument("estimate_taylor_constant: density must be >= 2");
  const int n = domain.dim();
  long total = 1;
  for (int j = 0; j < n; ++j) total *= density;
  double best = 0.0;
  Point x(n);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int j = 0; j < n; ++j) {
      const long t = rem % density;
      rem /= density;
      x[j] = domain.lo[j] + (domain.hi[j] - domain.lo[j]) * static_cast<double>(t) / (density - 1);
    }
    const double r = x.norm();
    if (r == 0.0) continue;
    const double fx = f(x);
    const double err = std::abs(fx - P.eval(x));
    if (err <= residual_noise(fx, P, x)) continue;
    const double ratio = err / std::pow(r, s + 1);
    if (!std::isfinite(ratio)) throw std::domain_error("estimate_taylor_constant: non-finite ratio");
    best = std::max(best, ratio);
  }
  return margin * best;
}

// ---------------------------------------------------------------------------
// Minimax

struct RemezOptions {
  double tol = 1e-3;
  int max_rounds = 30;
  std::uint64_t seed = 0;
  double margin = 1.5;
  /// Coefficients of total degree below this are forced to zero.
  int min_degree = 0;
  /// Random points per round as a multiple of the initial node count.
  int sample_factor = 50;
  int max_nodes_initial = 2000;
};

/// Tensor-product Chebyshev polynomials T_alpha((2x - lo - hi)/(hi - lo)) as
/// SparsePolys in x, one per multi-index of total degree <= d.
inline std::vector<SparsePoly> chebyshev_basis(const Box& box, int d) {
  const int n = box.dim();
  std::vector<std::vector<SparsePoly>> T(n);
  for (int j = 0; j < n; ++j) {
    const double a = 2.0 / (box.hi[j] - box.lo[j]);
    const double b = -(box.hi[j] + box.lo[j]) / (box.hi[j] - box.lo[j]);
    const SparsePoly t = SparsePoly::variable(n, j) * a + SparsePoly::constant(n, b);
    T[j].push_back(SparsePoly::constant(n, 1.0));
    if (d >= 1) T[j].push_back(t);
    for (int k = 2; k <= d; ++k) T[j].push_back(t * T[j][k - 1] * 2.0 - T[j][k - 2]);
  }
  std::vector<SparsePoly> out;
  for (const auto& a : monomials_up_to(n, d)) {
    SparsePoly p = SparsePoly::constant(n, 1.0);
    for (int j = 0; j < n; ++j) {
      if (a[j]) p = p * T[j][a[j]];
    }
    out.push_back(std::move(p));
  }
  return out;
}

namespace detail {

inline Eigen::VectorXd cheb_row(const Box& box, const std::vector<MultiIndex>& alphas, int d, const Point& x) {
  const int n = box.dim();
  Eigen::MatrixXd tv(n, d + 1);
  for (int j = 0; j < n; ++j) {
    const double t = (2.0 * x[j] - box.lo[j] - box.hi[j]) / (box.hi[j] - box.lo[j]);
    tv(j, 0) = 1.0;
    if (d >= 1) tv(j, 1) = t;
    for (int k = 2; k <= d; ++k) tv(j, k) = 2.0 * t * tv(j, k - 1) - tv(j, k - 2);
  }
  Eigen::VectorXd row(alphas.size());
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    double v = 1.0;
    for (int j = 0; j < n; ++j) v *= tv(j, alphas[i][j]);
    row[i] = v;
  }
  return row;
}

}  // namespace detail

/// Initial nodes: tensor grid of 1-D Chebyshev points, p per axis with
/// p = max(d + 1, floor(max_nodes^(1/n))).
inline std::vector<Point> chebyshev_nodes(const Box& box, int d, int max_nodes = 2000) {
  const int n = box.dim();
  int p = static_cast<int>(std::floor(std::pow(static_cast<double>(max_nodes), 1.0 / n) + 1e-9));
  p = std::max(p, d + 1);
  long total = 1;
  for (int j = 0; j < n; ++j) total *= p;
  std::vector<Point> nodes;
  nodes.reserve(total);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    Point x(n);
    for (int j = 0; j < n; ++j) {
      const long k = rem % p;
      rem /= p;
      const double t = std::cos(M_PI * (2.0 * k + 1.0) / (2.0 * p));
      x[j] = 0.5 * (box.lo[j] + box.hi[j]) + 0.5 * (box.hi[j] - box.lo[j]) * t;
    }
    nodes.push_back(std::move(x));
  }
  return nodes;
}

/// Discrete minimax fit: solve the LP on the node set, add random violators,
/// repeat. Returns eps = margin * eps_bar, or 2 * (max observed residual)
/// with `flagged` when the round budget runs out.
inline PolyApprox remez_minimax(const std::function<double(const Point&)>& f, int d, const Box& domain,
                                const RemezOptions& opt = {}) {
  if (d < 0) throw std::invalid_argument("remez_minimax: degree must be >= 0");
  if (opt.min_degree > d) throw std::invalid_argument("remez_minimax: min_degree exceeds degree");
  const int n = domain.dim();
  const std::vector<MultiIndex> alphas = monomials_up_to(n, d);
  const int N = static_cast<int>(alphas.size());
  const std::vector<SparsePoly> cheb = chebyshev_basis(domain, d);

  // Equalities removing low-degree monomial content.
  std::vector<MultiIndex> low = opt.min_degree > 0 ? monomials_up_to(n, opt.min_degree - 1) : std::vector<MultiIndex>{};
  Eigen::MatrixXd Aeq = Eigen::MatrixXd::Zero(low.size(), N + 1);
  for (std::size_t r = 0; r < low.size(); ++r) {
    for (int i = 0; i < N; ++i) Aeq(r, i) = cheb[i].coeff(low[r]);
  }

  std::vector<Point> nodes = chebyshev_nodes(domain, d, opt.max_nodes_initial);
  std::vector<double> fvals;
  std::vector<Eigen::VectorXd> rows;
  auto add_node = [&](const Point& x) {
    const double fx = f(x);
    if (!std::isfinite(fx)) throw std::runtime_error("remez_minimax: non-finite function value");
    fvals.push_back(fx);
    rows.push_back(detail::cheb_row(domain, alphas, d, x));
  };
  for (const auto& x : nodes) add_node(x);
  const int R = opt.sample_factor * static_cast<int>(nodes.size());

  std::mt19937_64 rng(opt.seed);
  std::vector<std::uniform_real_distribution<double>> dist;
  for (int j = 0; j < n; ++j) dist.emplace_back(domain.lo[j], domain.hi[j]);

  PolyApprox out;
  out.model = PolyApprox::Model::minimax;
  out.domain = domain;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(N);
  double eps_bar = 0.0, max_seen = 0.0;
  bool converged = false;
  for (int round = 1; round <= opt.max_rounds; ++round) {
    const int K = static_cast<int>(rows.size());
    LinearProgram lp;
    lp.c = Eigen::VectorXd::Zero(N + 1);
    lp.c[N] = 1.0;
    lp.A_ub.resize(2 * K, N + 1);
    lp.b_ub.resize(2 * K);
    for (int k = 0; k < K; ++k) {
      // f - P <= eps  and  P - f <= eps
      lp.A_ub.row(2 * k).head(N) = -rows[k].transpose();
      lp.A_ub(2 * k, N) = -1.0;
      lp.b_ub[2 * k] = -fvals[k];
      lp.A_ub.row(2 * k + 1).head(N) = rows[k].transpose();
      lp.A_ub(2 * k + 1, N) = -1.0;
      lp.b_ub[2 * k + 1] = fvals[k];
    }
    if (Aeq.rows()) {
      lp.A_eq = Aeq;
      lp.b_eq = Eigen::VectorXd::Zero(Aeq.rows());
    }
    const LpResult res = solve_lp(lp);
    coef = res.x.head(N);
    double eb = 0.0;
    for (int k = 0; k < K; ++k) eb = std::max(eb, std::abs(fvals[k] - rows[k].dot(coef)));
    eps_bar = std::max(eps_bar, eb);
    out.eps_history.push_back(eps_bar);
    out.rounds = round;
    max_seen = std::max(max_seen, eps_bar);

    // Random violator search.
    std::vector<std::pair<double, Point>> viol;
    const double thr = eps_bar * (1.0 + opt.tol);
    for (int r = 0; r < R; ++r) {
      Point x(n);
      for (int j = 0; j < n; ++j) x[j] = dist[j](rng);
      const double fx = f(x);
      if (!std::isfinite(fx)) throw std::runtime_error("remez_minimax: non-finite function value");
      const double e = std::abs(fx - detail::cheb_row(domain, alphas, d, x).dot(coef));
      max_seen = std::max(max_seen, e);
      if (e > thr) viol.emplace_back(e, std::move(x));
    }
    if (viol.empty()) {
      converged = true;
      break;
    }
    const std::size_t keep = std::min<std::size_t>(viol.size(), std::max(N, 100));
    std::partial_sort(viol.begin(), viol.begin() + keep, viol.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; k < keep; ++k) add_node(viol[k].second);
  }

  SparsePoly P(n);
  for (int i = 0; i < N; ++i) {
    if (coef[i] != 0.0) P += cheb[i] * coef[i];
  }
  if (opt.min_degree > 0) P = P.drop_below(opt.min_degree);
  out.P = std::move(P);
  out.eps_bar = eps_bar;
  out.flagged = !converged;
  out.eps = converged ? opt.margin * eps_bar : 2.0 * max_seen;
  return out;
}

/// Counts points among `samples` fresh uniform draws where the error model
/// is violated beyond rounding noise.
struct ErrorModelCheck {
  long violations = 0;
  double worst_ratio = 0.0;  // max |f - P| / bound
  Point witness;
};

inline ErrorModelCheck check_error_model(const std::function<double(const Point&)>& f, const PolyApprox& a,
                                         long samples, std::uint64_t seed) {
  const Box& box = a.domain;
  const int n = box.dim();
  std::mt19937_64 rng(seed);
  std::vector<std::uniform_real_distribution<double>> dist;
  for (int j = 0; j < n; ++j) dist.emplace_back(box.lo[j], box.hi[j]);
  const CompiledPoly P(a.P);
  ErrorModelCheck out;
  for (long k = 0; k < samples; ++k) {
    Point x(n);
    for (int j = 0; j < n; ++j) x[j] = dist[j](rng);
    const double fx = f(x);
    const double err = std::abs(fx - P(x));
    const double bound = a.error_bound(x);
    const double noise = residual_noise(fx, a.P, x);
    if (err > bound + noise) {
      ++out.violations;
      if (out.witness.size() == 0) out.witness = x;
    }
    if (bound > 0) out.worst_ratio = std::max(out.worst_ratio, err / bound);
  }
  return out;
}

}  // namespace kroa
