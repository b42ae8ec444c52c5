#pragma once

// Vector fields on axis-aligned boxes: polynomial or black-box components,
// Jacobian at the equilibrium, rescaling onto [-1, 1]^n, fixed-step RK4 and
// the benchmark systems.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kroa/polycore.hpp"

namespace kroa {

struct Box {
  Point lo;
  Point hi;

  Box() = default;
  Box(Point lo_, Point hi_) : lo(std::move(lo_)), hi(std::move(hi_)) { validate(); }

  static Box cube(int n, double half_side) {
    return Box(Point::Constant(n, -half_side), Point::Constant(n, half_side));
  }

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const { return (hi - lo).prod(); }
  double diameter() const { return (hi - lo).norm(); }
  bool contains(const Point& x, double slack = 0.0) const {
    for (int j = 0; j < dim(); ++j) {
      if (x[j] < lo[j] - slack || x[j] > hi[j] + slack) return false;
    }
    return true;
  }
  bool origin_interior() const {
    for (int j = 0; j < dim(); ++j) {
      if (!(lo[j] < 0.0 && hi[j] > 0.0)) return false;
    }
    return true;
  }

  void validate() const {
    if (lo.size() != hi.size()) throw std::invalid_argument("Box: lo/hi size mismatch");
    for (int j = 0; j < lo.size(); ++j) {
      if (!(lo[j] < hi[j])) throw std::invalid_argument("Box: require lo < hi componentwise");
    }
  }
};

/// One component F_i of a vector field.
///
/// Polynomial components carry `poly`; black-box components carry `eval`,
/// `grad` and optionally a Maclaurin series provider `series(order)`.
struct ScalarField {
  std::optional<SparsePoly> poly;
  std::function<double(const Point&)> eval_fn;
  std::function<Point(const Point&)> grad_fn;
  std::function<SparsePoly(int)> series;
  std::string label;

  static ScalarField polynomial(SparsePoly p, std::string label = {}) {
    ScalarField f;
    f.poly = std::move(p);
    f.label = std::move(label);
    return f;
  }

  bool is_polynomial() const { return poly.has_value(); }

  double operator()(const Point& x) const {
    if (poly) return poly->eval(x);
    return eval_fn(x);
  }

  Point gradient(const Point& x) const {
    if (poly) {
      Point g(x.size());
      for (int j = 0; j < x.size(); ++j) g[j] = poly->partial(j).eval(x);
      return g;
    }
    if (grad_fn) return grad_fn(x);
    // Central differences fallback.
    Point g(x.size());
    const double h = 1e-6;
    for (int j = 0; j < x.size(); ++j) {
      Point xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      g[j] = (eval_fn(xp) - eval_fn(xm)) / (2 * h);
    }
    return g;
  }

  /// Taylor polynomial at 0 of total order `order`.
  SparsePoly taylor(int order) const {
    if (poly) return poly->truncate(order);
    if (!series) {
      throw std::invalid_argument("no series provider for black-box component '" + label + "'");
    }
    return series(order);
  }
};

class VectorField {
 public:
  VectorField() = default;
  VectorField(std::vector<ScalarField> components, Box domain, std::string name = {})
      : comps_(std::move(components)), domain_(std::move(domain)), name_(std::move(name)) {
    if (static_cast<int>(comps_.size()) != domain_.dim()) {
      throw std::invalid_argument("VectorField: component count differs from domain dimension");
    }
    for (const auto& c : comps_) {
      if (c.poly && c.poly->dim() != dim()) {
        throw std::invalid_argument("VectorField: polynomial component dimension mismatch");
      }
      if (!c.poly && !c.eval_fn) {
        throw std::invalid_argument("VectorField: component without evaluator");
      }
    }
  }

  static VectorField polynomial(std::vector<SparsePoly> comps, Box domain, std::string name = {}) {
    std::vector<ScalarField> fs;
    for (auto& p : comps) fs.push_back(ScalarField::polynomial(std::move(p)));
    return VectorField(std::move(fs), std::move(domain), std::move(name));
  }

  int dim() const { return static_cast<int>(comps_.size()); }
  const Box& domain() const { return domain_; }
  const std::string& name() const { return name_; }
  const ScalarField& component(int i) const { return comps_.at(i); }
  const std::vector<ScalarField>& components() const { return comps_; }

  bool is_polynomial() const {
    for (const auto& c : comps_) {
      if (!c.is_polynomial()) return false;
    }
    return true;
  }

  std::vector<SparsePoly> polys() const {
    std::vector<SparsePoly> out;
    for (const auto& c : comps_) {
      if (!c.poly) throw std::invalid_argument("VectorField::polys: non-polynomial component");
      out.push_back(*c.poly);
    }
    return out;
  }

  Point operator()(const Point& x) const {
    Point f(dim());
    for (int i = 0; i < dim(); ++i) f[i] = comps_[i](x);
    return f;
  }

  /// Equilibrium check F(0) = 0.
  double residual_at_origin() const { return (*this)(Point::Zero(dim())).cwiseAbs().maxCoeff(); }

 private:
  std::vector<ScalarField> comps_;
  Box domain_;
  std::string name_;
};

/// Jacobian at 0: exact for polynomial components, central differences
/// (step 1e-6) otherwise.
inline Eigen::MatrixXd jacobian_at_origin(const VectorField& F) {
  const int n = F.dim();
  Eigen::MatrixXd J(n, n);
  const Point zero = Point::Zero(n);
  for (int i = 0; i < n; ++i) {
    const auto& c = F.component(i);
    if (c.poly) {
      for (int j = 0; j < n; ++j) {
        MultiIndex a(n, 0);
        a[j] = 1;
        J(i, j) = c.poly->coeff(a);
      }
    } else {
      const double h = 1e-6;
      for (int j = 0; j < n; ++j) {
        Point xp = zero, xm = zero;
        xp[j] = h;
        xm[j] = -h;
        const double fp = c(xp), fm = c(xm);
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
          throw std::runtime_error("jacobian_at_origin: black-box evaluation failed near 0");
        }
        J(i, j) = (fp - fm) / (2 * h);
      }
    }
  }
  return J;
}

/// Pure per-axis scaling x = D y, recorded for mapping results back.
struct AffineMap {
  Point scale;

  Point to_original(const Point& y) const { return scale.cwiseProduct(y); }
  Point to_rescaled(const Point& x) const { return x.cwiseQuotient(scale); }
};

struct RescaledField {
  VectorField field;
  AffineMap map;
};

/// G(y) = D^{-1} F(D y) with D = diag(max(|lo_i|, |hi_i|)); domain becomes
/// the image of the original box (a subset of [-1, 1]^n).
inline RescaledField rescale_to_unit_box(const VectorField& F) {
  const Box& box = F.domain();
  if (!box.origin_interior()) {
    throw std::invalid_argument("rescale_to_unit_box: origin is not interior to the domain");
  }
  const int n = F.dim();
  Point s(n);
  for (int j = 0; j < n; ++j) s[j] = std::max(std::abs(box.lo[j]), std::abs(box.hi[j]));
  const Point zero = Point::Zero(n);
  std::vector<ScalarField> comps;
  for (int i = 0; i < n; ++i) {
    const ScalarField& c = F.component(i);
    const double inv = 1.0 / s[i];
    ScalarField g;
    g.label = c.label;
    if (c.poly) {
      g.poly = c.poly->affine_substitute(s, zero) * inv;
    } else {
      auto f = c.eval_fn;
      g.eval_fn = [f, s, inv](const Point& y) { return f(s.cwiseProduct(y)) * inv; };
      if (c.grad_fn) {
        auto gf = c.grad_fn;
        g.grad_fn = [gf, s, inv](const Point& y) -> Point {
          return (gf(s.cwiseProduct(y)).cwiseProduct(s) * inv).eval();
        };
      }
      if (c.series) {
        // Truncation at a total order commutes with diagonal scaling.
        auto ser = c.series;
        g.series = [ser, s, zero, inv](int order) {
          return ser(order).affine_substitute(s, zero) * inv;
        };
      }
    }
    comps.push_back(std::move(g));
  }
  Box unit(box.lo.cwiseQuotient(s), box.hi.cwiseQuotient(s));
  return {VectorField(std::move(comps), unit, F.name()), AffineMap{s}};
}

// ---------------------------------------------------------------------------
// Integration

struct Trajectory {
  std::vector<double> t;
  std::vector<Point> x;
  bool diverged = false;
};

inline Point rk4_step(const VectorField& F, const Point& x, double h) {
  const Point k1 = F(x);
  const Point k2 = F(x + 0.5 * h * k1);
  const Point k3 = F(x + 0.5 * h * k2);
  const Point k4 = F(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Classical RK4 with fixed step; flags divergence when ||x|| exceeds
/// 10 * diam(domain).
inline Trajectory integrate(const VectorField& F, const Point& x0, double T, double h) {
  if (!(h > 0.0) || !(T >= h)) throw std::invalid_argument("integrate: require h > 0 and T >= h");
  if (x0.size() != F.dim()) throw std::invalid_argument("integrate: dimension mismatch");
  const double escape = 10.0 * F.domain().diameter();
  const long steps = std::lround(std::ceil(T / h - 1e-9));
  Trajectory tr;
  tr.t.reserve(steps + 1);
  tr.x.reserve(steps + 1);
  tr.t.push_back(0.0);
  tr.x.push_back(x0);
  Point x = x0;
  for (long k = 1; k <= steps; ++k) {
    const double hk = std::min(h, T - (k - 1) * h);
    x = rk4_step(F, x, hk);
    if (!x.allFinite()) throw std::runtime_error("integrate: non-finite state");
    tr.t.push_back(std::min(T, k * h));
    tr.x.push_back(x);
    if (x.norm() > escape) {
      tr.diverged = true;
      break;
    }
  }
  return tr;
}

/// Integrates until `stop(t, x)` returns true or T is reached; returns the
/// stopping time (or +inf) and leaves the final state in x.
template <typename Stop>
double integrate_until(const VectorField& F, Point& x, double T, double h, Stop&& stop) {
  double t = 0.0;
  if (stop(t, x)) return t;
  while (t < T) {
    x = rk4_step(F, x, h);
    t += h;
    if (!x.allFinite()) return std::numeric_limits<double>::infinity();
    if (stop(t, x)) return t;
  }
  return std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------------------
// Maclaurin series of the elementary functions used by the benchmarks,
// composed exactly with a polynomial argument.

/// sin(u) truncated at total order `order`, u a polynomial with u(0) = 0.
inline SparsePoly sin_series(const SparsePoly& u, int order) {
  SparsePoly out(u.dim());
  SparsePoly upow = u;  // u^(2k+1)
  const SparsePoly u2 = (u * u).truncate(order);
  double fact = 1.0;     // (2k+1)!
  for (int k = 0; 2 * k + 1 <= order; ++k) {
    if (k > 0) {
      upow = (upow * u2).truncate(order);
      fact *= (2.0 * k) * (2.0 * k + 1.0);
    }
    out += upow * ((k % 2 ? -1.0 : 1.0) / fact);
  }
  return out.truncate(order);
}

/// -u / sqrt(1 + u^2) truncated at total order `order`, via the binomial
/// series of (1 + w)^(-1/2) with w = u^2.
inline SparsePoly neg_u_over_sqrt1pu2_series(const SparsePoly& u, int order) {
  SparsePoly out(u.dim());
  const SparsePoly u2 = (u * u).truncate(order);
  SparsePoly term = u;  // u * (u^2)^k
  double binom = 1.0;   // binom(-1/2, k)
  for (int k = 0; 2 * k + 1 <= order; ++k) {
    if (k > 0) {
      binom *= (-0.5 - (k - 1)) / k;
      term = (term * u2).truncate(order);
    }
    out -= term * binom;
  }
  return out.truncate(order);
}

// ---------------------------------------------------------------------------
// Benchmark systems

/// x' = y, y' = -2x - y + x^3/3 on [-5, 5]^2.
inline VectorField example1_system() {
  const int n = 2;
  SparsePoly x = SparsePoly::variable(n, 0), y = SparsePoly::variable(n, 1);
  SparsePoly f2 = x * -2.0 - y + x.pow(3) * (1.0 / 3.0);
  return VectorField::polynomial({y, f2}, Box::cube(n, 5.0), "example1");
}

/// x' = K sin(x - y) - sin x, y' = K sin(y - x) - sin y on [-3.5, 3.5]^2.
inline VectorField example2_system(double K = 0.2) {
  const int n = 2;
  const SparsePoly x = SparsePoly::variable(n, 0), y = SparsePoly::variable(n, 1);
  auto make = [&](int i) {
    const int o = 1 - i;
    ScalarField f;
    f.label = i == 0 ? "K sin(x-y) - sin(x)" : "K sin(y-x) - sin(y)";
    f.eval_fn = [K, i, o](const Point& p) { return K * std::sin(p[i] - p[o]) - std::sin(p[i]); };
    f.grad_fn = [K, i, o](const Point& p) {
      Point g(2);
      const double c = K * std::cos(p[i] - p[o]);
      g[i] = c - std::cos(p[i]);
      g[o] = -c;
      return g;
    };
    const SparsePoly xi = i == 0 ? x : y, xo = i == 0 ? y : x;
    f.series = [K, xi, xo](int order) {
      return sin_series(xi - xo, order) * K - sin_series(xi, order);
    };
    return f;
  };
  return VectorField({make(0), make(1)}, Box::cube(n, 3.5), "example2");
}

/// x' = y, y' = -(x + y) / sqrt(1 + (x + y)^2) on [-4, 4]^2.
inline VectorField example3_system() {
  const int n = 2;
  const SparsePoly x = SparsePoly::variable(n, 0), y = SparsePoly::variable(n, 1);
  ScalarField f2;
  f2.label = "-(x+y)/sqrt(1+(x+y)^2)";
  f2.eval_fn = [](const Point& p) {
    const double u = p[0] + p[1];
    return -u / std::sqrt(1.0 + u * u);
  };
  f2.grad_fn = [](const Point& p) {
    const double u = p[0] + p[1];
    const double d = -std::pow(1.0 + u * u, -1.5);
    return Point::Constant(2, d).eval();
  };
  const SparsePoly u = x + y;
  f2.series = [u](int order) { return neg_u_over_sqrt1pu2_series(u, order); };
  return VectorField({ScalarField::polynomial(y, "y"), f2}, Box::cube(n, 4.0), "example3");
}

/// Replicator dynamics x_i' = x_i((Ax)_i - x^T A x) in R^n, domain [0,1]^n
/// (the simplex is forward invariant).
inline VectorField replicator_system(const Eigen::MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || n < 2) throw std::invalid_argument("replicator: A must be square, n >= 2");
  std::vector<SparsePoly> xs;
  for (int i = 0; i < n; ++i) xs.push_back(SparsePoly::variable(n, i));
  std::vector<SparsePoly> Ax(n, SparsePoly(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) Ax[i] += xs[j] * A(i, j);
  }
  SparsePoly xAx = dot(xs, Ax);
  std::vector<SparsePoly> comps;
  for (int i = 0; i < n; ++i) comps.push_back(xs[i] * (Ax[i] - xAx));
  return VectorField::polynomial(std::move(comps), Box(Point::Zero(n), Point::Ones(n)),
                                 "replicator");
}

/// Replicator dynamics in reduced coordinates around vertex e_k: u collects
/// x_j (j != k) and x_k = 1 - sum(u). The vertex maps to u = 0.
inline VectorField reduced_replicator_system(const Eigen::MatrixXd& A, int vertex) {
  const int n = static_cast<int>(A.rows());
  if (A.cols() != n || n < 2) throw std::invalid_argument("replicator: A must be square, n >= 2");
  if (vertex < 0 || vertex >= n) throw std::invalid_argument("replicator: vertex out of range");
  const int m = n - 1;
  std::vector<SparsePoly> x(n, SparsePoly(m));
  SparsePoly sum(m);
  for (int j = 0, r = 0; j < n; ++j) {
    if (j == vertex) continue;
    x[j] = SparsePoly::variable(m, r++);
    sum += x[j];
  }
  x[vertex] = SparsePoly::constant(m, 1.0) - sum;
  std::vector<SparsePoly> Ax(n, SparsePoly(m));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) Ax[i] += x[j] * A(i, j);
  }
  SparsePoly xAx = dot(x, Ax);
  std::vector<SparsePoly> comps;
  for (int j = 0; j < n; ++j) {
    if (j == vertex) continue;
    comps.push_back(x[j] * (Ax[j] - xAx));
  }
  return VectorField::polynomial(std::move(comps), Box(Point::Zero(m), Point::Ones(m)),
                                 "replicator_reduced");
}

/// Builtin systems by name: example1, example2 (param K), example3.
/// Replicator systems are built from their payoff matrix with
/// replicator_system().
inline VectorField builtin_system(const std::string& name, const nlohmann::json& params = {}) {
  if (name == "example1") return example1_system();
  if (name == "example2") {
    const double K = params.is_object() ? params.value("K", 0.2) : 0.2;
    return example2_system(K);
  }
  if (name == "example3") return example3_system();
  if (name == "replicator") {
    if (!params.is_object() || !params.contains("A")) {
      throw std::invalid_argument("builtin replicator: parameter 'A' (n x n) required");
    }
    const auto rows = params.at("A").get<std::vector<std::vector<double>>>();
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i) {
      if (static_cast<int>(rows[i].size()) != n) {
        throw std::invalid_argument("builtin replicator: A must be n x n");
      }
      for (int j = 0; j < n; ++j) A(i, j) = rows[i][j];
    }
    return replicator_system(A);
  }
  throw std::invalid_argument("unknown builtin system '" + name + "'");
}

// ---------------------------------------------------------------------------
// System definition files
//
// {"builtin": "example2", "params": {"K": 0.2}}                      or
// {"domain": {"lo": [...], "hi": [...]},
//  "components": [ <SparsePoly JSON> | {"builtin": "example2", "component": 0,
//                                        "params": {...}} , ...]}

inline VectorField system_from_json(const nlohmann::json& j) {
  if (j.contains("builtin") && !j.contains("components")) {
    VectorField F = builtin_system(j.at("builtin").get<std::string>(),
                                   j.value("params", nlohmann::json::object()));
    if (j.contains("domain")) {
      const auto lo = j.at("domain").at("lo").get<std::vector<double>>();
      const auto hi = j.at("domain").at("hi").get<std::vector<double>>();
      Box box(Eigen::Map<const Point>(lo.data(), lo.size()),
              Eigen::Map<const Point>(hi.data(), hi.size()));
      return VectorField(F.components(), box, F.name());
    }
    return F;
  }
  if (!j.contains("domain") || !j.contains("components")) {
    throw std::invalid_argument("system: expected 'builtin' or 'domain' + 'components'");
  }
  const auto lo = j.at("domain").at("lo").get<std::vector<double>>();
  const auto hi = j.at("domain").at("hi").get<std::vector<double>>();
  Box box(Eigen::Map<const Point>(lo.data(), lo.size()),
          Eigen::Map<const Point>(hi.data(), hi.size()));
  std::vector<ScalarField> comps;
  for (const auto& c : j.at("components")) {
    if (c.contains("terms")) {
      comps.push_back(ScalarField::polynomial(poly_from_json(c)));
    } else if (c.contains("builtin")) {
      VectorField B = builtin_system(c.at("builtin").get<std::string>(),
                                     c.value("params", nlohmann::json::object()));
      comps.push_back(B.component(c.at("component").get<int>()));
    } else {
      throw std::invalid_argument("system: component must be a polynomial or a builtin reference");
    }
  }
  return VectorField(std::move(comps), box, j.value("name", std::string("custom")));
}

}  // namespace kroa
