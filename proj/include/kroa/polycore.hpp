#pragma once

// Sparse multivariate polynomials with real coefficients.
//
// Terms are stored in a map keyed by exponent multi-index under graded
// lexicographic order: total degree first, then lexicographic with x1 > x2 >
// ... > xn. Every iteration over terms (and hence serialization and SDP
// constraint indexing) follows this order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace kroa {

using Point = Eigen::VectorXd;

/// Exponent vector alpha in N^n.
using MultiIndex = std::vector<int>;

inline int total_degree(const MultiIndex& a) {
  return std::accumulate(a.begin(), a.end(), 0);
}

/// Graded lexicographic comparison (degree first, then x1 > x2 > ...).
struct GradedLex {
  bool operator()(const MultiIndex& a, const MultiIndex& b) const {
    const int da = total_degree(a);
    const int db = total_degree(b);
    if (da != db) return da < db;
    // Within one degree, the monomial with the larger leading exponent
    // comes first: 1, x, y, x^2, xy, y^2, ...
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != b[i]) return a[i] > b[i];
    }
    return false;
  }
};

/// All multi-indices of dimension n with min_degree <= |alpha| <= max_degree,
/// in graded-lex order.
inline std::vector<MultiIndex> monomials_up_to(int n, int max_degree,
                                               int min_degree = 0) {
  std::vector<MultiIndex> out;
  if (n <= 0 || max_degree < 0) return out;
  MultiIndex cur(n, 0);
  // Enumerate each degree block in descending-lex order.
  for (int deg = std::max(0, min_degree); deg <= max_degree; ++deg) {
    // Recursive fill: first coordinate from deg down to 0.
    std::vector<MultiIndex> block;
    std::function<void(int, int)> rec = [&](int pos, int remaining) {
      if (pos == n - 1) {
        cur[pos] = remaining;
        block.push_back(cur);
        return;
      }
      for (int e = remaining; e >= 0; --e) {
        cur[pos] = e;
        rec(pos + 1, remaining - e);
      }
    };
    rec(0, deg);
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

class SparsePoly {
 public:
  using TermMap = std::map<MultiIndex, double, GradedLex>;

  /// Relative pruning threshold applied after arithmetic.
  static constexpr double kPruneRelative = 1e-14;

  SparsePoly() = default;
  explicit SparsePoly(int dim) : dim_(dim) {
    if (dim < 0) throw std::invalid_argument("SparsePoly: negative dimension");
  }

  static SparsePoly constant(int dim, double c) {
    SparsePoly p(dim);
    if (c != 0.0) p.terms_[MultiIndex(dim, 0)] = c;
    return p;
  }

  /// The coordinate polynomial x_j.
  static SparsePoly variable(int dim, int j) {
    if (j < 0 || j >= dim) throw std::out_of_range("SparsePoly::variable: axis out of range");
    SparsePoly p(dim);
    MultiIndex a(dim, 0);
    a[j] = 1;
    p.terms_[a] = 1.0;
    return p;
  }

  static SparsePoly monomial(const MultiIndex& alpha, double c = 1.0) {
    SparsePoly p(static_cast<int>(alpha.size()));
    for (int e : alpha) {
      if (e < 0) throw std::invalid_argument("SparsePoly::monomial: negative exponent");
    }
    if (c != 0.0) p.terms_[alpha] = c;
    return p;
  }

  int dim() const { return dim_; }
  const TermMap& terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool is_zero() const { return terms_.empty(); }

  int degree() const {
    if (terms_.empty()) return -1;
    return total_degree(terms_.rbegin()->first);
  }

  double coeff(const MultiIndex& alpha) const {
    auto it = terms_.find(alpha);
    return it == terms_.end() ? 0.0 : it->second;
  }

  double max_abs_coeff() const {
    double m = 0.0;
    for (const auto& [a, c] : terms_) m = std::max(m, std::abs(c));
    return m;
  }

  /// Adds c * x^alpha without pruning; call prune() afterwards.
  void add_term(const MultiIndex& alpha, double c) {
    if (static_cast<int>(alpha.size()) != dim_) {
      throw std::invalid_argument("SparsePoly::add_term: dimension mismatch");
    }
    if (c == 0.0) return;
    terms_[alpha] += c;
  }

  /// Drops terms with |c| < kPruneRelative * max|c| (and exact zeros).
  SparsePoly& prune() {
    const double thr = kPruneRelative * max_abs_coeff();
    for (auto it = terms_.begin(); it != terms_.end();) {
      if (!std::isfinite(it->second)) {
        throw std::domain_error("SparsePoly: non-finite coefficient");
      }
      if (it->second == 0.0 || std::abs(it->second) < thr) {
        it = terms_.erase(it);
      } else {
        ++it;
      }
    }
    return *this;
  }

  double operator()(const Point& x) const { return eval(x); }

  /// Per-monomial power products with cached per-axis power tables.
  double eval(const Point& x) const {
    if (x.size() != dim_) throw std::invalid_argument("SparsePoly::eval: dimension mismatch");
    if (terms_.empty()) return 0.0;
    const int deg = degree();
    thread_local std::vector<double> pw;
    pw.assign(static_cast<std::size_t>(dim_) * (deg + 1), 1.0);
    for (int j = 0; j < dim_; ++j) {
      double* row = pw.data() + static_cast<std::size_t>(j) * (deg + 1);
      for (int k = 1; k <= deg; ++k) row[k] = row[k - 1] * x[j];
    }
    double s = 0.0;
    for (const auto& [a, c] : terms_) {
      double t = c;
      for (int j = 0; j < dim_; ++j) {
        if (a[j]) t *= pw[static_cast<std::size_t>(j) * (deg + 1) + a[j]];
      }
      s += t;
    }
    return s;
  }

  /// Sum of |c_alpha x^alpha|; used as a floating-point noise scale.
  double eval_abs(const Point& x) const {
    double s = 0.0;
    for (const auto& [a, c] : terms_) {
      double t = std::abs(c);
      for (int j = 0; j < dim_; ++j) t *= std::pow(std::abs(x[j]), a[j]);
      s += t;
    }
    return s;
  }

  SparsePoly partial(int j) const {
    if (j < 0 || j >= dim_) throw std::out_of_range("SparsePoly::partial: axis out of range");
    SparsePoly out(dim_);
    for (const auto& [a, c] : terms_) {
      if (a[j] == 0) continue;
      MultiIndex b = a;
      b[j] -= 1;
      out.terms_[b] += c * a[j];
    }
    return out.prune();
  }

  std::vector<SparsePoly> gradient() const {
    std::vector<SparsePoly> g;
    g.reserve(dim_);
    for (int j = 0; j < dim_; ++j) g.push_back(partial(j));
    return g;
  }

  /// Keeps only terms with total degree <= d.
  SparsePoly truncate(int d) const {
    SparsePoly out(dim_);
    for (const auto& [a, c] : terms_) {
      if (total_degree(a) <= d) out.terms_.emplace_hint(out.terms_.end(), a, c);
    }
    return out;
  }

  /// Keeps only terms with total degree >= d.
  SparsePoly drop_below(int d) const {
    SparsePoly out(dim_);
    for (const auto& [a, c] : terms_) {
      if (total_degree(a) >= d) out.terms_.emplace_hint(out.terms_.end(), a, c);
    }
    return out;
  }

  SparsePoly& operator+=(const SparsePoly& q) {
    check_dim(q, "add");
    for (const auto& [a, c] : q.terms_) terms_[a] += c;
    return prune();
  }
  SparsePoly& operator-=(const SparsePoly& q) {
    check_dim(q, "sub");
    for (const auto& [a, c] : q.terms_) terms_[a] -= c;
    return prune();
  }
  SparsePoly& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [a, c] : terms_) c *= s;
    return *this;
  }

  friend SparsePoly operator+(SparsePoly p, const SparsePoly& q) { return p += q; }
  friend SparsePoly operator-(SparsePoly p, const SparsePoly& q) { return p -= q; }
  friend SparsePoly operator*(SparsePoly p, double s) { return p *= s; }
  friend SparsePoly operator*(double s, SparsePoly p) { return p *= s; }
  SparsePoly operator-() const { return (*this) * -1.0; }

  friend SparsePoly operator*(const SparsePoly& p, const SparsePoly& q) {
    p.check_dim(q, "mul");
    SparsePoly out(p.dim_);
    MultiIndex b(p.dim_);
    for (const auto& [a1, c1] : p.terms_) {
      for (const auto& [a2, c2] : q.terms_) {
        for (int j = 0; j < p.dim_; ++j) b[j] = a1[j] + a2[j];
        out.terms_[b] += c1 * c2;
      }
    }
    return out.prune();
  }

  SparsePoly pow(int k) const {
    if (k < 0) throw std::invalid_argument("SparsePoly::pow: negative exponent");
    SparsePoly result = constant(dim_, 1.0);
    SparsePoly base = *this;
    while (k > 0) {
      if (k & 1) result = result * base;
      k >>= 1;
      if (k) base = base * base;
    }
    return result;
  }

  /// Exact expansion of p(scale .* x + shift).
  SparsePoly affine_substitute(const Point& scale, const Point& shift) const {
    if (scale.size() != dim_ || shift.size() != dim_) {
      throw std::invalid_argument("affine_substitute: dimension mismatch");
    }
    for (int j = 0; j < dim_; ++j) {
      if (scale[j] == 0.0) throw std::invalid_argument("affine_substitute: zero scale component");
    }
    const int deg = std::max(degree(), 0);
    // powers[j][k] = (scale_j x_j + shift_j)^k
    std::vector<std::vector<SparsePoly>> powers(dim_);
    for (int j = 0; j < dim_; ++j) {
      SparsePoly lin = variable(dim_, j) * scale[j] + constant(dim_, shift[j]);
      powers[j].push_back(constant(dim_, 1.0));
      for (int k = 1; k <= deg; ++k) powers[j].push_back(powers[j].back() * lin);
    }
    SparsePoly out(dim_);
    for (const auto& [a, c] : terms_) {
      SparsePoly t = constant(dim_, c);
      for (int j = 0; j < dim_; ++j) {
        if (a[j]) t = t * powers[j][a[j]];
      }
      for (const auto& [b, cb] : t.terms_) out.terms_[b] += cb;
    }
    return out.prune();
  }

  /// Substitutes x_j -> subs[j] (polynomials in a possibly different dimension).
  SparsePoly compose(const std::vector<SparsePoly>& subs) const {
    if (static_cast<int>(subs.size()) != dim_) {
      throw std::invalid_argument("compose: need one substitute per variable");
    }
    const int out_dim = subs.empty() ? 0 : subs.front().dim();
    SparsePoly out(out_dim);
    const int deg = std::max(degree(), 0);
    std::vector<std::vector<SparsePoly>> powers(dim_);
    for (int j = 0; j < dim_; ++j) {
      powers[j].push_back(constant(out_dim, 1.0));
      for (int k = 1; k <= deg; ++k) powers[j].push_back(powers[j].back() * subs[j]);
    }
    for (const auto& [a, c] : terms_) {
      SparsePoly t = constant(out_dim, c);
      for (int j = 0; j < dim_; ++j) {
        if (a[j]) t = t * powers[j][a[j]];
      }
      for (const auto& [b, cb] : t.terms_) out.terms_[b] += cb;
    }
    return out.prune();
  }

  bool operator==(const SparsePoly& q) const { return dim_ == q.dim_ && terms_ == q.terms_; }

  /// Max coefficientwise |p - q| relative to max(1, max|coeff|).
  double distance(const SparsePoly& q) const {
    SparsePoly d = *this - q;
    const double scale = std::max({1.0, max_abs_coeff(), q.max_abs_coeff()});
    return d.max_abs_coeff() / scale;
  }

 private:
  void check_dim(const SparsePoly& q, const char* op) const {
    if (dim_ != q.dim_) {
      throw std::invalid_argument(std::string("SparsePoly::") + op + ": dimension mismatch");
    }
  }

  int dim_ = 0;
  TermMap terms_;
};

inline SparsePoly dot(const std::vector<SparsePoly>& a, const std::vector<SparsePoly>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("dot: size mismatch");
  SparsePoly out(a.front().dim());
  for (std::size_t i = 0; i < a.size(); ++i) out += a[i] * b[i];
  return out;
}

/// (x1^2 + ... + xn^2)^((s+1)/2), i.e. ||x||_2^(s+1) for odd s.
inline SparsePoly norm_power_poly(int dim, int s) {
  if (s < 1 || s % 2 == 0) {
    throw std::invalid_argument("norm_power_poly: order s must be odd and >= 1");
  }
  SparsePoly sq(dim);
  for (int j = 0; j < dim; ++j) sq += SparsePoly::variable(dim, j).pow(2);
  return sq.pow((s + 1) / 2);
}

/// Flattened polynomial for repeated fast evaluation.
class CompiledPoly {
 public:
  CompiledPoly() = default;
  explicit CompiledPoly(const SparsePoly& p) : dim_(p.dim()), deg_(std::max(p.degree(), 0)) {
    exps_.reserve(p.size() * dim_);
    for (const auto& [a, c] : p.terms()) {
      coeffs_.push_back(c);
      exps_.insert(exps_.end(), a.begin(), a.end());
    }
  }

  int dim() const { return dim_; }
  std::size_t size() const { return coeffs_.size(); }

  double operator()(const double* x) const {
    if (coeffs_.empty()) return 0.0;
    thread_local std::vector<double> pw;
    const int stride = deg_ + 1;
    pw.resize(static_cast<std::size_t>(dim_) * stride);
    for (int j = 0; j < dim_; ++j) {
      double* row = pw.data() + static_cast<std::size_t>(j) * stride;
      row[0] = 1.0;
      for (int k = 1; k <= deg_; ++k) row[k] = row[k - 1] * x[j];
    }
    double s = 0.0;
    const int* e = exps_.data();
    for (std::size_t t = 0; t < coeffs_.size(); ++t, e += dim_) {
      double v = coeffs_[t];
      for (int j = 0; j < dim_; ++j) v *= pw[static_cast<std::size_t>(j) * stride + e[j]];
      s += v;
    }
    return s;
  }
  double operator()(const Point& x) const { return (*this)(x.data()); }

  /// Upper bound of the polynomial over the box [lo, hi], taking for each
  /// monomial its extreme over the corners and the coordinate hyperplanes
  /// through 0.
  double box_upper_bound(const double* lo, const double* hi) const {
    double s = 0.0;
    const int* e = exps_.data();
    for (std::size_t t = 0; t < coeffs_.size(); ++t, e += dim_) {
      double mn = 1.0, mx = 1.0;
      for (int j = 0; j < dim_; ++j) {
        if (e[j] == 0) continue;
        double a = std::pow(lo[j], e[j]);
        double b = std::pow(hi[j], e[j]);
        double imin = std::min(a, b), imax = std::max(a, b);
        if (lo[j] < 0.0 && hi[j] > 0.0) {
          imin = std::min(imin, 0.0);
          imax = std::max(imax, 0.0);
        }
        const double c1 = mn * imin, c2 = mn * imax, c3 = mx * imin, c4 = mx * imax;
        mn = std::min({c1, c2, c3, c4});
        mx = std::max({c1, c2, c3, c4});
      }
      const double c = coeffs_[t];
      s += c >= 0.0 ? c * mx : c * mn;
    }
    return s;
  }

 private:
  int dim_ = 0;
  int deg_ = 0;
  std::vector<double> coeffs_;
  std::vector<int> exps_;
};

// ---------------------------------------------------------------------------
// JSON: {"dim": n, "terms": [{"alpha": [...], "c": value}, ...]}

inline nlohmann::json to_json(const SparsePoly& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [a, c] : p.terms()) terms.push_back({{"alpha", a}, {"c", c}});
  return {{"dim", p.dim()}, {"terms", terms}};
}

inline SparsePoly poly_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("dim") || !j.contains("terms")) {
    throw std::invalid_argument("SparsePoly JSON: expected {\"dim\", \"terms\"}");
  }
  const int dim = j.at("dim").get<int>();
  SparsePoly p(dim);
  for (const auto& t : j.at("terms")) {
    auto alpha = t.at("alpha").get<MultiIndex>();
    if (static_cast<int>(alpha.size()) != dim) {
      throw std::invalid_argument("SparsePoly JSON: alpha length differs from dim");
    }
    p.add_term(alpha, t.at("c").get<double>());
  }
  return p.prune();
}

inline std::string to_string(const SparsePoly& p, int precision = 6) {
  if (p.is_zero()) return "0";
  std::string out;
  char buf[64];
  bool first = true;
  for (const auto& [a, c] : p.terms()) {
    std::snprintf(buf, sizeof buf, "%s%.*g", first ? "" : (c < 0 ? " - " : " + "), precision,
                  first ? c : std::abs(c));
    out += buf;
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (a[j] == 0) continue;
      out += "*x" + std::to_string(j + 1);
      if (a[j] > 1) out += "^" + std::to_string(a[j]);
    }
    first = false;
  }
  return out;
}

}  // namespace kroa
