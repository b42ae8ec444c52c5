#pragma once

// Finite sections of the Koopman generator L f = grad(f) . F, principal
// eigenfunctions and the Lyapunov candidate V = sum_i alpha_i |phi_i|^2.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kroa/dynamics.hpp"
#include "kroa/polycore.hpp"

namespace kroa {

class Basis {
 public:
  enum class Kind { monomial, gaussian_rbf };

  static Basis monomial(int n, int d, int min_degree = 0) {
    if (n < 1 || d < 0 || min_degree < 0 || min_degree > d) {
      throw std::invalid_argument("Basis::monomial: require n >= 1 and 0 <= min_degree <= d");
    }
    Basis b;
    b.kind_ = Kind::monomial;
    b.n_ = n;
    b.degree_ = d;
    b.alphas_ = monomials_up_to(n, d, min_degree);
    return b;
  }

  /// Gaussian RBFs exp(-eta^2 |x - c_i|^2), one per row of `centers`.
  static Basis gaussian_rbf(Eigen::MatrixXd centers, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("Basis::gaussian_rbf: eta must be positive");
    if (centers.rows() < 1 || centers.cols() < 1) throw std::invalid_argument("Basis::gaussian_rbf: no centers");
    const double scale = std::max(1.0, centers.cwiseAbs().maxCoeff());
    for (int i = 0; i < centers.rows(); ++i) {
      for (int j = 0; j < i; ++j) {
        if ((centers.row(i) - centers.row(j)).norm() <= 1e-9 * scale) {
          throw std::invalid_argument("Basis::gaussian_rbf: duplicate centers " + std::to_string(j) + " and " +
                                      std::to_string(i));
        }
      }
    }
    Basis b;
    b.kind_ = Kind::gaussian_rbf;
    b.n_ = static_cast<int>(centers.cols());
    b.centers_ = std::move(centers);
    b.eta_ = eta;
    return b;
  }

  /// Centers on a uniform tensor grid over `box`, k per axis.
  static Basis rbf_grid(const Box& box, int k, double eta) {
    if (k < 1) throw std::invalid_argument("Basis::rbf_grid: k must be positive");
    const int n = box.dim();
    int total = 1;
    for (int j = 0; j < n; ++j) total *= k;
    Eigen::MatrixXd C(total, n);
    for (int idx = 0; idx < total; ++idx) {
      int rem = idx;
      for (int j = 0; j < n; ++j) {
        const int t = rem % k;
        rem /= k;
        C(idx, j) = k == 1 ? 0.5 * (box.lo[j] + box.hi[j]) : box.lo[j] + (box.hi[j] - box.lo[j]) * t / (k - 1);
      }
    }
    return gaussian_rbf(std::move(C), eta);
  }

  Kind kind() const { return kind_; }
  int dim() const { return n_; }
  int size() const { return kind_ == Kind::monomial ? static_cast<int>(alphas_.size()) : static_cast<int>(centers_.rows()); }
  int degree() const { return degree_; }
  double eta() const { return eta_; }
  const Eigen::MatrixXd& centers() const { return centers_; }
  const std::vector<MultiIndex>& alphas() const { return alphas_; }

  SparsePoly monomial_poly(int i) const { return SparsePoly::monomial(alphas_.at(i)); }

  double eval_one(int i, const Point& x) const {
    if (kind_ == Kind::monomial) {
      double v = 1.0;
      for (int j = 0; j < n_; ++j) v *= std::pow(x[j], alphas_[i][j]);
      return v;
    }
    return std::exp(-eta_ * eta_ * (x - centers_.row(i).transpose()).squaredNorm());
  }

  Eigen::VectorXd eval(const Point& x) const {
    Eigen::VectorXd out(size());
    if (kind_ == Kind::monomial) {
      const Eigen::MatrixXd pw = powers(x);
      for (int i = 0; i < size(); ++i) {
        double v = 1.0;
        for (int j = 0; j < n_; ++j) v *= pw(j, alphas_[i][j]);
        out[i] = v;
      }
    } else {
      for (int i = 0; i < size(); ++i) out[i] = std::exp(-eta_ * eta_ * (x - centers_.row(i).transpose()).squaredNorm());
    }
    return out;
  }

  /// N x n matrix of basis gradients at x.
  Eigen::MatrixXd gradient(const Point& x) const {
    Eigen::MatrixXd g(size(), n_);
    if (kind_ == Kind::monomial) {
      const Eigen::MatrixXd pw = powers(x);
      for (int i = 0; i < size(); ++i) {
        for (int j = 0; j < n_; ++j) {
          const int aj = alphas_[i][j];
          if (aj == 0) {
            g(i, j) = 0.0;
            continue;
          }
          double v = aj * pw(j, aj - 1);
          for (int k = 0; k < n_; ++k) {
            if (k != j) v *= pw(k, alphas_[i][k]);
          }
          g(i, j) = v;
        }
      }
    } else {
      for (int i = 0; i < size(); ++i) {
        const Eigen::RowVectorXd d = x.transpose() - centers_.row(i);
        const double psi = std::exp(-eta_ * eta_ * d.squaredNorm());
        g.row(i) = -2.0 * eta_ * eta_ * psi * d;
      }
    }
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dim"] = n_;
    if (kind_ == Kind::monomial) {
      j["kind"] = "monomial";
      j["degree"] = degree_;
      j["min_degree"] = alphas_.empty() ? 0 : total_degree(alphas_.front());
    } else {
      j["kind"] = "gaussian_rbf";
      j["eta"] = eta_;
      std::vector<std::vector<double>> c(centers_.rows(), std::vector<double>(n_));
      for (int i = 0; i < centers_.rows(); ++i) {
        for (int k = 0; k < n_; ++k) c[i][k] = centers_(i, k);
      }
      j["centers"] = c;
    }
    return j;
  }

 private:
  Eigen::MatrixXd powers(const Point& x) const {
    Eigen::MatrixXd pw(n_, degree_ + 1);
    for (int j = 0; j < n_; ++j) {
      pw(j, 0) = 1.0;
      for (int k = 1; k <= degree_; ++k) pw(j, k) = pw(j, k - 1) * x[j];
    }
    return pw;
  }

  Kind kind_ = Kind::monomial;
  int n_ = 0;
  int degree_ = 0;
  std::vector<MultiIndex> alphas_;
  Eigen::MatrixXd centers_;
  double eta_ = 0.0;
};

/// L psi_i = grad(psi_i) . F, exact when F is polynomial and psi a monomial.
struct GeneratorImage {
  std::optional<SparsePoly> poly;
  std::function<double(const Point&)> eval;
  double operator()(const Point& x) const { return poly ? poly->eval(x) : eval(x); }
};

inline GeneratorImage apply_generator(const VectorField& F, const Basis& basis, int i) {
  if (basis.dim() != F.dim()) throw std::invalid_argument("apply_generator: dimension mismatch");
  if (i < 0 || i >= basis.size()) throw std::out_of_range("apply_generator: basis index out of range");
  GeneratorImage out;
  if (basis.kind() == Basis::Kind::monomial && F.is_polynomial()) {
    const SparsePoly psi = basis.monomial_poly(i);
    SparsePoly acc(F.dim());
    for (int j = 0; j < F.dim(); ++j) {
      const SparsePoly dj = psi.partial(j);
      if (!dj.is_zero()) acc += dj * *F.component(j).poly;
    }
    out.poly = std::move(acc);
    return out;
  }
  out.eval = [F, basis, i](const Point& x) {
    const Eigen::MatrixXd g = basis.gradient(x);
    const Point f = F(x);
    if (!f.allFinite()) throw std::runtime_error("apply_generator: vector field evaluation failed");
    return g.row(i).dot(f);
  };
  return out;
}

struct GeneratorMatrix {
  Eigen::MatrixXd L;
  Basis basis;
  std::string projection;  // "truncation" or "l2"
  Box X_pi;
  int samples = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["projection"] = projection;
    j["basis"] = basis.to_json();
    j["rows"] = L.rows();
    j["cols"] = L.cols();
    std::vector<double> data;
    for (int r = 0; r < L.rows(); ++r) {
      for (int c = 0; c < L.cols(); ++c) data.push_back(L(r, c));
    }
    j["data"] = data;
    if (projection == "l2") {
      j["samples"] = samples;
      j["seed"] = seed;
      j["X_pi"] = {{"lo", std::vector<double>(X_pi.lo.data(), X_pi.lo.data() + X_pi.lo.size())},
                   {"hi", std::vector<double>(X_pi.hi.data(), X_pi.hi.data() + X_pi.hi.size())}};
    }
    return j;
  }
};

/// Column i holds the coefficients of L psi_i with all terms of total degree
/// above the basis degree discarded.
inline GeneratorMatrix build_generator_truncation(const VectorField& F, const Basis& basis) {
  if (!F.is_polynomial()) throw std::invalid_argument("build_generator_truncation: non-polynomial component");
  if (basis.kind() != Basis::Kind::monomial) {
    throw std::invalid_argument("build_generator_truncation: requires a monomial basis");
  }
  const int N = basis.size();
  std::map<MultiIndex, int> index;
  for (int i = 0; i < N; ++i) index[basis.alphas()[i]] = i;
  GeneratorMatrix G;
  G.L = Eigen::MatrixXd::Zero(N, N);
  G.basis = basis;
  G.projection = "truncation";
  for (int i = 0; i < N; ++i) {
    const SparsePoly img = *apply_generator(F, basis, i).poly;
    for (const auto& [a, c] : img.terms()) {
      auto it = index.find(a);
      if (it != index.end()) G.L(it->second, i) = c;
    }
  }
  return G;
}

inline int default_l2_samples(int N) { return std::max(10 * N, 5000); }

/// Galerkin projection with Monte-Carlo inner products over the rows of X
/// (one sample per row): solves min |Psi L - B|^2 + rho |L|^2 with
/// rho = 1e-10 tr(G) / N (scaled by M).
inline GeneratorMatrix build_generator_l2_points(const VectorField& F, const Basis& basis, const Eigen::MatrixXd& X) {
  const int N = basis.size();
  const int n = F.dim();
  const int M = static_cast<int>(X.rows());
  if (basis.dim() != n || X.cols() != n) throw std::invalid_argument("build_generator_l2: dimension mismatch");
  if (M < 10 * N) throw std::invalid_argument("build_generator_l2: need M >= 10 N samples");

  Eigen::MatrixXd Psi(M, N), B(M, N);
  for (int m = 0; m < M; ++m) {
    const Point x = X.row(m).transpose();
    const Point f = F(x);
    if (!f.allFinite()) throw std::runtime_error("build_generator_l2: vector field evaluation failed");
    Psi.row(m) = basis.eval(x).transpose();
    B.row(m) = (basis.gradient(x) * f).transpose();
  }

  // Columns that are numerically identical on the samples make the Gram
  // matrix singular beyond what the ridge can repair.
  const Eigen::VectorXd norms = Psi.colwise().norm();
  for (int i = 0; i < N; ++i) {
    if (!(norms[i] > 0.0)) throw std::runtime_error("build_generator_l2: basis function vanishes on all samples");
  }
  const Eigen::MatrixXd Gn = (Psi.transpose() * Psi).cwiseQuotient(norms * norms.transpose());
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < i; ++j) {
      if (Gn(i, j) > 1.0 - 1e-13) {
        throw std::runtime_error("build_generator_l2: Gram matrix numerically singular (basis functions " +
                                 std::to_string(j) + " and " + std::to_string(i) + " coincide on X_pi)");
      }
    }
  }
  const double trace_G = Psi.squaredNorm() / M;
  const double rho = 1e-10 * trace_G / N;
  Eigen::MatrixXd Aug(M + N, N), Rhs(M + N, N);
  Aug.topRows(M) = Psi / std::sqrt(static_cast<double>(M));
  Aug.bottomRows(N) = std::sqrt(rho) * Eigen::MatrixXd::Identity(N, N);
  Rhs.topRows(M) = B / std::sqrt(static_cast<double>(M));
  Rhs.bottomRows(N).setZero();
  GeneratorMatrix G;
  G.L = Aug.colPivHouseholderQr().solve(Rhs);
  if (!G.L.allFinite()) throw std::runtime_error("build_generator_l2: non-finite generator matrix");
  G.basis = basis;
  G.projection = "l2";
  G.samples = M;
  return G;
}

/// Uniform samples over the box X_pi.
inline GeneratorMatrix build_generator_l2(const VectorField& F, const Basis& basis, const Box& X_pi, int M,
                                          std::uint64_t seed) {
  const int n = F.dim();
  if (X_pi.dim() != n) throw std::invalid_argument("build_generator_l2: dimension mismatch");
  if (M < 10 * basis.size()) throw std::invalid_argument("build_generator_l2: need M >= 10 N samples");
  std::mt19937_64 rng(seed);
  std::vector<std::uniform_real_distribution<double>> dists;
  for (int j = 0; j < n; ++j) dists.emplace_back(X_pi.lo[j], X_pi.hi[j]);
  Eigen::MatrixXd X(M, n);
  for (int m = 0; m < M; ++m) {
    for (int j = 0; j < n; ++j) X(m, j) = dists[j](rng);
  }
  GeneratorMatrix G = build_generator_l2_points(F, basis, X);
  G.X_pi = X_pi;
  G.seed = seed;
  return G;
}

struct EigenPair {
  std::complex<double> lambda;
  Eigen::VectorXcd v;
  std::complex<double> target;  // matched Jacobian eigenvalue
  double residual = 0.0;        // |L v - lambda v| / (|L| |v|)
};

inline bool is_hurwitz(const Eigen::MatrixXd& J) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(J, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failure");
  return (es.eigenvalues().real().array() < 0.0).all();
}

/// For each eigenvalue of J, picks the nearest unused eigenvalue of L.
/// Warnings are appended when the distance exceeds tol * |mu| (tol default 0.1).
inline std::vector<EigenPair> principal_eigenpairs(const GeneratorMatrix& G, const Eigen::MatrixXd& J,
                                                   double tol = 0.1, std::vector<std::string>* warnings = nullptr) {
  Eigen::EigenSolver<Eigen::MatrixXd> ej(J, false);
  if (ej.info() != Eigen::Success) throw std::runtime_error("principal_eigenpairs: Jacobian eigensolver failure");
  const Eigen::VectorXcd mu = ej.eigenvalues();
  for (int i = 0; i < mu.size(); ++i) {
    if (!(mu[i].real() < 0.0)) throw std::domain_error("principal_eigenpairs: Jacobian is not Hurwitz");
  }
  Eigen::EigenSolver<Eigen::MatrixXd> el(G.L, true);
  if (el.info() != Eigen::Success) throw std::runtime_error("principal_eigenpairs: eigensolver failure");
  const Eigen::VectorXcd lam = el.eigenvalues();
  const Eigen::MatrixXcd vecs = el.eigenvectors();
  const double Lnorm = std::max(G.L.norm(), 1e-300);

  // Process Jacobian eigenvalues in a fixed order: by real part, then imag.
  std::vector<int> order(mu.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (mu[a].real() != mu[b].real()) return mu[a].real() > mu[b].real();
    return mu[a].imag() > mu[b].imag();
  });
  std::vector<bool> used(lam.size(), false);
  std::vector<EigenPair> out;
  for (int oi : order) {
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < lam.size(); ++k) {
      if (used[k]) continue;
      const double d = std::abs(lam[k] - mu[oi]);
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    if (best < 0) throw std::runtime_error("principal_eigenpairs: fewer generator eigenvalues than states");
    used[best] = true;
    if (bd > tol * std::abs(mu[oi]) && warnings) {
      warnings->push_back("eigenvalue " + std::to_string(lam[best].real()) + "+" + std::to_string(lam[best].imag()) +
                          "i is far from Jacobian eigenvalue " + std::to_string(mu[oi].real()) + "+" +
                          std::to_string(mu[oi].imag()) + "i");
    }
    EigenPair p;
    p.lambda = lam[best];
    p.target = mu[oi];
    Eigen::VectorXcd v = vecs.col(best);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    v /= v[imax];
    v[imax] = 1.0;
    p.residual = (G.L.cast<std::complex<double>>() * v - p.lambda * v).norm() / (Lnorm * v.norm());
    p.v = std::move(v);
    out.push_back(std::move(p));
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<EigenPair>& pairs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pairs) {
    std::vector<double> re(p.v.size()), im(p.v.size());
    for (int i = 0; i < p.v.size(); ++i) {
      re[i] = p.v[i].real();
      im[i] = p.v[i].imag();
    }
    arr.push_back({{"lambda", {p.lambda.real(), p.lambda.imag()}},
                   {"target", {p.target.real(), p.target.imag()}},
                   {"residual", p.residual},
                   {"re", re},
                   {"im", im}});
  }
  return arr;
}

/// V(x) = sum_i alpha_i |v_i' (Psi(x) - Psi(0))|^2.
class LyapunovCandidate {
 public:
  struct Term {
    double alpha;
    Eigen::VectorXcd v;
  };

  static LyapunovCandidate from_poly(SparsePoly p) {
    LyapunovCandidate c;
    c.n_ = p.dim();
    c.poly_ = std::move(p);
    c.grad_ = c.poly_->gradient();
    return c;
  }

  int dim() const { return n_; }
  bool is_polynomial() const { return poly_.has_value(); }
  const SparsePoly& poly() const {
    if (!poly_) throw std::logic_error("LyapunovCandidate: not polynomial");
    return *poly_;
  }
  const std::vector<Term>& terms() const { return terms_; }
  const std::optional<Basis>& basis() const { return basis_; }

  double operator()(const Point& x) const {
    if (poly_) return poly_->eval(x);
    const Eigen::VectorXd psi = basis_->eval(x) - psi0_;
    double s = 0.0;
    for (const auto& t : terms_) s += t.alpha * std::norm(t.v.dot(psi.cast<std::complex<double>>()));
    return s;
  }

  Point gradient(const Point& x) const {
    Point g = Point::Zero(n_);
    if (poly_) {
      for (int j = 0; j < n_; ++j) g[j] = grad_[j].eval(x);
      return g;
    }
    const Eigen::VectorXd psi = basis_->eval(x) - psi0_;
    const Eigen::MatrixXd dpsi = basis_->gradient(x);
    for (const auto& t : terms_) {
      // Plain (non-conjugating) products v^T psi.
      const std::complex<double> phi = (t.v.transpose() * psi.cast<std::complex<double>>())(0);
      const Eigen::RowVectorXcd dphi = t.v.transpose() * dpsi.cast<std::complex<double>>();
      g += 2.0 * t.alpha * (std::conj(phi) * dphi).real().transpose();
    }
    return g;
  }

  /// dV/dt along F.
  double derivative(const VectorField& F, const Point& x) const { return gradient(x).dot(F(x)); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    if (poly_) {
      j["form"] = "polynomial";
      j["poly"] = kroa::to_json(*poly_);
      return j;
    }
    j["form"] = "squared_modulus";
    j["basis"] = basis_->to_json();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : terms_) {
      std::vector<double> re(t.v.size()), im(t.v.size());
      for (int i = 0; i < t.v.size(); ++i) {
        re[i] = t.v[i].real();
        im[i] = t.v[i].imag();
      }
      arr.push_back({{"alpha", t.alpha}, {"re", re}, {"im", im}});
    }
    j["terms"] = arr;
    return j;
  }

  friend LyapunovCandidate assemble_candidate(const std::vector<EigenPair>&, const std::vector<double>&,
                                              const Basis&);

 private:
  int n_ = 0;
  std::optional<SparsePoly> poly_;
  std::vector<SparsePoly> grad_;
  std::optional<Basis> basis_;
  Eigen::VectorXd psi0_;
  std::vector<Term> terms_;
};

/// One alpha per pair. Conjugate pairs give identical |phi|^2; only the first
/// member is kept, with the alphas summed.
inline LyapunovCandidate assemble_candidate(const std::vector<EigenPair>& pairs, const std::vector<double>& alphas,
                                            const Basis& basis) {
  if (pairs.empty()) throw std::invalid_argument("assemble_candidate: no eigenpairs");
  if (alphas.size() != pairs.size()) throw std::invalid_argument("assemble_candidate: one alpha per pair required");
  for (double a : alphas) {
    if (!(a > 0.0)) throw std::invalid_argument("assemble_candidate: alpha must be positive");
  }
  const int N = basis.size();
  std::vector<LyapunovCandidate::Term> terms;
  std::vector<std::complex<double>> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].v.size() != N) throw std::invalid_argument("assemble_candidate: eigenvector size mismatch");
    bool merged = false;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const std::complex<double> l = pairs[i].lambda;
      if (std::abs(l.imag()) > 0.0 &&
          std::abs(l - std::conj(kept[k])) <= 1e-9 * std::max(1.0, std::abs(l))) {
        terms[k].alpha += alphas[i];
        merged = true;
        break;
      }
    }
    if (merged) continue;
    kept.push_back(pairs[i].lambda);
    terms.push_back({alphas[i], pairs[i].v});
  }

  LyapunovCandidate c;
  c.n_ = basis.dim();
  const Eigen::VectorXd psi0 = basis.eval(Point::Zero(basis.dim()));
  if (basis.kind() == Basis::Kind::monomial) {
    SparsePoly V(basis.dim());
    for (const auto& t : terms) {
      SparsePoly re(basis.dim()), im(basis.dim());
      for (int i = 0; i < N; ++i) {
        const auto& a = basis.alphas()[i];
        if (total_degree(a) == 0) continue;  // centering removes the constant
        re.add_term(a, t.v[i].real());
        im.add_term(a, t.v[i].imag());
      }
      re.prune();
      im.prune();
      V += (re * re + im * im) * t.alpha;
    }
    return LyapunovCandidate::from_poly(std::move(V));
  }
  c.basis_ = basis;
  c.psi0_ = psi0;
  c.terms_ = std::move(terms);
  return c;
}

}  // namespace kroa
