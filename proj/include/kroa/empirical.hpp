#pragma once

// Empirical study on replicator dynamics: basin sampling, the r1/r2 metrics,
// the linearization-based quadratic baseline and the random RBF sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kroa/config.hpp"
#include "kroa/dynamics.hpp"
#include "kroa/koopman.hpp"

namespace kroa {

/// Random payoff matrix, entries U[0,1), with A(v,v) raised to
/// max_{j != v} A(j,v) + margin so that vertex v is a strict Nash
/// equilibrium; the reduced Jacobian then has eigenvalues A(j,v) - A(v,v).
inline Eigen::MatrixXd replicator_matrix(int n, std::uint64_t seed, double margin = 0.5, int vertex = 0) {
  if (n < 2) throw std::invalid_argument("replicator_matrix: n >= 2 required");
  if (vertex < 0 || vertex >= n) throw std::invalid_argument("replicator_matrix: vertex out of range");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) A(i, j) = u(rng);
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    if (j != vertex) mx = std::max(mx, A(j, vertex));
  }
  A(vertex, vertex) = mx + margin;
  return A;
}

/// Fast replicator evaluation in full and reduced coordinates.
class ReplicatorModel {
 public:
  ReplicatorModel(Eigen::MatrixXd A, int vertex) : A_(std::move(A)), k_(vertex) {
    if (A_.rows() != A_.cols() || A_.rows() < 2) throw std::invalid_argument("ReplicatorModel: A must be square");
    if (k_ < 0 || k_ >= A_.rows()) throw std::invalid_argument("ReplicatorModel: vertex out of range");
  }

  int n() const { return static_cast<int>(A_.rows()); }
  int vertex() const { return k_; }
  const Eigen::MatrixXd& A() const { return A_; }

  Eigen::VectorXd rhs(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd Ax = A_ * x;
    return x.cwiseProduct(Ax.array().matrix() - Eigen::VectorXd::Constant(n(), x.dot(Ax)));
  }

  Eigen::VectorXd to_full(const Point& u) const {
    Eigen::VectorXd x(n());
    for (int j = 0, r = 0; j < n(); ++j) x[j] = j == k_ ? 0.0 : u[r++];
    x[k_] = 1.0 - u.sum();
    return x;
  }
  Point to_reduced(const Eigen::VectorXd& x) const {
    Point u(n() - 1);
    for (int j = 0, r = 0; j < n(); ++j) {
      if (j != k_) u[r++] = x[j];
    }
    return u;
  }
  Point reduced_rhs(const Point& u) const { return to_reduced(rhs(to_full(u))); }

  /// Reduced system as a VectorField on [0,1]^(n-1).
  VectorField reduced_field() const { return reduced_replicator_system(A_, k_); }

 private:
  Eigen::MatrixXd A_;
  int k_;
};

class BasinError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BasinOptions {
  double h = 1e-2;
  double T = 200.0;
  double tol = 1e-3;
  double min_rate = 1e-3;
  long min_tries_for_rate = 2000;
};

struct SampleSet {
  Eigen::MatrixXd W;  // K x n, simplex coordinates
  int K = 0;
  std::uint64_t seed = 0;
  long tried = 0;

  double acceptance_rate() const { return tried ? static_cast<double>(K) / static_cast<double>(tried) : 0.0; }
};

/// Dirichlet(1,...,1) point on the simplex.
inline Eigen::VectorXd dirichlet_point(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd x(n);
  for (int j = 0; j < n; ++j) x[j] = e(rng);
  return x / x.sum();
}

/// RK4 classification: converged iff within tol of the vertex by time T.
inline bool converges_to_vertex(const ReplicatorModel& M, Eigen::VectorXd x, const BasinOptions& opt) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(M.n());
  e[M.vertex()] = 1.0;
  const long steps = std::lround(opt.T / opt.h);
  const double h = opt.h;
  for (long s = 0; s < steps; ++s) {
    if ((x - e).norm() < opt.tol) return true;
    const Eigen::VectorXd k1 = M.rhs(x);
    const Eigen::VectorXd k2 = M.rhs(x + 0.5 * h * k1);
    const Eigen::VectorXd k3 = M.rhs(x + 0.5 * h * k2);
    const Eigen::VectorXd k4 = M.rhs(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) return false;
  }
  return (x - e).norm() < opt.tol;
}

inline SampleSet sample_basin(const ReplicatorModel& M, int K, std::uint64_t seed, const BasinOptions& opt = {}) {
  if (K < 0) throw std::invalid_argument("sample_basin: K must be >= 0");
  SampleSet s;
  s.seed = seed;
  s.W.resize(K, M.n());
  std::mt19937_64 rng(seed);
  while (s.K < K) {
    const Eigen::VectorXd x = dirichlet_point(M.n(), rng);
    ++s.tried;
    if (converges_to_vertex(M, x, opt)) s.W.row(s.K++) = x.transpose();
    if (s.tried >= opt.min_tries_for_rate && s.acceptance_rate() < opt.min_rate) {
      throw BasinError("sample_basin: acceptance rate " + std::to_string(s.acceptance_rate()) + " below " +
                       std::to_string(opt.min_rate) + " after " + std::to_string(s.tried) + " draws (" +
                       std::to_string(s.K) + " accepted)");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Metrics

/// V and dV/dt at every sample, in reduced coordinates.
struct CandidateSamples {
  std::vector<double> V;
  std::vector<double> Vdot;
};

inline CandidateSamples evaluate_candidate(const LyapunovCandidate& V, const ReplicatorModel& M, const SampleSet& W) {
  CandidateSamples out;
  out.V.reserve(W.K);
  out.Vdot.reserve(W.K);
  for (int i = 0; i < W.K; ++i) {
    const Point u = M.to_reduced(W.W.row(i).transpose());
    out.V.push_back(V(u));
    out.Vdot.push_back(V.gradient(u).dot(M.reduced_rhs(u)));
  }
  return out;
}

inline double metric_r1(const std::vector<double>& Vdot) {
  if (Vdot.empty()) return 0.0;
  long good = 0;
  for (double d : Vdot) good += d < 0.0;
  return static_cast<double>(good) / static_cast<double>(Vdot.size());
}

struct R2Result {
  double r2 = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
};

/// Largest fraction of samples in a window [g1, g2] of V values whose members
/// all have dV/dt < 0. Samples with equal V enter a window together.
inline R2Result metric_r2(const std::vector<double>& V, const std::vector<double>& Vdot) {
  if (V.size() != Vdot.size()) throw std::invalid_argument("metric_r2: size mismatch");
  R2Result out;
  const std::size_t K = V.size();
  if (K == 0) return out;
  std::vector<std::size_t> idx(K);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return V[a] < V[b]; });
  std::size_t best = 0, run = 0, run_start = 0;
  std::size_t i = 0;
  while (i < K) {
    std::size_t j = i;
    bool all_good = true;
    while (j < K && V[idx[j]] == V[idx[i]]) {
      all_good = all_good && Vdot[idx[j]] < 0.0;
      ++j;
    }
    if (all_good) {
      if (run == 0) run_start = i;
      run += j - i;
      if (run > best) {
        best = run;
        out.gamma1 = V[idx[run_start]];
        out.gamma2 = V[idx[j - 1]];
      }
    } else {
      run = 0;
    }
    i = j;
  }
  out.r2 = static_cast<double>(best) / static_cast<double>(K);
  return out;
}

// ---------------------------------------------------------------------------
// Baseline and sweep

/// Solves J'P + PJ + I = 0 by a Kronecker linear solve, symmetrized.
inline Eigen::MatrixXd lyapunov_matrix(const Eigen::MatrixXd& J) {
  const int m = static_cast<int>(J.rows());
  if (J.cols() != m || m < 1) throw std::invalid_argument("lyapunov_matrix: J must be square");
  if (m > 14) throw std::invalid_argument("lyapunov_matrix: dimension above 14 not supported");
  if (!is_hurwitz(J)) throw std::domain_error("lyapunov_matrix: J is not Hurwitz");
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m * m, m * m);
  // vec(J'P) = (I kron J') vec(P), vec(PJ) = (J' kron I) vec(P).
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < m; ++b) {
      K.block(a * m, b * m, m, m) += I(a, b) * J.transpose();
      K.block(a * m, b * m, m, m) += J(b, a) * I;
    }
  }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(I.data(), m * m);
  const Eigen::VectorXd p = K.partialPivLu().solve(rhs);
  Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(p.data(), m, m);
  return 0.5 * (P + P.transpose());
}

inline LyapunovCandidate quadratic_baseline(const Eigen::MatrixXd& J) {
  const Eigen::MatrixXd P = lyapunov_matrix(J);
  const int m = static_cast<int>(P.rows());
  SparsePoly V(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) V += SparsePoly::variable(m, i) * SparsePoly::variable(m, j) * P(i, j);
  }
  return LyapunovCandidate::from_poly(V);
}

struct SweepRow {
  int n = 0;
  int trial = 0;  // -1 for the quadratic baseline
  double eta = 0.0;
  double a = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  std::uint64_t seed = 0;
};

enum class ProjectionRegion { centered_box, corner_box, corner_simplex };

struct SweepOptions {
  int rbfs = 20;
  ProjectionRegion region = ProjectionRegion::centered_box;
  double eta_lo = 0.01, eta_hi = 3.0;
  double a_lo = 0.1, a_hi = 1.0;
  int projection_samples = 5000;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> skipped;
};

/// One RBF candidate per trial: centers uniform in {u >= 0, sum u <= a}
/// (reduced coordinates, vertex at 0), L2 projection over [-a, a]^(n-1) by default.
inline SweepResult sweep_rbf_candidates(const ReplicatorModel& M, const SampleSet& W, int trials, std::uint64_t seed,
                                        const SweepOptions& opt = {}) {
  SweepResult out;
  const int m = M.n() - 1;
  const VectorField F = M.reduced_field();
  const Eigen::MatrixXd J = jacobian_at_origin(F);
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t s = seed + 7919ull * static_cast<std::uint64_t>(t);
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> ue(opt.eta_lo, opt.eta_hi), ua(opt.a_lo, opt.a_hi);
    SweepRow row;
    row.n = M.n();
    row.trial = t;
    row.eta = ue(rng);
    row.a = ua(rng);
    row.seed = s;
    Eigen::MatrixXd C(opt.rbfs, m);
    for (int i = 0; i < opt.rbfs; ++i) {
      const Eigen::VectorXd d = dirichlet_point(m + 1, rng);
      C.row(i) = row.a * d.head(m).transpose();
    }
    try {
      const Basis basis = Basis::gaussian_rbf(C, row.eta);
      GeneratorMatrix G;
      if (opt.region == ProjectionRegion::corner_simplex) {
        std::mt19937_64 prng(s + 1);
        Eigen::MatrixXd X(opt.projection_samples, m);
        for (int i = 0; i < X.rows(); ++i) X.row(i) = row.a * dirichlet_point(m + 1, prng).head(m).transpose();
        G = build_generator_l2_points(F, basis, X);
      } else {
        const Box X_pi = opt.region == ProjectionRegion::centered_box
                             ? Box::cube(m, row.a)
                             : Box(Point::Zero(m), Point::Constant(m, row.a));
        G = build_generator_l2(F, basis, X_pi, opt.projection_samples, s + 1);
      }
      const auto pairs = principal_eigenpairs(G, J);
      const LyapunovCandidate V = assemble_candidate(pairs, std::vector<double>(pairs.size(), 1.0), basis);
      const CandidateSamples cs = evaluate_candidate(V, M, W);
      row.r1 = metric_r1(cs.Vdot);
      const R2Result r2 = metric_r2(cs.V, cs.Vdot);
      row.r2 = r2.r2;
      row.gamma1 = r2.gamma1;
      row.gamma2 = r2.gamma2;
      out.rows.push_back(row);
    } catch (const std::exception& e) {
      out.skipped.push_back("n=" + std::to_string(M.n()) + " trial " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

inline SweepRow baseline_row(const ReplicatorModel& M, const SampleSet& W) {
  const LyapunovCandidate V = quadratic_baseline(jacobian_at_origin(M.reduced_field()));
  const CandidateSamples cs = evaluate_candidate(V, M, W);
  SweepRow row;
  row.n = M.n();
  row.trial = -1;
  row.r1 = metric_r1(cs.Vdot);
  const R2Result r2 = metric_r2(cs.V, cs.Vdot);
  row.r2 = r2.r2;
  row.gamma1 = r2.gamma1;
  row.gamma2 = r2.gamma2;
  row.seed = W.seed;
  return row;
}

inline void write_metrics_header(std::ostream& os) { os << "n,trial,eta,a,r1,r2,gamma1,gamma2,seed\n"; }

inline void write_metrics_row(std::ostream& os, const SweepRow& r) {
  os.precision(17);
  os << r.n << ',' << (r.trial < 0 ? std::string("baseline") : std::to_string(r.trial)) << ',' << r.eta << ','
     << r.a << ',' << r.r1 << ',' << r.r2 << ',' << r.gamma1 << ',' << r.gamma2 << ',' << r.seed << '\n';
}

// ---------------------------------------------------------------------------
// Rank statistics

inline std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman_rho: need two equal-length series");
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = (n + 1) / 2;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - mx);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - mx) * (ry[i] - mx);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// One-sided exact permutation p-value P(rho <= observed) under independence.
inline double spearman_p_negative(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() > 10) throw std::invalid_argument("spearman_p_negative: exact test limited to 10 points");
  const double obs = spearman_rho(x, y);
  std::vector<double> perm = y;
  std::sort(perm.begin(), perm.end());
  long total = 0, hits = 0;
  do {
    ++total;
    if (spearman_rho(x, perm) <= obs + 1e-12) ++hits;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Study driver

struct EmpiricalConfig {
  std::vector<int> dims;
  int K = 5000;
  int trials = 30;
  std::uint64_t seed = 1;
  double margin = 0.5;
  int vertex = 0;
  BasinOptions basin;
  SweepOptions sweep;
  std::string metrics = "metrics.csv";
};

inline EmpiricalConfig parse_empirical_config(const nlohmann::json& j) {
  const ConfigNode root(j, "");
  if (!j.is_object()) root.fail("expected an object");
  EmpiricalConfig c;
  c.dims = root.get<std::vector<int>>("dims");
  for (int n : c.dims) {
    if (n < 2 || n > 15) root.child("dims").fail("dimensions must lie in [2, 15]");
  }
  c.K = root.get<int>("K", c.K);
  if (c.K < 1) root.child("K").fail("must be >= 1");
  c.trials = root.get<int>("trials", c.trials);
  if (c.trials < 0) root.child("trials").fail("must be >= 0");
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  c.margin = root.get<double>("margin", c.margin);
  c.vertex = root.get<int>("vertex", c.vertex);
  for (int n : c.dims) {
    if (c.vertex < 0 || c.vertex >= n) root.child("vertex").fail("vertex out of range for n = " + std::to_string(n));
  }
  if (root.has("basin")) {
    const ConfigNode b = root.child("basin");
    c.basin.h = b.get<double>("h", c.basin.h);
    c.basin.T = b.get<double>("T", c.basin.T);
    c.basin.tol = b.get<double>("tol", c.basin.tol);
    c.basin.min_rate = b.get<double>("min_rate", c.basin.min_rate);
    c.basin.min_tries_for_rate = b.get<long>("min_tries", c.basin.min_tries_for_rate);
    if (!(c.basin.h > 0.0 && c.basin.T > 0.0 && c.basin.tol > 0.0)) b.fail("h, T and tol must be > 0");
    if (c.basin.min_tries_for_rate < 1) b.child("min_tries").fail("must be >= 1");
  }
  if (root.has("sweep")) {
    const ConfigNode s = root.child("sweep");
    c.sweep.rbfs = s.get<int>("rbfs", c.sweep.rbfs);
    if (c.sweep.rbfs < 1) s.child("rbfs").fail("must be >= 1");
    const auto eta = s.get<std::vector<double>>("eta", {c.sweep.eta_lo, c.sweep.eta_hi});
    const auto a = s.get<std::vector<double>>("a", {c.sweep.a_lo, c.sweep.a_hi});
    if (eta.size() != 2 || !(0.0 < eta[0] && eta[0] <= eta[1])) s.child("eta").fail("expected [lo, hi] with 0 < lo <= hi");
    if (a.size() != 2 || !(0.0 < a[0] && a[0] <= a[1])) s.child("a").fail("expected [lo, hi] with 0 < lo <= hi");
    c.sweep.eta_lo = eta[0];
    c.sweep.eta_hi = eta[1];
    c.sweep.a_lo = a[0];
    c.sweep.a_hi = a[1];
    c.sweep.projection_samples = s.get<int>("projection_samples", c.sweep.projection_samples);
    const std::string r = s.choice("region", {"corner_box", "centered_box", "corner_simplex"}, "centered_box");
    c.sweep.region = r == "corner_box"     ? ProjectionRegion::corner_box
                     : r == "centered_box" ? ProjectionRegion::centered_box
                                           : ProjectionRegion::corner_simplex;
  }
  if (root.has("output")) c.metrics = root.child("output").get<std::string>("metrics", c.metrics);
  return c;
}

struct DimensionSummary {
  int n = 0;
  double acceptance = 0.0;
  SweepRow baseline;
  double r1_min = 0.0, r1_max = 0.0, r2_min = 0.0, r2_max = 0.0;
  int trials_used = 0;
};

struct EmpiricalResult {
  std::vector<SweepRow> rows;  // baseline row first within each dimension
  std::vector<DimensionSummary> dims;
  std::vector<std::string> skipped;
};

/// Per dimension: A seeded by n, basin sample seeded by seed + n, sweep seeded
/// by seed + 1000 n. Throws BasinError when a basin is too small.
inline EmpiricalResult run_empirical(const EmpiricalConfig& cfg) {
  EmpiricalResult out;
  for (int n : cfg.dims) {
    const ReplicatorModel M(replicator_matrix(n, static_cast<std::uint64_t>(n), cfg.margin, cfg.vertex), cfg.vertex);
    const SampleSet W = sample_basin(M, cfg.K, cfg.seed + n, cfg.basin);
    DimensionSummary d;
    d.n = n;
    d.acceptance = W.acceptance_rate();
    d.baseline = baseline_row(M, W);
    out.rows.push_back(d.baseline);
    const SweepResult s = sweep_rbf_candidates(M, W, cfg.trials, cfg.seed + 1000ull * n, cfg.sweep);
    d.trials_used = static_cast<int>(s.rows.size());
    if (!s.rows.empty()) {
      d.r1_min = d.r2_min = 1.0;
      for (const auto& r : s.rows) {
        d.r1_min = std::min(d.r1_min, r.r1);
        d.r1_max = std::max(d.r1_max, r.r1);
        d.r2_min = std::min(d.r2_min, r.r2);
        d.r2_max = std::max(d.r2_max, r.r2);
      }
    }
    out.rows.insert(out.rows.end(), s.rows.begin(), s.rows.end());
    out.skipped.insert(out.skipped.end(), s.skipped.begin(), s.skipped.end());
    out.dims.push_back(d);
  }
  return out;
}

}  // namespace kroa
