#pragma once

// End-to-end pipeline: rescale, generator, principal eigenfunctions,
// candidate, validity system, validator, certificate. Also certificate
// combination, certified area and the trajectory oracle.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kroa/config.hpp"
#include "kroa/dynamics.hpp"
#include "kroa/gridval.hpp"
#include "kroa/koopman.hpp"
#include "kroa/levels.hpp"
#include "kroa/polyapprox.hpp"
#include "kroa/polycore.hpp"
#include "kroa/sosval.hpp"
#include "kroa/validity.hpp"

namespace kroa {

// ---------------------------------------------------------------------------
// Certificates

/// Levels (g1, g2) of V in rescaled coordinates y = x / scale.
struct Certificate {
  bool certified = false;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  SparsePoly V;
  Point scale;
  std::string validator;
  std::string name;
  nlohmann::json system;
  nlohmann::json error_models = nlohmann::json::array();
  nlohmann::json degrees = nlohmann::json::object();
  nlohmann::json diagnostics = nlohmann::json::object();
  nlohmann::json provenance = nlohmann::json::object();

  int dim() const { return V.dim(); }

  /// V in original coordinates: V_orig(x) = V(x / scale).
  SparsePoly V_original() const {
    return V.affine_substitute(scale.cwiseInverse(), Point::Zero(scale.size()));
  }

  double value(const Point& y) const { return V.eval(y); }

  nlohmann::json to_json() const {
    return {{"certified", certified},
            {"gamma1", gamma1},
            {"gamma2", gamma2},
            {"validator", validator},
            {"name", name},
            {"system", system},
            {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())},
            {"V", kroa::to_json(V)},
            {"V_original", kroa::to_json(V_original())},
            {"error_models", error_models},
            {"degrees", degrees},
            {"diagnostics", diagnostics},
            {"provenance", provenance}};
  }

  static Certificate from_json(const nlohmann::json& j) {
    const ConfigNode c(j, "");
    Certificate out;
    out.certified = c.get<bool>("certified");
    out.gamma1 = c.get<double>("gamma1");
    out.gamma2 = c.get<double>("gamma2");
    out.validator = c.get<std::string>("validator");
    out.name = c.get<std::string>("name", "");
    out.system = c.child("system").json();
    const auto s = c.get<std::vector<double>>("scale");
    out.scale = Eigen::Map<const Point>(s.data(), static_cast<Eigen::Index>(s.size()));
    try {
      out.V = poly_from_json(c.child("V").json());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("certificate: /V: ") + e.what());
    }
    if (out.V.dim() != out.scale.size()) throw ConfigError("certificate: /scale: dimension mismatch with V");
    out.error_models = j.value("error_models", nlohmann::json::array());
    out.degrees = j.value("degrees", nlohmann::json::object());
    out.diagnostics = j.value("diagnostics", nlohmann::json::object());
    out.provenance = j.value("provenance", nlohmann::json::object());
    if (out.certified && !(out.gamma1 >= 0.0 && out.gamma1 < out.gamma2)) {
      throw ConfigError("certificate: need 0 <= gamma1 < gamma2");
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Run configuration

struct ApproxSpec {
  enum class Kind { exact, taylor, minimax };
  Kind kind = Kind::exact;
  int order = 5;
  std::optional<double> c;  // taylor constant; estimated when absent
  int degree = 12;
  double tol = 1e-3;
  int max_rounds = 30;
};

struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  nlohmann::json system;

  std::string basis = "monomial";  // monomial | rbf
  int degree = 3;
  int rbf_grid = 0;  // k x ... x k centers on the unit box
  Eigen::MatrixXd centers;
  double eta = 1.0;

  std::string projection = "truncation";  // truncation | l2
  double pi_half = 0.1;                   // X_pi = [-pi_half, pi_half]^n
  int samples = 0;                        // 0: default count

  int option = 1;
  std::vector<ApproxSpec> approx;  // per component; empty: exact

  std::vector<double> alphas;  // default all 1
  int proxy_degree = 12;

  std::string validator = "sos";  // sos | grid
  SosOptions sos;
  GridOptions grid;
  GridCertifyOptions grid_cert;
  LevelSearchOptions levels;

  nlohmann::json output = nlohmann::json::object();
  nlohmann::json raw;
};

inline ApproxSpec parse_approx(const ConfigNode& c) {
  ApproxSpec a;
  const std::string kind = c.choice("kind", {"exact", "taylor", "minimax"});
  if (kind == "exact") {
    a.kind = ApproxSpec::Kind::exact;
  } else if (kind == "taylor") {
    a.kind = ApproxSpec::Kind::taylor;
    a.order = c.get<int>("order");
    if (a.order < 1 || a.order % 2 == 0) c.child("order").fail("Taylor order must be odd and >= 1");
    if (c.has("c") && !c.child("c").json().is_string()) {
      a.c = c.get<double>("c");
      if (!(*a.c >= 0.0)) c.child("c").fail("must be >= 0");
    } else if (c.has("c") && c.get<std::string>("c") != "auto") {
      c.child("c").fail("expected a number or \"auto\"");
    }
  } else {
    a.kind = ApproxSpec::Kind::minimax;
    a.degree = c.get<int>("degree");
    if (a.degree < 1) c.child("degree").fail("must be >= 1");
    a.tol = c.get<double>("tol", 1e-3);
    a.max_rounds = c.get<int>("max_rounds", 30);
  }
  return a;
}

inline RunConfig parse_run_config(const nlohmann::json& j) {
  const ConfigNode root(j, "");
  if (!j.is_object()) root.fail("expected an object");
  RunConfig cfg;
  cfg.raw = j;
  cfg.name = root.get<std::string>("name", "run");
  cfg.seed = root.get<std::uint64_t>("seed", 1);
  cfg.system = root.child("system").json();

  const ConfigNode b = root.child("basis");
  cfg.basis = b.choice("kind", {"monomial", "rbf"});
  if (cfg.basis == "monomial") {
    cfg.degree = b.get<int>("degree");
    if (cfg.degree < 1) b.child("degree").fail("must be >= 1");
  } else {
    cfg.eta = b.get<double>("eta");
    if (!(cfg.eta > 0.0)) b.child("eta").fail("must be > 0");
    if (b.has("grid")) {
      cfg.rbf_grid = b.get<int>("grid");
      if (cfg.rbf_grid < 1) b.child("grid").fail("must be >= 1");
    } else {
      const auto rows = b.get<std::vector<std::vector<double>>>("centers");
      if (rows.empty()) b.child("centers").fail("need at least one center");
      cfg.centers.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) b.child("centers").fail("ragged center list");
        for (std::size_t k = 0; k < rows[i].size(); ++k) cfg.centers(i, k) = rows[i][k];
      }
    }
  }

  if (root.has("projection")) {
    const ConfigNode p = root.child("projection");
    cfg.projection = p.choice("kind", {"truncation", "l2"});
    cfg.pi_half = p.get<double>("half_width", 0.1);
    if (!(cfg.pi_half > 0.0)) p.child("half_width").fail("must be > 0");
    cfg.samples = p.get<int>("samples", 0);
    if (cfg.samples < 0) p.child("samples").fail("must be >= 0");
  }

  if (root.has("approximation")) {
    const ConfigNode a = root.child("approximation");
    cfg.option = a.get<int>("option", 1);
    if (cfg.option != 1 && cfg.option != 2) a.child("option").fail("must be 1 or 2");
    if (a.has("components")) {
      const ConfigNode cs = a.child("components");
      for (std::size_t i = 0; i < cs.size(); ++i) cfg.approx.push_back(parse_approx(cs.at(i)));
    } else if (a.has("all")) {
      cfg.approx.push_back(parse_approx(a.child("all")));
    }
  }

  if (root.has("candidate")) {
    const ConfigNode c = root.child("candidate");
    cfg.alphas = c.get<std::vector<double>>("alphas", {});
    cfg.proxy_degree = c.get<int>("proxy_degree", 12);
    if (cfg.proxy_degree < 2) c.child("proxy_degree").fail("must be >= 2");
  }

  const ConfigNode v = root.child("validator");
  cfg.validator = v.choice("kind", {"sos", "grid"});
  if (cfg.validator == "sos") {
    cfg.sos.d_sigma1 = v.get<int>("d_sigma1", -1);
    cfg.sos.d_sigma2 = v.get<int>("d_sigma2", -1);
    for (int d : {cfg.sos.d_sigma1, cfg.sos.d_sigma2}) {
      if (d != -1 && (d < 0 || d % 2)) v.fail("multiplier degrees must be even and >= 0");
    }
    cfg.sos.per_pattern = v.get<bool>("per_pattern", false);
  } else {
    cfg.grid.delta0 = v.get<double>("delta0", 0.0);
    cfg.grid.delta_min = v.get<double>("delta_min", 0.0);
    cfg.grid_cert.boundary_samples = v.get<int>("boundary_samples", 5);
    if (cfg.grid_cert.boundary_samples < 2) v.child("boundary_samples").fail("must be >= 2");
  }
  if (root.has("levels")) {
    const ConfigNode l = root.child("levels");
    cfg.levels.rel_tol = l.get<double>("rel_tol", cfg.levels.rel_tol);
    cfg.levels.min_g2 = l.get<double>("gamma2_min", 0.0);
    if (!(cfg.levels.rel_tol > 0.0 && cfg.levels.rel_tol < 1.0)) l.child("rel_tol").fail("must be in (0, 1)");
  }
  cfg.sos.levels = cfg.levels;
  cfg.grid_cert.levels = cfg.levels;
  if (root.has("output")) cfg.output = root.child("output").json();
  return cfg;
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineResult {
  Certificate cert;
  RescaledField field;
  std::vector<PolyApprox> approx;
  std::optional<LyapunovCandidate> candidate;
  std::optional<PolyApprox> proxy;  // polynomial proxy of a non-polynomial candidate
  std::vector<EigenPair> pairs;
  std::vector<std::string> warnings;
  std::optional<ValiditySystem> validity;
  std::optional<AdaptiveGrid> grid;
  nlohmann::json timing = nlohmann::json::object();
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline PolyApprox build_approx(const ApproxSpec& spec, const ScalarField& f, const Box& box, std::uint64_t seed,
                               int component) {
  switch (spec.kind) {
    case ApproxSpec::Kind::exact: {
      if (!f.is_polynomial()) {
        throw std::invalid_argument("component " + std::to_string(component) +
                                    " is not polynomial; choose a taylor or minimax approximation");
      }
      PolyApprox a;
      a.P = *f.poly;
      a.c = 0.0;
      a.s = 1;
      a.domain = box;
      return a;
    }
    case ApproxSpec::Kind::taylor: {
      PolyApprox a = taylor_approx(f, spec.order, 0.0, box);
      a.c = spec.c ? *spec.c
                   : estimate_taylor_constant([&](const Point& x) { return f(x); }, a.P, spec.order, box);
      return a;
    }
    case ApproxSpec::Kind::minimax: {
      RemezOptions ro;
      ro.tol = spec.tol;
      ro.max_rounds = spec.max_rounds;
      ro.seed = seed + 1000 * static_cast<std::uint64_t>(component);
      ro.min_degree = 1;
      return remez_minimax([&](const Point& x) { return f(x); }, spec.degree, box, ro);
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace detail

inline PipelineResult run_pipeline(const RunConfig& cfg) {
  using clock = std::chrono::steady_clock;
  PipelineResult out;
  auto t0 = clock::now();
  const VectorField F = system_from_json(cfg.system);
  const int n = F.dim();
  if (F.residual_at_origin() > 1e-10) throw std::invalid_argument("system: origin is not an equilibrium");
  out.field = rescale_to_unit_box(F);
  const VectorField& G = out.field.field;
  const Box& box = G.domain();

  // Error models on the rescaled domain.
  std::vector<ApproxSpec> specs = cfg.approx;
  if (specs.size() == 1 && n > 1) specs.assign(n, specs[0]);
  if (specs.empty()) specs.assign(n, ApproxSpec{});
  if (static_cast<int>(specs.size()) != n) {
    throw ConfigError("config: /approximation/components: need one entry per component (" + std::to_string(n) + ")");
  }
  for (int i = 0; i < n; ++i) out.approx.push_back(detail::build_approx(specs[i], G.component(i), box, cfg.seed, i));
  out.timing["approximation"] = detail::seconds_since(t0);

  // Field seen by the generator: the proxy (option 1) or the exact field.
  std::vector<SparsePoly> proxies;
  for (const auto& a : out.approx) proxies.push_back(a.P);
  const VectorField Fp = VectorField::polynomial(proxies, box, G.name());
  const VectorField& Fg = cfg.option == 1 ? Fp : G;

  t0 = clock::now();
  Basis basis = cfg.basis == "monomial"
                    ? Basis::monomial(n, cfg.degree)
                    : (cfg.rbf_grid > 0 ? Basis::rbf_grid(Box::cube(n, 1.0), cfg.rbf_grid, cfg.eta)
                                        : Basis::gaussian_rbf(cfg.centers, cfg.eta));
  if (basis.dim() != n) throw ConfigError("config: /basis/centers: dimension mismatch with the system");
  GeneratorMatrix L;
  if (cfg.projection == "truncation") {
    if (basis.kind() != Basis::Kind::monomial) {
      throw ConfigError("config: /projection/kind: truncation requires a monomial basis");
    }
    if (!Fg.is_polynomial()) {
      throw ConfigError("config: /projection/kind: truncation requires a polynomial field (use option 1 or l2)");
    }
    L = build_generator_truncation(Fg, basis);
  } else {
    const int M = cfg.samples > 0 ? cfg.samples : default_l2_samples(basis.size());
    L = build_generator_l2(Fg, basis, Box::cube(n, cfg.pi_half), M, cfg.seed);
  }
  const Eigen::MatrixXd J = jacobian_at_origin(Fg);
  out.pairs = principal_eigenpairs(L, J, 0.1, &out.warnings);
  std::vector<double> alphas = cfg.alphas;
  if (alphas.empty()) alphas.assign(out.pairs.size(), 1.0);
  if (alphas.size() != out.pairs.size()) {
    throw ConfigError("config: /candidate/alphas: need " + std::to_string(out.pairs.size()) + " values");
  }
  out.candidate = assemble_candidate(out.pairs, alphas, L.basis);
  out.timing["candidate"] = detail::seconds_since(t0);

  t0 = clock::now();
  SparsePoly V;
  if (out.candidate->is_polynomial()) {
    V = out.candidate->poly();
  } else {
    RemezOptions ro;
    ro.seed = cfg.seed + 77;
    ro.min_degree = 2;
    const LyapunovCandidate& cand = *out.candidate;
    out.proxy = remez_minimax([&](const Point& x) { return cand(x); }, cfg.proxy_degree, box, ro);
    V = out.proxy->P;
  }
  out.validity = build_validity_system(V, out.approx, box);
  out.timing["validity"] = detail::seconds_since(t0);

  t0 = clock::now();
  Certificate& c = out.cert;
  c.V = V;
  c.scale = out.field.map.scale;
  c.validator = cfg.validator;
  c.name = cfg.name;
  c.system = cfg.system;
  for (const auto& a : out.approx) c.error_models.push_back(a.to_json()["error_model"]);
  c.provenance = {{"config_hash", config_hash(cfg.raw)},
                  {"seed", cfg.seed},
                  {"basis", L.basis.to_json()},
                  {"projection", cfg.projection},
                  {"option", cfg.option},
                  {"eigenvalues", to_json(out.pairs)},
                  {"warnings", out.warnings}};
  if (out.proxy) c.provenance["candidate_proxy"] = out.proxy->to_json()["error_model"];
  LevelSearchResult search;
  if (cfg.validator == "sos") {
    const SosCertification s = certify_levels_sos(*out.validity, cfg.sos);
    search = s.search;
    c.degrees = {{"d_sigma1", s.d_sigma1}, {"d_sigma2", s.d_sigma2}};
    c.diagnostics = s.diagnostics();
  } else {
    out.grid = build_grid(*out.validity, cfg.grid);
    out.timing["grid_build"] = out.grid->seconds();
    const GridCertification g = certify_levels_grid(*out.grid, V, cfg.grid_cert);
    search = g.search;
    c.degrees = {{"delta0", out.grid->delta0()}, {"delta_min", out.grid->delta_min()}};
    c.diagnostics = g.diagnostics();
  }
  c.certified = search.found;
  c.gamma1 = search.found ? search.g1 : 0.0;
  c.gamma2 = search.found ? search.g2 : 0.0;
  out.timing["validation"] = detail::seconds_since(t0);
  return out;
}

// ---------------------------------------------------------------------------
// Sampling utilities

struct AreaEstimate {
  double fraction = 0.0;
  double std_error = 0.0;
  long samples = 0;
};

inline Point uniform_point(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Point x(box.dim());
  for (int j = 0; j < box.dim(); ++j) x[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * u(rng);
  return x;
}

/// Rescaled domain of a certificate: the original box divided by the scale.
inline Box certificate_domain(const Certificate& c) {
  const Box orig = system_from_json(c.system).domain();
  return Box(orig.lo.cwiseQuotient(c.scale), orig.hi.cwiseQuotient(c.scale));
}

/// vol({V <= g2}) / vol(domain) by Monte Carlo.
inline AreaEstimate certified_area(const Certificate& c, long budget = 100000, std::uint64_t seed = 1) {
  AreaEstimate out;
  out.samples = budget;
  if (!c.certified || c.gamma2 <= 0.0 || budget <= 0) return out;
  const Box box = certificate_domain(c);
  const CompiledPoly V(c.V);
  std::mt19937_64 rng(seed);
  long hit = 0;
  for (long k = 0; k < budget; ++k) hit += V(uniform_point(box, rng)) <= c.gamma2;
  const double p = static_cast<double>(hit) / static_cast<double>(budget);
  out.fraction = p;
  out.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(budget));
  return out;
}

// ---------------------------------------------------------------------------
// Combination of certificates

struct CombinedCertificate {
  bool accepted = false;
  std::vector<Certificate> certs;
  long samples = 0;
  std::optional<Point> witness;  // rescaled coordinates
  std::string message;
  bool converges_to_origin = false;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : certs) arr.push_back(c.to_json());
    nlohmann::json j = {{"accepted", accepted},
                        {"nesting_check", {{"method", "sampling"}, {"samples", samples}}},
                        {"converges_to_origin", converges_to_origin},
                        {"message", message},
                        {"certificates", arr}};
    if (witness) {
      j["witness"] = std::vector<double>(witness->data(), witness->data() + witness->size());
      const Point xo = witness->cwiseProduct(certs.front().scale);
      j["witness_original"] = std::vector<double>(xo.data(), xo.data() + xo.size());
    }
    return j;
  }
};

namespace detail {

// Largest r <= r_max with V(r u) <= g along the ray, by bisection after the
// first crossing found on a coarse scan.
inline double ray_level(const CompiledPoly& V, const Point& u, double g, double r_max) {
  const int steps = 200;
  double prev = 0.0;
  for (int k = 1; k <= steps; ++k) {
    const double r = r_max * k / steps;
    if (V(Point(r * u)) > g) {
      double lo = prev, hi = r;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (V(Point(mid * u)) <= g) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return lo;
    }
    prev = r;
  }
  return r_max;
}

}  // namespace detail

/// Checks union_i {V_i <= g1_i} inside intersection_i {V_i <= g2_i} by
/// sampling: half the budget uniformly on the domain, half along rays in the
/// inner sets up to (and on) their boundary.
inline CombinedCertificate combine(std::vector<Certificate> certs, long budget = 100000, std::uint64_t seed = 1) {
  if (certs.empty()) throw std::invalid_argument("combine: no certificates");
  for (const auto& c : certs) {
    if (c.system != certs.front().system || c.dim() != certs.front().dim() ||
        (c.scale - certs.front().scale).cwiseAbs().maxCoeff() > 1e-12 * certs.front().scale.cwiseAbs().maxCoeff()) {
      throw std::invalid_argument("combine: certificates refer to different systems or coordinates");
    }
  }
  // Canonical order makes the result independent of the input order.
  std::sort(certs.begin(), certs.end(), [](const Certificate& a, const Certificate& b) {
    const std::string ka = a.to_json().dump(), kb = b.to_json().dump();
    return ka < kb;
  });
  certs.erase(std::unique(certs.begin(), certs.end(),
                          [](const Certificate& a, const Certificate& b) { return a.to_json() == b.to_json(); }),
              certs.end());
  CombinedCertificate out;
  out.certs = certs;
  for (const auto& c : certs) {
    if (!c.certified) {
      out.message = "certificate '" + c.name + "' is not certified";
      return out;
    }
    out.converges_to_origin = out.converges_to_origin || c.gamma1 == 0.0;
  }
  if (certs.size() == 1) {
    out.accepted = true;
    out.message = "single certificate";
    return out;
  }
  const int n = certs.front().dim();
  const Box box = certificate_domain(certs.front());
  std::vector<CompiledPoly> Vs;
  for (const auto& c : certs) Vs.emplace_back(c.V);
  auto check = [&](const Point& y) {
    bool inner = false, outer = true;
    for (std::size_t i = 0; i < certs.size(); ++i) {
      const double v = Vs[i](y);
      inner = inner || v <= certs[i].gamma1;
      outer = outer && v <= certs[i].gamma2;
    }
    return !inner || outer;
  };
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const long half = budget / 2;
  long used = 0;
  for (long k = 0; k < half; ++k, ++used) {
    const Point y = uniform_point(box, rng);
    if (!check(y)) {
      out.witness = y;
      break;
    }
  }
  std::vector<std::size_t> inner;
  for (std::size_t i = 0; i < certs.size(); ++i) {
    if (certs[i].gamma1 > 0.0) inner.push_back(i);
  }
  const double r_max = box.diameter();
  for (long k = 0; !out.witness && !inner.empty() && k < budget - half; ++k, ++used) {
    const std::size_t i = inner[k % inner.size()];
    Point u(n);
    for (int j = 0; j < n; ++j) u[j] = gauss(rng);
    u.normalize();
    const double r = detail::ray_level(Vs[i], u, certs[i].gamma1, r_max);
    const double t = k % 4 == 0 ? 1.0 : std::pow(u01(rng), 1.0 / n);
    const Point y = t * r * u;
    if (!check(y)) out.witness = y;
  }
  out.samples = used;
  if (out.witness) {
    out.message = "nesting violated at a sampled point";
    return out;
  }
  out.accepted = true;
  out.message = "nesting verified by sampling";
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory oracle

struct OracleOptions {
  int count = 500;
  double h = 1e-2;
  double T = 500.0;
  double zero_level = 1e-6;  // g1 = 0 counts as reached at V <= zero_level * g2
  double exit_tol = 1e-6;    // relative slack on leaving {V <= g2}
  std::uint64_t seed = 1;
  long max_tries = 20000000;
};

struct OracleResult {
  int samples = 0;
  int violations = 0;
  std::optional<Point> witness;
  double max_time = 0.0;
};

/// Initial conditions in union_i {V_i <= g2_i}; success once the state lies in
/// intersection_i {V_i <= g1_i}; failure when it leaves the union first or
/// does not arrive before T. Rescaled coordinates, exact rescaled field.
inline OracleResult trajectory_oracle(const VectorField& G, const std::vector<Certificate>& certs,
                                      const OracleOptions& opt = {}) {
  if (certs.empty()) throw std::invalid_argument("trajectory_oracle: no certificates");
  OracleResult out;
  std::vector<CompiledPoly> Vs;
  for (const auto& c : certs) {
    if (!c.certified) throw std::invalid_argument("trajectory_oracle: certificate is not certified");
    Vs.emplace_back(c.V);
  }
  auto in_outer = [&](const Point& y, double slack) {
    for (std::size_t i = 0; i < certs.size(); ++i) {
      if (Vs[i](y) <= certs[i].gamma2 * (1.0 + slack)) return true;
    }
    return false;
  };
  auto in_inner = [&](const Point& y) {
    for (std::size_t i = 0; i < certs.size(); ++i) {
      const double g = certs[i].gamma1 > 0.0 ? certs[i].gamma1 : opt.zero_level * certs[i].gamma2;
      if (Vs[i](y) > g) return false;
    }
    return true;
  };
  std::mt19937_64 rng(opt.seed);
  const Box& box = G.domain();
  long tries = 0;
  while (out.samples < opt.count) {
    if (++tries > opt.max_tries) throw std::runtime_error("trajectory_oracle: sublevel set too small to sample");
    Point y = uniform_point(box, rng);
    if (!in_outer(y, 0.0)) continue;
    ++out.samples;
    const Point y0 = y;
    bool left = false;
    const double t = integrate_until(G, y, opt.T, opt.h, [&](double, const Point& x) {
      if (in_inner(x)) return true;
      if (!in_outer(x, opt.exit_tol)) {
        left = true;
        return true;
      }
      return false;
    });
    if (left || !std::isfinite(t)) {
      ++out.violations;
      if (!out.witness) out.witness = y0;
    } else {
      out.max_time = std::max(out.max_time, t);
    }
  }
  return out;
}

}  // namespace kroa
