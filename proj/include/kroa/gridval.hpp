#pragma once

// Adaptive-grid validation of the validity region and of level-set annuli.
//
// Cells live on an integer lattice whose unit is the minimal side delta_min;
// a cell at depth k has side 2^(K-k) units, K the maximal depth.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "kroa/levels.hpp"
#include "kroa/polycore.hpp"
#include "kroa/validity.hpp"

namespace kroa {

constexpr int kMaxGridDim = 3;

enum class CellStatus { validated, refined, failed, unknown };

inline const char* to_string(CellStatus s) {
  switch (s) {
    case CellStatus::validated: return "validated";
    case CellStatus::refined: return "refined";
    case CellStatus::failed: return "failed";
    case CellStatus::unknown: return "unknown";
  }
  return "?";
}

using Lattice = std::array<std::int64_t, kMaxGridDim>;

struct Cell {
  Lattice corner{};  // lattice units
  int depth = 0;
  CellStatus status = CellStatus::unknown;
};

/// Polynomials of one sign pattern, compiled for the cell test.
struct CompiledPattern {
  CompiledPoly R;
  CompiledPoly grad_sq;  // |grad R|^2

  explicit CompiledPattern(const SparsePoly& p) : R(p) {
    SparsePoly g(p.dim());
    for (const auto& d : p.gradient()) g += d * d;
    grad_sq = CompiledPoly(g);
  }
};

/// Worst-case criterion on the box [lo, lo + delta]^n:
///   max_vertices R + (sqrt(n) delta / 2) max_cell |grad R| < 0.
/// `vertex_values[v]` holds R at vertex v (bit j of v selects hi in axis j).
inline bool cell_criterion(const CompiledPattern& cp, const double* lo, double delta, const double* vertex_values,
                           int n) {
  double vmax = -std::numeric_limits<double>::infinity();
  for (int v = 0; v < (1 << n); ++v) vmax = std::max(vmax, vertex_values[v]);
  if (!(vmax < 0.0)) return false;
  double hi[kMaxGridDim];
  for (int j = 0; j < n; ++j) hi[j] = lo[j] + delta;
  const double g2 = std::max(0.0, cp.grad_sq.box_upper_bound(lo, hi));
  return vmax + 0.5 * std::sqrt(static_cast<double>(n)) * delta * std::sqrt(g2) < 0.0;
}

/// True when R >= 0 on the whole cell, so no sub-cell can be certified.
inline bool cell_excluded(const CompiledPattern& cp, const double* lo, double delta, const double* vertex_values,
                          int n) {
  double vmin = std::numeric_limits<double>::infinity();
  for (int v = 0; v < (1 << n); ++v) vmin = std::min(vmin, vertex_values[v]);
  if (!(vmin >= 0.0)) return false;
  double hi[kMaxGridDim];
  for (int j = 0; j < n; ++j) hi[j] = lo[j] + delta;
  const double g2 = std::max(0.0, cp.grad_sq.box_upper_bound(lo, hi));
  return vmin - 0.5 * std::sqrt(static_cast<double>(n)) * delta * std::sqrt(g2) >= 0.0;
}

/// Single-cell test over all patterns with direct vertex evaluation.
inline bool validate_cell(const ValiditySystem& vs, const Point& corner, double delta) {
  const int n = vs.dim();
  if (n > kMaxGridDim) throw std::invalid_argument("validate_cell: grids support n <= 3");
  for (const auto& r : distinct_patterns(vs.R)) {
    const CompiledPattern cp(r);
    double vals[1 << kMaxGridDim];
    for (int v = 0; v < (1 << n); ++v) {
      double x[kMaxGridDim];
      for (int j = 0; j < n; ++j) x[j] = corner[j] + ((v >> j & 1) ? delta : 0.0);
      vals[v] = cp.R(x);
    }
    if (!cell_criterion(cp, corner.data(), delta, vals, n)) return false;
  }
  return true;
}

struct GridOptions {
  double delta0 = 0.0;     // 0: shortest domain side / 16
  double delta_min = 0.0;  // 0: delta0 / 2^6
};

class AdaptiveGrid {
 public:
  int dim() const { return n_; }
  const Box& domain() const { return domain_; }
  double delta0() const { return unit_ * static_cast<double>(std::int64_t{1} << depth_); }
  double delta_min() const { return unit_; }
  int max_depth() const { return depth_; }
  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<int>& validated() const { return kval_; }
  const Cell& cell(int i) const { return cells_.at(i); }

  double side(const Cell& c) const { return unit_ * static_cast<double>(side_units(c.depth)); }
  Point corner(const Cell& c) const {
    Point x(n_);
    for (int j = 0; j < n_; ++j) x[j] = domain_.lo[j] + unit_ * static_cast<double>(c.corner[j]);
    return x;
  }
  Point lattice_point(const Lattice& p) const {
    Point x(n_);
    for (int j = 0; j < n_; ++j) x[j] = domain_.lo[j] + unit_ * static_cast<double>(p[j]);
    return x;
  }
  std::int64_t side_units(int depth) const { return std::int64_t{1} << (depth_ - depth); }

  /// Leaf containing the lattice cell with corner p (finest resolution), or -1.
  int locate(const Lattice& p) const {
    for (int j = 0; j < n_; ++j) {
      if (p[j] < 0 || p[j] >= extent_[j]) return -1;
    }
    for (int k = 0; k <= depth_; ++k) {
      const std::int64_t s = side_units(k);
      Lattice c{};
      for (int j = 0; j < n_; ++j) c[j] = (p[j] / s) * s;
      auto it = index_.find(key(c, k));
      if (it != index_.end()) return it->second;
    }
    return -1;
  }

  /// Leaves sharing an (n-1)-face with leaf i.
  std::vector<int> face_neighbors(int i) const {
    const Cell& c = cells_[i];
    const std::int64_t s = side_units(c.depth);
    std::unordered_set<int> out;
    for (int j = 0; j < n_; ++j) {
      for (int dir = 0; dir < 2; ++dir) {
        const std::int64_t fixed = dir ? c.corner[j] + s : c.corner[j] - 1;
        // Walk the finest lattice cells along the face.
        std::int64_t count = 1;
        for (int a = 0; a < n_ - 1; ++a) count *= s;
        for (std::int64_t t = 0; t < count; ++t) {
          Lattice p = c.corner;
          p[j] = fixed;
          std::int64_t rem = t;
          for (int a = 0; a < n_; ++a) {
            if (a == j) continue;
            p[a] = c.corner[a] + rem % s;
            rem /= s;
          }
          const int nb = locate(p);
          if (nb >= 0) out.insert(nb);
        }
      }
    }
    std::vector<int> v(out.begin(), out.end());
    std::sort(v.begin(), v.end());
    return v;
  }

  void write_csv(std::ostream& os) const {
    for (int j = 0; j < n_; ++j) os << 'x' << (j + 1) << ',';
    os << "delta,status\n";
    os.precision(17);
    for (const auto& c : cells_) {
      const Point x = corner(c);
      for (int j = 0; j < n_; ++j) os << x[j] << ',';
      os << side(c) << ',' << to_string(c.status) << '\n';
    }
  }

  double seconds() const { return seconds_; }

  nlohmann::json summary() const {
    long failed = 0;
    for (const auto& c : cells_) failed += c.status == CellStatus::failed;
    return {{"leaves", static_cast<long>(cells_.size())},
            {"validated", static_cast<long>(kval_.size())},
            {"failed", failed},
            {"delta0", delta0()},
            {"delta_min", delta_min()}};
  }

  friend AdaptiveGrid build_grid(const ValiditySystem& vs, const GridOptions& opt);

 private:
  std::uint64_t key(const Lattice& c, int depth) const {
    std::uint64_t k = static_cast<std::uint64_t>(depth);
    for (int j = 0; j < n_; ++j) k = (k << 20) | static_cast<std::uint64_t>(c[j]);
    return k;
  }

  int n_ = 0;
  Box domain_;
  double unit_ = 0.0;
  int depth_ = 0;
  Lattice extent_{};  // domain size in lattice units
  std::vector<Cell> cells_;
  std::vector<int> kval_;
  std::unordered_map<std::uint64_t, int> index_;
  double seconds_ = 0.0;
};

inline AdaptiveGrid build_grid(const ValiditySystem& vs, const GridOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n = vs.dim();
  if (n > kMaxGridDim) throw std::invalid_argument("build_grid: grids support n <= 3");
  const Box& box = vs.domain;
  const Point width = box.hi - box.lo;
  const double d0 = opt.delta0 > 0.0 ? opt.delta0 : width.minCoeff() / 16.0;
  const double dmin = opt.delta_min > 0.0 ? opt.delta_min : d0 / 64.0;
  const double ratio = d0 / dmin;
  const int depth = static_cast<int>(std::lround(std::log2(ratio)));
  if (depth < 0 || depth > 12 || std::abs(std::ldexp(1.0, depth) - ratio) > 1e-9 * ratio) {
    throw std::invalid_argument("build_grid: delta0 must be a power-of-two multiple of delta_min");
  }
  AdaptiveGrid g;
  g.n_ = n;
  g.domain_ = box;
  g.unit_ = dmin;
  g.depth_ = depth;
  Lattice top{};
  for (int j = 0; j < n; ++j) {
    const double cells = width[j] / d0;
    top[j] = std::llround(cells);
    if (top[j] < 1 || std::abs(cells - static_cast<double>(top[j])) > 1e-9 * cells) {
      throw std::invalid_argument("build_grid: domain side must be a multiple of delta0");
    }
    g.extent_[j] = top[j] << depth;
    if (g.extent_[j] >= (std::int64_t{1} << 20)) throw std::invalid_argument("build_grid: lattice too fine");
  }

  const std::vector<SparsePoly> pats = distinct_patterns(vs.R);
  std::vector<CompiledPattern> cps;
  for (const auto& r : pats) cps.emplace_back(r);
  const int P = static_cast<int>(cps.size());
  const int nv = 1 << n;

  // Vertex cache: lattice point -> R values for every pattern.
  std::unordered_map<std::uint64_t, std::vector<double>> cache;
  auto vertex = [&](const Lattice& p) -> const std::vector<double>& {
    std::uint64_t k = 0;
    for (int j = 0; j < n; ++j) k = (k << 21) | static_cast<std::uint64_t>(p[j]);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    const Point x = g.lattice_point(p);
    std::vector<double> vals(P);
    for (int r = 0; r < P; ++r) vals[r] = cps[r].R(x.data());
    return cache.emplace(k, std::move(vals)).first->second;
  };

  std::deque<Cell> work;
  {
    std::int64_t count = 1;
    for (int j = 0; j < n; ++j) count *= top[j];
    for (std::int64_t t = 0; t < count; ++t) {
      Cell c;
      std::int64_t rem = t;
      for (int j = 0; j < n; ++j) {
        c.corner[j] = (rem % top[j]) << depth;
        rem /= top[j];
      }
      work.push_back(c);
    }
  }
  std::vector<double> vals(static_cast<std::size_t>(P) * nv);
  while (!work.empty()) {
    Cell c = work.front();
    work.pop_front();
    const std::int64_t s = g.side_units(c.depth);
    for (int v = 0; v < nv; ++v) {
      Lattice p = c.corner;
      for (int j = 0; j < n; ++j) p[j] += (v >> j & 1) ? s : 0;
      const auto& vv = vertex(p);
      for (int r = 0; r < P; ++r) vals[static_cast<std::size_t>(r) * nv + v] = vv[r];
    }
    const Point lo = g.corner(c);
    const double delta = g.side(c);
    bool ok = true, excluded = false;
    for (int r = 0; r < P && ok; ++r) {
      const double* vr = &vals[static_cast<std::size_t>(r) * nv];
      ok = cell_criterion(cps[r], lo.data(), delta, vr, n);
      if (!ok) excluded = cell_excluded(cps[r], lo.data(), delta, vr, n);
    }
    if (ok) {
      c.status = CellStatus::validated;
    } else if (c.depth == depth || excluded) {
      c.status = CellStatus::failed;
    } else {
      const std::int64_t h = s / 2;
      for (int v = 0; v < nv; ++v) {
        Cell ch;
        ch.depth = c.depth + 1;
        for (int j = 0; j < n; ++j) ch.corner[j] = c.corner[j] + ((v >> j & 1) ? h : 0);
        work.push_back(ch);
      }
      continue;
    }
    const int idx = static_cast<int>(g.cells_.size());
    g.index_[g.key(c.corner, c.depth)] = idx;
    if (c.status == CellStatus::validated) g.kval_.push_back(idx);
    g.cells_.push_back(c);
  }
  g.seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return g;
}

/// Per-leaf data on V used by the level tests.
class LevelIndex {
 public:
  LevelIndex(const AdaptiveGrid& grid, const SparsePoly& V, int boundary_samples = 5)
      : grid_(grid), V_(V), m_b_(std::max(2, boundary_samples)) {
    const int n = grid.dim();
    SparsePoly gsq(V.dim());
    for (const auto& d : V.gradient()) gsq += d * d;
    const CompiledPoly G(gsq);
    const int nv = 1 << n;
    const auto& cells = grid.cells();
    vmin_.resize(cells.size());
    vmax_.resize(cells.size());
    grad_.resize(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Point lo = grid.corner(cells[i]);
      const double d = grid.side(cells[i]);
      double mn = std::numeric_limits<double>::infinity(), mx = -mn;
      for (int v = 0; v < nv; ++v) {
        Point x = lo;
        for (int j = 0; j < n; ++j) x[j] += (v >> j & 1) ? d : 0.0;
        const double val = V_(x.data());
        mn = std::min(mn, val);
        mx = std::max(mx, val);
      }
      Point hi = lo.array() + d;
      vmin_[i] = mn;
      vmax_[i] = mx;
      grad_[i] = std::sqrt(std::max(0.0, G.box_upper_bound(lo.data(), hi.data())));
    }
  }

  const AdaptiveGrid& grid() const { return grid_; }

  bool crosses(int i, double g) const { return vmin_[i] < g && vmax_[i] > g; }
  bool interior(int i, double g1, double g2) const { return vmin_[i] > g1 && vmax_[i] < g2; }

  /// Range of V over cell i enclosed through the gradient bound.
  std::pair<double, double> enclosure(int i) const {
    const double r = 0.5 * std::sqrt(static_cast<double>(grid_.dim())) * grid_.side(grid_.cell(i)) * grad_[i];
    return {vmin_[i] - r, vmax_[i] + r};
  }

  /// Sampled-boundary proximity test: m_b points per axis on every face,
  /// fill distance from the lattice spacing.
  bool near_level(int i, double g) const {
    const int n = grid_.dim();
    const Cell& c = grid_.cell(i);
    const Point lo = grid_.corner(c);
    const double d = grid_.side(c);
    const double h = d / (m_b_ - 1);
    const double fill = n == 1 ? 0.0 : 0.5 * h * std::sqrt(static_cast<double>(n - 1));
    const double thr = fill * grad_[i];
    long count = 1;
    for (int a = 0; a < n - 1; ++a) count *= m_b_;
    for (int j = 0; j < n; ++j) {
      for (int side = 0; side < 2; ++side) {
        for (long t = 0; t < count; ++t) {
          Point x = lo;
          x[j] += side ? d : 0.0;
          long rem = t;
          for (int a = 0; a < n; ++a) {
            if (a == j) continue;
            x[a] += h * static_cast<double>(rem % m_b_);
            rem /= m_b_;
          }
          if (std::abs(V_(x.data()) - g) < thr) return true;
        }
      }
    }
    return false;
  }

 private:
  const AdaptiveGrid& grid_;
  CompiledPoly V_;
  int m_b_;
  std::vector<double> vmin_, vmax_, grad_;
};

/// Crossing cells plus face neighbors passing the boundary proximity test.
inline std::vector<int> level_cells(const LevelIndex& L, double g) {
  if (g < 0.0) throw std::invalid_argument("level_cells: gamma must be >= 0");
  const auto& cells = L.grid().cells();
  std::vector<char> in(cells.size(), 0);
  std::vector<int> crossing;
  for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
    if (L.crosses(i, g)) {
      in[i] = 1;
      crossing.push_back(i);
    }
  }
  for (int i : crossing) {
    for (int nb : L.grid().face_neighbors(i)) {
      if (!in[nb] && L.near_level(nb, g)) in[nb] = 1;
    }
  }
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
    if (in[i]) out.push_back(i);
  }
  return out;
}

inline std::vector<int> level_cells(const AdaptiveGrid& grid, const SparsePoly& V, double g, int m_b = 5) {
  return level_cells(LevelIndex(grid, V, m_b), g);
}

/// Level cells of both levels, cells with all vertices strictly inside the
/// annulus, and every cell whose gradient enclosure of V meets [g1, g2].
inline std::vector<int> annulus_cells(const LevelIndex& L, double g1, double g2) {
  if (!(g1 < g2)) throw std::invalid_argument("annulus_cells: need g1 < g2");
  const auto& cells = L.grid().cells();
  std::vector<char> in(cells.size(), 0);
  for (int i : level_cells(L, g1)) in[i] = 1;
  for (int i : level_cells(L, g2)) in[i] = 1;
  for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
    if (in[i]) continue;
    const auto [lo, hi] = L.enclosure(i);
    if (L.interior(i, g1, g2) || (hi >= g1 && lo <= g2)) in[i] = 1;
  }
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
    if (in[i]) out.push_back(i);
  }
  return out;
}

inline std::vector<int> annulus_cells(const AdaptiveGrid& grid, const SparsePoly& V, double g1, double g2,
                                      int m_b = 5) {
  return annulus_cells(LevelIndex(grid, V, m_b), g1, g2);
}

inline bool annulus_validated(const LevelIndex& L, double g1, double g2) {
  for (int i : annulus_cells(L, g1, g2)) {
    if (L.grid().cell(i).status != CellStatus::validated) return false;
  }
  return true;
}

struct GridCertification {
  LevelSearchResult search;
  nlohmann::json grid_summary;
  double seconds = 0.0;

  nlohmann::json diagnostics() const {
    return {{"grid", grid_summary},
            {"probes", static_cast<long>(search.probes.size())},
            {"cap", search.cap}};
  }
};

struct GridCertifyOptions {
  int boundary_samples = 5;
  int cap_samples_per_face = 1000;
  LevelSearchOptions levels;
};

inline GridCertification certify_levels_grid(const AdaptiveGrid& grid, const SparsePoly& V,
                                             const GridCertifyOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  GridCertification out;
  out.grid_summary = grid.summary();
  const LevelIndex L(grid, V, opt.boundary_samples);
  const CompiledPoly Vc(V);
  const double cap = boundary_cap([&](const Point& x) { return Vc(x); }, grid.domain(), opt.cap_samples_per_face);
  out.search = search_levels(cap, [&](double g1, double g2) { return annulus_validated(L, g1, g2); }, opt.levels);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace kroa
