#pragma once

// Uniform evaluation grids in the plane and marching-squares level curves.

#include <array>
#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "kroa/dynamics.hpp"

namespace kroa {

/// Values on the (nx x ny) vertex grid spanning a 2-D box, endpoints included.
struct ScalarGrid {
  Box box;
  int nx = 0;
  int ny = 0;
  std::vector<double> values;  // row-major in j: values[j * nx + i]

  double x(int i) const { return box.lo[0] + (box.hi[0] - box.lo[0]) * i / (nx - 1); }
  double y(int j) const { return box.lo[1] + (box.hi[1] - box.lo[1]) * j / (ny - 1); }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
};

inline ScalarGrid sample_grid(const std::function<double(const Point&)>& f, const Box& box, int nx = 400,
                              int ny = 400) {
  if (box.dim() != 2) throw std::invalid_argument("sample_grid: 2-D box required");
  if (nx < 2 || ny < 2) throw std::invalid_argument("sample_grid: at least 2 points per axis");
  ScalarGrid g;
  g.box = box;
  g.nx = nx;
  g.ny = ny;
  g.values.resize(static_cast<std::size_t>(nx) * ny);
  Point p(2);
  for (int j = 0; j < ny; ++j) {
    p[1] = g.y(j);
    for (int i = 0; i < nx; ++i) {
      p[0] = g.x(i);
      g.values[static_cast<std::size_t>(j) * nx + i] = f(p);
    }
  }
  return g;
}

struct Polyline {
  std::vector<Eigen::Vector2d> points;
  bool closed = false;
};

/// Level curves {f = level}. A vertex counts as inside when f < level;
/// ambiguous cells are split by the mean of their corners.
inline std::vector<Polyline> marching_squares(const ScalarGrid& g, double level) {
  const int nx = g.nx, ny = g.ny;
  // Edge ids: horizontal edge from (i,j) is 2*(j*nx+i), vertical is that + 1.
  auto h_edge = [nx](int i, int j) { return 2L * (static_cast<long>(j) * nx + i); };
  auto v_edge = [nx](int i, int j) { return 2L * (static_cast<long>(j) * nx + i) + 1; };
  std::unordered_map<long, Eigen::Vector2d> pos;
  auto crossing = [&](long id, int i0, int j0, int i1, int j1) {
    if (pos.count(id)) return;
    const double a = g.at(i0, j0), b = g.at(i1, j1);
    const double t = (level - a) / (b - a);
    pos[id] = Eigen::Vector2d(g.x(i0) + t * (g.x(i1) - g.x(i0)), g.y(j0) + t * (g.y(j1) - g.y(j0)));
  };

  std::vector<std::array<long, 2>> segs;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const double v00 = g.at(i, j), v10 = g.at(i + 1, j), v11 = g.at(i + 1, j + 1), v01 = g.at(i, j + 1);
      const bool b0 = v00 < level, b1 = v10 < level, b2 = v11 < level, b3 = v01 < level;
      const long B = h_edge(i, j), T = h_edge(i, j + 1), L = v_edge(i, j), R = v_edge(i + 1, j);
      std::vector<long> cut;
      if (b0 != b1) { crossing(B, i, j, i + 1, j); cut.push_back(B); }
      if (b1 != b2) { crossing(R, i + 1, j, i + 1, j + 1); cut.push_back(R); }
      if (b2 != b3) { crossing(T, i, j + 1, i + 1, j + 1); cut.push_back(T); }
      if (b3 != b0) { crossing(L, i, j, i, j + 1); cut.push_back(L); }
      if (cut.size() == 2) {
        segs.push_back({cut[0], cut[1]});
      } else if (cut.size() == 4) {
        const bool center = 0.25 * (v00 + v10 + v11 + v01) < level;
        if (center == b0) {
          segs.push_back({B, R});
          segs.push_back({T, L});
        } else {
          segs.push_back({L, B});
          segs.push_back({R, T});
        }
      }
    }
  }

  std::unordered_map<long, std::vector<std::size_t>> touching;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    touching[segs[s][0]].push_back(s);
    touching[segs[s][1]].push_back(s);
  }
  std::vector<bool> used(segs.size(), false);
  // Follows unused segments from edge `at`, appending edge ids.
  auto walk = [&](long at, std::vector<long>& chain) {
    for (;;) {
      long next = -1;
      for (std::size_t s : touching[at]) {
        if (used[s]) continue;
        used[s] = true;
        next = segs[s][0] == at ? segs[s][1] : segs[s][0];
        break;
      }
      if (next < 0) return;
      chain.push_back(next);
      at = next;
    }
  };

  std::vector<Polyline> out;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (used[s]) continue;
    used[s] = true;
    std::vector<long> fwd{segs[s][0], segs[s][1]};
    walk(segs[s][1], fwd);
    std::vector<long> back;
    walk(segs[s][0], back);
    std::vector<long> chain(back.rbegin(), back.rend());
    chain.insert(chain.end(), fwd.begin(), fwd.end());
    Polyline pl;
    pl.closed = chain.size() > 2 && chain.front() == chain.back();
    for (long e : chain) pl.points.push_back(pos.at(e));
    out.push_back(std::move(pl));
  }
  return out;
}

inline void write_grid_csv(std::ostream& os, const ScalarGrid& g, const std::string& value_name = "V") {
  os.precision(12);
  os << "x1,x2," << value_name << '\n';
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) os << g.x(i) << ',' << g.y(j) << ',' << g.at(i, j) << '\n';
  }
}

struct NamedCurves {
  std::string name;
  std::vector<Polyline> curves;
};

/// Columns curve_id, x, y; curve ids are "<name>-<index>".
inline void write_contours_csv(std::ostream& os, const std::vector<NamedCurves>& sets) {
  os.precision(12);
  os << "curve_id,x,y\n";
  for (const auto& set : sets) {
    for (std::size_t k = 0; k < set.curves.size(); ++k) {
      for (const auto& p : set.curves[k].points) os << set.name << '-' << k << ',' << p[0] << ',' << p[1] << '\n';
    }
  }
}

}  // namespace kroa
