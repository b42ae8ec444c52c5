#pragma once

// Bisection over the level pair (g1, g2) against a feasibility oracle.
// Strategy: try g1 = 0 first; otherwise climb a geometric ladder of g1 until
// a thin annulus certifies, then alternately grow g2 and shrink g1.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "kroa/dynamics.hpp"
#include "kroa/polycore.hpp"

namespace kroa {

struct LevelProbe {
  double g1;
  double g2;
  bool ok;
};

struct LevelSearchOptions {
  double rel_tol = 1e-3;
  double ladder_min = 1e-4;  // smallest g1 tried, relative to the cap
  double ladder_factor = 2.0;
  double thin = 0.05;  // relative width of the probing annulus
  int max_rounds = 3;
  double min_g2 = 0.0;  // certificates with a smaller g2 are discarded
};

struct LevelSearchResult {
  bool found = false;
  double g1 = 0.0;
  double g2 = 0.0;
  double cap = 0.0;
  std::vector<LevelProbe> probes;
};

using LevelOracle = std::function<bool(double g1, double g2)>;

inline LevelSearchResult search_levels(double cap, const LevelOracle& oracle, const LevelSearchOptions& opt = {}) {
  LevelSearchResult out;
  out.cap = cap;
  if (!(cap > 0.0) || cap < opt.min_g2) return out;
  auto probe = [&](double g1, double g2) {
    const bool ok = g1 < g2 && oracle(g1, g2);
    out.probes.push_back({g1, g2, ok});
    return ok;
  };
  // Largest g2 in (lo, hi] certified with g1 fixed; lo is known feasible.
  auto grow = [&](double g1, double lo, double hi) {
    if (probe(g1, hi)) return hi;
    while (hi - lo > opt.rel_tol * hi) {
      const double mid = 0.5 * (lo + hi);
      if (probe(g1, mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo;
  };
  // Smallest g1 in [lo, hi) certified with g2 fixed; hi is known feasible.
  auto shrink = [&](double lo, double hi, double g2) {
    if (lo == 0.0 && probe(0.0, g2)) return 0.0;
    while (hi - lo > opt.rel_tol * hi) {
      const double mid = 0.5 * (lo + hi);
      if (probe(mid, g2)) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    return hi;
  };

  // g1 = 0: find any certified g2, then grow.
  for (double g2 = cap; g2 >= opt.ladder_min * cap; g2 /= opt.ladder_factor) {
    if (probe(0.0, g2)) {
      out.found = true;
      out.g1 = 0.0;
      out.g2 = g2 == cap ? cap : grow(0.0, g2, std::min(cap, g2 * opt.ladder_factor));
      if (out.g2 < opt.min_g2) out.found = false;
      return out;
    }
  }

  // Ladder of thin annuli.
  double g1 = -1.0, g2 = -1.0;
  for (double a = opt.ladder_min * cap; a < cap; a *= opt.ladder_factor) {
    const double b = std::min(cap, a * (1.0 + opt.thin));
    if (probe(a, b)) {
      g1 = a;
      g2 = b;
      break;
    }
  }
  if (g1 < 0.0) return out;
  out.found = true;
  for (int round = 0; round < opt.max_rounds; ++round) {
    const double g2_new = g2 < cap ? grow(g1, g2, cap) : g2;
    const double g1_new = shrink(0.0, g1, g2_new);
    const bool moved = g2_new - g2 > opt.rel_tol * g2_new || g1 - g1_new > opt.rel_tol * g1;
    g1 = g1_new;
    g2 = g2_new;
    if (!moved || g1 == 0.0) break;
  }
  out.g1 = g1;
  out.g2 = g2;
  if (g2 < opt.min_g2) out.found = false;
  return out;
}

inline nlohmann::json to_json(const LevelSearchResult& r) {
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : r.probes) probes.push_back({p.g1, p.g2, p.ok});
  return {{"found", r.found}, {"gamma1", r.g1}, {"gamma2", r.g2}, {"cap", r.cap}, {"probes", probes}};
}

/// min of V over a uniform lattice of about `per_face` points on every face
/// of the box, minus `slack`. Keeps {V <= cap} inside the box when V grows
/// away from the origin.
inline double boundary_cap(const std::function<double(const Point&)>& V, const Box& box, int per_face = 1000,
                           double slack = 1e-6) {
  const int n = box.dim();
  const int m = n == 1 ? 1 : std::max(2, static_cast<int>(std::ceil(std::pow(per_face, 1.0 / (n - 1)))));
  long count = 1;
  for (int i = 0; i + 1 < n; ++i) count *= m;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    for (int side = 0; side < 2; ++side) {
      for (long k = 0; k < count; ++k) {
        Point x(n);
        long rem = k;
        for (int i = 0; i < n; ++i) {
          if (i == j) {
            x[i] = side ? box.hi[i] : box.lo[i];
            continue;
          }
          const long t = rem % m;
          rem /= m;
          x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * static_cast<double>(t) / (m - 1);
        }
        best = std::min(best, V(x));
      }
    }
  }
  return best - slack;
}

}  // namespace kroa
