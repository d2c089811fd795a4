#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/interval_set.hpp"

namespace aggdiff {

enum class Axis { x, y };

/**
 * Layer-cake quantization of a 2D density along one axis.
 *
 * Level j (0-based) is the slab at height h_j = (j + 1/2) dh. For every grid
 * line transverse to `axis`, `lines[line][j]` holds the superlevel set
 * {value > h_j} along that line as an IntervalSet in physical coordinates.
 */
struct QuantizedDensity {
  Density2D geometry;  // grid only; values unused
  Axis axis = Axis::x;
  double level_spacing = 0.0;
  std::vector<std::vector<IntervalSet>> lines;

  std::size_t level_count() const { return lines.empty() ? 0 : lines.front().size(); }
  double level(std::size_t j) const { return (static_cast<double>(j) + 0.5) * level_spacing; }
};

namespace detail {

struct LineView {
  std::size_t count;      // cells along the axis
  std::size_t lines;      // number of transverse lines
  double origin;          // coordinate of the first cell edge along the axis
};

inline LineView line_view(const Density2D& g, Axis axis) {
  return axis == Axis::x ? LineView{g.nx(), g.ny(), g.x0()} : LineView{g.ny(), g.nx(), g.y0()};
}

inline double& cell_along(Density2D& g, Axis axis, std::size_t line, std::size_t k) {
  return axis == Axis::x ? g(k, line) : g(line, k);
}
inline double cell_along(const Density2D& g, Axis axis, std::size_t line, std::size_t k) {
  return axis == Axis::x ? g(k, line) : g(line, k);
}

}  // namespace detail

/// Superlevel runs of every line at levels h_j = (j + 1/2) max / L.
inline QuantizedDensity quantize_levels(const Density2D& rho, std::size_t levels, Axis axis = Axis::x) {
  if (levels < 1) throw ConfigError("quantize_levels: level count must be >= 1");
  QuantizedDensity q;
  q.geometry = rho.zeros_like();
  q.axis = axis;
  q.level_spacing = rho.max() / static_cast<double>(levels);
  const auto view = detail::line_view(rho, axis);
  const double dx = rho.dx();
  q.lines.assign(view.lines, std::vector<IntervalSet>(levels));
  if (q.level_spacing <= 0.0) return q;
  std::vector<double> line(view.count);
  for (std::size_t l = 0; l < view.lines; ++l) {
    for (std::size_t k = 0; k < view.count; ++k) line[k] = detail::cell_along(rho, axis, l, k);
    const double line_max = *std::max_element(line.begin(), line.end());
    for (std::size_t j = 0; j < levels; ++j) {
      const double h = q.level(j);
      if (h >= line_max) break;
      std::vector<std::pair<double, double>> runs;
      std::size_t k = 0;
      while (k < view.count) {
        if (line[k] > h) {
          const std::size_t start = k;
          while (k < view.count && line[k] > h) ++k;
          runs.emplace_back(view.origin + static_cast<double>(start) * dx, view.origin + static_cast<double>(k) * dx);
        } else {
          ++k;
        }
      }
      q.lines[l][j] = IntervalSet::from_endpoints(runs);
    }
  }
  return q;
}

namespace detail {

// Radii where the piecewise-linear profile rho.value_at(r) exceeds h, as
// disjoint intervals (r1, r2).
inline std::vector<std::pair<double, double>> radial_superlevel(const RadialDensity& rho, double h) {
  std::vector<std::pair<double, double>> out;
  const std::size_t n = rho.size();
  if (n == 0) return out;
  std::vector<std::pair<double, double>> nodes;  // (r, value)
  nodes.reserve(n + 2);
  nodes.emplace_back(0.0, rho[0]);
  for (std::size_t i = 0; i < n; ++i) nodes.emplace_back(rho.radius(i), rho[i]);
  nodes.emplace_back(rho.rmax(), 0.0);
  auto push = [&](double a, double b) {
    if (b <= a) return;
    if (!out.empty() && out.back().second >= a) out.back().second = std::max(out.back().second, b);
    else out.emplace_back(a, b);
  };
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const auto [ra, va] = nodes[k];
    const auto [rb, vb] = nodes[k + 1];
    if (va <= h && vb <= h) continue;
    if (va > h && vb > h) {
      push(ra, rb);
      continue;
    }
    const double cross = ra + (h - va) / (vb - va) * (rb - ra);
    if (va > h) push(ra, cross);
    else push(cross, rb);
  }
  return out;
}

}  // namespace detail

/**
 * Layer-cake quantization of a radial density centered at the origin, on the
 * lines of `geometry`. Superlevel sets along each line are the exact chords
 * of the superlevel annuli of the piecewise-linear profile value_at(r), so
 * distinct levels never share an endpoint where the profile is strictly
 * monotone.
 */
inline QuantizedDensity quantize_levels(const RadialDensity& rho, const Density2D& geometry, std::size_t levels,
                                        Axis axis = Axis::x) {
  if (levels < 1) throw ConfigError("quantize_levels: level count must be >= 1");
  if (rho.dimension() != 2) throw ConfigError("quantize_levels: radial density must be two-dimensional");
  QuantizedDensity q;
  q.geometry = geometry.zeros_like();
  q.axis = axis;
  q.level_spacing = rho.max() / static_cast<double>(levels);
  const auto view = detail::line_view(geometry, axis);
  q.lines.assign(view.lines, std::vector<IntervalSet>(levels));
  if (q.level_spacing <= 0.0) return q;
  for (std::size_t j = 0; j < levels; ++j) {
    const auto annuli = detail::radial_superlevel(rho, q.level(j));
    if (annuli.empty()) break;
    for (std::size_t l = 0; l < view.lines; ++l) {
      const double t = axis == Axis::x ? geometry.y(l) : geometry.x(l);
      std::vector<std::pair<double, double>> runs;
      for (const auto& [r1, r2] : annuli) {
        if (r2 <= std::abs(t)) continue;
        const double s2 = std::sqrt(r2 * r2 - t * t);
        if (r1 > std::abs(t)) {
          const double s1 = std::sqrt(r1 * r1 - t * t);
          if (s2 > s1) {
            runs.emplace_back(-s2, -s1);
            runs.emplace_back(s1, s2);
          }
        } else if (s2 > 0.0) {
          runs.emplace_back(-s2, s2);
        }
      }
      q.lines[l][j] = IntervalSet::from_endpoints(runs);
    }
  }
  return q;
}

/// Sum over levels of dh times the interval indicators, rasterized with exact
/// cell-overlap fractions.
inline Density2D reconstruct(const QuantizedDensity& q) {
  Density2D out = q.geometry.zeros_like();
  const auto view = detail::line_view(out, q.axis);
  const double dx = out.dx();
  const double lo = view.origin, hi = view.origin + static_cast<double>(view.count) * dx;
  for (std::size_t l = 0; l < q.lines.size(); ++l) {
    for (const auto& set : q.lines[l]) {
      for (const auto& iv : set.intervals()) {
        const double a = std::max(iv.left(), lo), b = std::min(iv.right(), hi);
        if (b <= a) continue;
        const auto k0 = static_cast<std::size_t>(std::floor((a - lo) / dx));
        const auto k1 = std::min(view.count - 1, static_cast<std::size_t>(std::floor((b - lo) / dx)));
        for (std::size_t k = k0; k <= k1; ++k) {
          const double ca = lo + static_cast<double>(k) * dx, cb = ca + dx;
          const double overlap = std::min(b, cb) - std::max(a, ca);
          if (overlap > 0.0) detail::cell_along(out, q.axis, l, k) += q.level_spacing * overlap / dx;
        }
      }
    }
  }
  return out;
}

/// Total quantized mass: sum over lines and levels of dh |set| times the
/// transverse cell width.
inline double quantized_mass(const QuantizedDensity& q) {
  double m = 0.0;
  for (const auto& line : q.lines)
    for (const auto& set : line) m += set.measure();
  return m * q.level_spacing * q.geometry.dx();
}

}  // namespace aggdiff
