#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/error.hpp"

namespace aggdiff {

/// Values sorted in non-increasing order. Throws DomainError on a negative or
/// non-finite entry.
inline std::vector<double> decreasing_rearrangement(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  for (double v : out)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("rearrangement: values must be finite and >= 0");
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

/**
 * Radial profile with the same distribution function as a piecewise-constant
 * function given by (value, measure) pieces.
 *
 * The pieces are laid out by decreasing value in order of volume from the
 * origin; the shell value is the exact average of that layout over the shell,
 * so cumulative masses agree at every shell boundary.
 */
inline RadialDensity radial_from_distribution(std::vector<std::pair<double, double>> pieces, int d, double dr,
                                              std::size_t shells) {
  std::sort(pieces.begin(), pieces.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  RadialDensity out(d, dr, shells);
  auto& v = out.mutable_values();
  std::size_t p = 0;
  double used = 0.0;  // measure of piece p already placed
  for (std::size_t i = 0; i < shells && p < pieces.size(); ++i) {
    const double shell = out.shell_measure(i);
    double room = shell, mass = 0.0;
    while (room > 0.0 && p < pieces.size()) {
      const double avail = pieces[p].second - used;
      const double take = std::min(avail, room);
      mass += take * pieces[p].first;
      room -= take;
      used += take;
      if (used >= pieces[p].second) {
        ++p;
        used = 0.0;
      }
    }
    v[i] = mass / shell;
  }
  return out;
}

/// Radially symmetric decreasing rearrangement of a grid density, sampled on
/// shells of width dr (default dx / 2) out to the radius of the ball whose
/// area equals the grid's.
inline RadialDensity schwarz_rearrangement(const Density2D& rho, double dr = 0.0, std::size_t shells = 0) {
  rho.validate();
  if (dr <= 0.0) dr = 0.5 * rho.dx();
  if (shells == 0) {
    const double r_all = std::sqrt(rho.width() * rho.height() / std::numbers::pi);
    shells = static_cast<std::size_t>(std::ceil(r_all / dr)) + 1;
  }
  std::vector<std::pair<double, double>> pieces;
  pieces.reserve(rho.size());
  for (double x : rho.values())
    if (x > 0.0) pieces.emplace_back(x, rho.cell_measure());
  return radial_from_distribution(std::move(pieces), 2, dr, shells);
}

/// Rearrangement of a radial density onto its own shells.
inline RadialDensity schwarz_rearrangement(const RadialDensity& rho) {
  std::vector<std::pair<double, double>> pieces;
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (rho[i] > 0.0) pieces.emplace_back(rho[i], rho.shell_measure(i));
  return radial_from_distribution(std::move(pieces), rho.dimension(), rho.dr(), rho.size());
}

/**
 * Grid-to-grid rearrangement: the sorted cell values are assigned to cells in
 * order of distance of their centers from the origin, ties broken by
 * row-major cell index.
 */
inline Density2D schwarz_rearrangement_grid(const Density2D& rho) {
  rho.validate();
  const auto sorted = decreasing_rearrangement(rho.values());
  std::vector<std::size_t> order(rho.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> dist(rho.size());
  for (std::size_t j = 0; j < rho.ny(); ++j)
    for (std::size_t i = 0; i < rho.nx(); ++i) dist[j * rho.nx() + i] = std::hypot(rho.x(i), rho.y(j));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  Density2D out = rho.zeros_like();
  auto& v = out.mutable_values();
  for (std::size_t k = 0; k < order.size(); ++k) v[order[k]] = sorted[k];
  return out;
}

struct ConcentrationComparison {
  bool holds = true;
  double worst_radius = 0.0;  // radius where M_f(r) - M_g(r) is largest
  double worst_excess = 0.0;  // that largest difference (<= tol when holds)
};

/**
 * f < g in the sense of mass concentration: the mass of f inside every ball
 * B_r is at most that of g. Both inputs must share a shell grid and be
 * non-increasing. Checked at every shell boundary with additive tolerance
 * `tol` (default 1e-12 times the larger mass).
 */
inline ConcentrationComparison less_concentrated(const RadialDensity& f, const RadialDensity& g, double tol = -1.0) {
  if (f.dimension() != g.dimension() || f.dr() != g.dr() || f.size() != g.size())
    throw DomainError("less_concentrated: densities must share a shell grid");
  const double flat = 1e-12 * std::max({f.max(), g.max(), 1e-300});
  if (!f.is_non_increasing(flat) || !g.is_non_increasing(flat))
    throw DomainError("less_concentrated: inputs must be radially non-increasing");
  const auto cf = f.cumulative_mass(), cg = g.cumulative_mass();
  if (tol < 0.0) tol = 1e-12 * std::max({f.mass(), g.mass(), 1e-300});
  ConcentrationComparison out;
  out.worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cf.size(); ++i) {
    const double excess = cf[i] - cg[i];
    if (excess > out.worst_excess) {
      out.worst_excess = excess;
      out.worst_radius = f.outer(i);
    }
  }
  if (cf.empty()) out.worst_excess = 0.0;
  out.holds = out.worst_excess <= tol;
  return out;
}

/// int f# g# - int f g >= 0 for two samplings on a common grid with cell
/// measure `cell`. Pairing the two sorted sequences realizes int f# g#.
inline double hardy_littlewood_gap(std::span<const double> f, std::span<const double> g, double cell) {
  if (f.size() != g.size()) throw DomainError("hardy_littlewood_gap: sizes differ");
  const auto fs = decreasing_rearrangement(f), gs = decreasing_rearrangement(g);
  double sharp = 0.0, plain = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    sharp += fs[i] * gs[i];
    plain += f[i] * g[i];
  }
  return (sharp - plain) * cell;
}

inline double hardy_littlewood_gap(const Density2D& f, const Density2D& g) {
  if (!f.same_grid(g)) throw DomainError("hardy_littlewood_gap: densities must share a grid");
  return hardy_littlewood_gap(f.values(), g.values(), f.cell_measure());
}

struct SecondMomentVerdict {
  double second_f = 0.0;
  double second_g = 0.0;
  bool rearranged_less_concentrated = false;  // f# < g
  bool holds = true;                          // not (f# < g) or M2[f] >= M2[g] - tol
};

/**
 * If the rearrangement of f is less concentrated than g, then the second
 * moment of f is at least that of g. Both moments are exact for the
 * piecewise-constant densities (a grid cell contributes dx^2/6 beyond its
 * midpoint value). Masses must agree to 1e-10 relative, and g must be
 * non-increasing.
 */
inline SecondMomentVerdict second_moment_compare(const Density2D& f, const RadialDensity& g, double tol = -1.0) {
  const double mf = f.mass(), mg = g.mass();
  if (std::abs(mf - mg) > 1e-10 * std::max(mf, mg)) throw DomainError("second_moment_compare: masses differ");
  if (!g.is_non_increasing(1e-12 * g.max())) throw DomainError("second_moment_compare: g must be non-increasing");
  if (g.dimension() != 2) throw DomainError("second_moment_compare: g must be two-dimensional");
  SecondMomentVerdict out;
  out.second_f = moments(f).second + mf * f.cell_measure() / 6.0;
  out.second_g = moments(g).second;
  if (tol < 0.0) tol = 1e-10 * std::max(out.second_f, out.second_g);
  const auto fs = schwarz_rearrangement(f, g.dr(), g.size());
  if (fs.mass() < mf * (1.0 - 1e-10)) throw DomainError("second_moment_compare: g's shell grid is too small for f");
  out.rearranged_less_concentrated = less_concentrated(fs, g, 1e-10 * mf).holds;
  out.holds = !out.rearranged_less_concentrated || out.second_f >= out.second_g - tol;
  return out;
}

inline SecondMomentVerdict second_moment_compare(const RadialDensity& f, const RadialDensity& g, double tol = -1.0) {
  const double mf = f.mass(), mg = g.mass();
  if (std::abs(mf - mg) > 1e-10 * std::max(mf, mg)) throw DomainError("second_moment_compare: masses differ");
  SecondMomentVerdict out;
  out.second_f = moments(f).second;
  out.second_g = moments(g).second;
  if (tol < 0.0) tol = 1e-10 * std::max(out.second_f, out.second_g);
  out.rearranged_less_concentrated = less_concentrated(schwarz_rearrangement(f), g, 1e-10 * mf).holds;
  out.holds = !out.rearranged_less_concentrated || out.second_f >= out.second_g - tol;
  return out;
}

}  // namespace aggdiff
