#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/energy.hpp"
#include "aggdiff/error.hpp"
#include "aggdiff/interval_set.hpp"
#include "aggdiff/kernel.hpp"
#include "aggdiff/levels.hpp"
#include "aggdiff/potential.hpp"

namespace aggdiff {

enum class SteinerMode { continuous, modified };

struct SteinerConfig {
  Axis axis = Axis::x;
  std::size_t levels = 256;
  SteinerMode mode = SteinerMode::continuous;
  double h0 = 0.0;          // modified flow: levels below h0 slow down
  double m = 2.0;           // modified flow: speed (h/h0)^{m-1} below h0
  double hyperplane = 0.0;  // position of the symmetry hyperplane along the axis
  std::vector<double> taus;

  void validate() const {
    if (levels < 1) throw ConfigError("steiner: level count must be >= 1");
    if (mode == SteinerMode::modified && !(h0 > 0.0)) throw ConfigError("steiner: modified flow needs h0 > 0");
    if (mode == SteinerMode::modified && !(m > 1.0)) throw ConfigError("steiner: modified flow needs m > 1");
    if (!std::isfinite(hyperplane)) throw ConfigError("steiner: hyperplane must be finite");
    for (double t : taus)
      if (!(t >= 0.0)) throw ConfigError("steiner: tau values must be >= 0");
  }

  /// Speed factor of the slab at height h.
  double speed(double h) const {
    if (mode == SteinerMode::continuous || h >= h0) return 1.0;
    return std::pow(h / h0, m - 1.0);
  }
};

/// Advances every slab of a quantized density by speed(h_j) * tau.
inline QuantizedDensity advance_levels(const QuantizedDensity& q, double tau, const SteinerConfig& cfg) {
  if (!(tau >= 0.0)) throw DomainError("steiner: tau must be >= 0");
  QuantizedDensity out = q;
  for (auto& line : out.lines)
    for (std::size_t j = 0; j < line.size(); ++j)
      if (!line[j].empty()) line[j] = advance_about(line[j], tau * cfg.speed(q.level(j)), cfg.hyperplane);
  return out;
}

/// Continuous Steiner symmetrization S^tau (the mode field is ignored).
inline Density2D steiner_advance(const Density2D& rho, double tau, SteinerConfig cfg) {
  cfg.mode = SteinerMode::continuous;
  cfg.validate();
  rho.validate();
  return reconstruct(advance_levels(quantize_levels(rho, cfg.levels, cfg.axis), tau, cfg));
}

/// Modified flow: slabs below h0 travel at speed (h/h0)^{m-1}.
inline Density2D modified_steiner_advance(const Density2D& rho, double tau, SteinerConfig cfg) {
  cfg.mode = SteinerMode::modified;
  cfg.validate();
  rho.validate();
  return reconstruct(advance_levels(quantize_levels(rho, cfg.levels, cfg.axis), tau, cfg));
}

/// Coordinate along `axis` splitting the mass in half (linear within a cell).
inline double half_mass_hyperplane(const Density2D& rho, Axis axis) {
  const std::size_t n = axis == Axis::x ? rho.nx() : rho.ny();
  std::vector<double> marginal(n, 0.0);
  for (std::size_t j = 0; j < rho.ny(); ++j)
    for (std::size_t i = 0; i < rho.nx(); ++i) marginal[axis == Axis::x ? i : j] += rho(i, j);
  double total = 0.0;
  for (double v : marginal) total += v;
  const double origin = axis == Axis::x ? rho.x0() : rho.y0();
  if (total <= 0.0) return origin + 0.5 * rho.dx() * static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (acc + marginal[k] >= 0.5 * total) {
      const double frac = marginal[k] > 0.0 ? (0.5 * total - acc) / marginal[k] : 0.5;
      return origin + (static_cast<double>(k) + frac) * rho.dx();
    }
    acc += marginal[k];
  }
  return origin + rho.dx() * static_cast<double>(n);
}

struct SymmetryReport {
  bool is_radially_decreasing = false;
  std::array<double, 2> center{0.0, 0.0};
  std::array<double, 2> hyperplane{0.0, 0.0};  // half-mass hyperplanes along x and y
  std::array<double, 2> residual{0.0, 0.0};    // per-axis asymmetry, relative to max rho
  double worst_residual = 0.0;
};

namespace detail {

// Largest deviation of a sampled line from its symmetric decreasing
// rearrangement about c: the value at distance s from c is the sorted value of
// rank floor(2 s / dx).
inline double slice_asymmetry(const std::vector<double>& line, double origin, double dx, double c) {
  std::vector<double> sorted(line);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double worst = 0.0;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const double x = origin + (static_cast<double>(k) + 0.5) * dx;
    const auto rank = static_cast<std::size_t>(std::floor(2.0 * std::abs(x - c) / dx));
    const double target = rank < sorted.size() ? sorted[rank] : 0.0;
    worst = std::max(worst, std::abs(line[k] - target));
  }
  return worst;
}

}  // namespace detail

/**
 * Tests symmetric decrease along both grid axes about the half-mass
 * hyperplanes. Each grid line is compared with its centered rearrangement;
 * the input passes when every residual (relative to max rho) is <= tol.
 */
inline SymmetryReport detect_radial_decreasing(const Density2D& rho, double tol) {
  rho.validate();
  if (!(rho.mass() > 0.0)) throw DomainError("detect_radial_decreasing: mass must be > 0");
  SymmetryReport rep;
  const double top = rho.max();
  for (int a = 0; a < 2; ++a) {
    const Axis axis = a == 0 ? Axis::x : Axis::y;
    const double c = half_mass_hyperplane(rho, axis);
    rep.hyperplane[a] = c;
    rep.center[a] = c;
    const auto view = detail::line_view(rho, axis);
    std::vector<double> line(view.count);
    double worst = 0.0;
    for (std::size_t l = 0; l < view.lines; ++l) {
      for (std::size_t k = 0; k < view.count; ++k) line[k] = detail::cell_along(rho, axis, l, k);
      worst = std::max(worst, detail::slice_asymmetry(line, view.origin, rho.dx(), c));
    }
    rep.residual[a] = worst / top;
  }
  rep.worst_residual = std::max(rep.residual[0], rep.residual[1]);
  rep.is_radially_decreasing = rep.worst_residual <= tol;
  return rep;
}

/// Least-squares slope of y against x (with intercept).
inline double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

namespace detail {

// F(x, y) with d^4 F / dx^2 dy^2 = log|(x, y)|, even in both arguments.
// Second differences of F over rectangle corners give the exact integral of
// log|x - y| over a pair of axis-aligned rectangles.
inline double log_rectangle_primitive(double x, double y) {
  x = std::abs(x);
  y = std::abs(y);
  const double x2 = x * x, y2 = y * y, r2 = x2 + y2;
  if (r2 == 0.0) return 0.0;
  const double lg = std::log(r2);
  double angular = 0.0;
  if (x > 0.0 && y > 0.0) {
    const double t = std::atan2(y, x);
    angular = x2 * x * y * t + x * y2 * y * (0.5 * std::numbers::pi - t);
  }
  return -(x2 * x2 + y2 * y2) * lg / 48.0 + x2 * y2 * lg / 8.0 - 25.0 * x2 * y2 / 48.0 + angular / 6.0;
}

struct Jump {
  double at;
  double size;
};

// Jumps of the piecewise-constant profile of one line; coincident jumps merged.
inline std::vector<Jump> line_jumps(const std::vector<IntervalSet>& slabs, double dh) {
  std::vector<Jump> raw;
  for (const auto& set : slabs)
    for (const auto& iv : set.intervals()) {
      raw.push_back({iv.left(), dh});
      raw.push_back({iv.right(), -dh});
    }
  std::sort(raw.begin(), raw.end(), [](const Jump& a, const Jump& b) { return a.at < b.at; });
  std::vector<Jump> out;
  for (const auto& j : raw) {
    if (!out.empty() && j.at - out.back().at <= 1e-13 * (1.0 + std::abs(j.at)))
      out.back().size += j.size;
    else
      out.push_back(j);
  }
  std::erase_if(out, [dh](const Jump& j) { return std::abs(j.size) < 1e-9 * dh; });
  return out;
}

}  // namespace detail

/**
 * Interaction energy (1/2) iint mu(x) mu(y) W(x - y) of the layer-cake
 * function represented by q (constant across each transverse grid line,
 * piecewise constant along it), evaluated in closed form for logarithmic
 * kernels. Throws ConfigError for other kernels.
 */
inline double layer_cake_interaction(const QuantizedDensity& q, const Kernel& kernel) {
  if (kernel.log_coefficient == 0.0 || kernel.dimension != 2)
    throw ConfigError("layer_cake_interaction: needs a two-dimensional logarithmic kernel");
  const double h = q.geometry.dx();
  std::vector<std::vector<detail::Jump>> jumps;
  std::vector<long> index;
  for (std::size_t l = 0; l < q.lines.size(); ++l) {
    auto j = detail::line_jumps(q.lines[l], q.level_spacing);
    if (j.empty()) continue;
    jumps.push_back(std::move(j));
    index.push_back(static_cast<long>(l));
  }
  double total = 0.0;
  for (std::size_t a = 0; a < jumps.size(); ++a) {
    for (std::size_t b = a; b < jumps.size(); ++b) {
      const double l = static_cast<double>(index[b] - index[a]);
      const double yp = (l + 1.0) * h, y0 = l * h, ym = (l - 1.0) * h;
      double s = 0.0;
      for (const auto& p : jumps[a])
        for (const auto& r : jumps[b]) {
          const double u = p.at - r.at;
          s += p.size * r.size *
               (detail::log_rectangle_primitive(u, yp) - 2.0 * detail::log_rectangle_primitive(u, y0) +
                detail::log_rectangle_primitive(u, ym));
        }
      total += (a == b ? 1.0 : 2.0) * s;
    }
  }
  const double mass = quantized_mass(q);
  return -0.5 * kernel.log_coefficient * total + 0.5 * kernel.shift * mass * mass;
}

/// int mu^m / (m - 1) of the layer-cake function represented by q.
inline double layer_cake_entropy(const QuantizedDensity& q, double m) {
  detail::check_exponent(m);
  double s = 0.0;
  for (const auto& line : q.lines) {
    const auto jumps = detail::line_jumps(line, q.level_spacing);
    double value = 0.0;
    for (std::size_t k = 0; k + 1 < jumps.size(); ++k) {
      value += jumps[k].size;
      if (value > 0.0) s += std::pow(value, m) * (jumps[k + 1].at - jumps[k].at);
    }
  }
  return s * q.geometry.dx() / (m - 1.0);
}

/// Free energy of a quantized density: exact on the layer-cake function for
/// logarithmic kernels, otherwise on its rasterization with `op`.
inline EnergyBreakdown layer_cake_energy(const QuantizedDensity& q, const Kernel& kernel, double m,
                                         GridPotential* op = nullptr) {
  EnergyBreakdown e;
  if (kernel.log_coefficient != 0.0 && kernel.dimension == 2) {
    e.entropy = layer_cake_entropy(q, m);
    e.interaction = layer_cake_interaction(q, kernel);
    e.total = e.entropy + e.interaction;
    const double mass = quantized_mass(q);
    e.shift_correction = 0.5 * mass * mass * kernel.shift;
    return e;
  }
  const auto mu = reconstruct(q);
  std::optional<GridPotential> own;
  if (!op) op = &own.emplace(mu, kernel);
  std::vector<double> psi(mu.size());
  op->apply(mu, psi);
  return free_energy(mu, psi, m, kernel.shift);
}

struct InteractionSlopeReport {
  std::vector<double> taus;
  std::vector<double> energies;  // I[S^tau mu] for every tau
  double slope = 0.0;
  double max_increase = 0.0;     // largest I(tau_{k+1}) - I(tau_k)
  bool non_increasing = true;
  bool symmetric_input = false;  // input already symmetric decreasing about the hyperplane
};

/**
 * Interaction energy along the continuous Steiner flow on cfg.taus (sorted
 * ascending). The density is quantized once and I at tau = 0 is that of the
 * quantized density. For logarithmic kernels I is evaluated exactly on the
 * layer-cake representation; other kernels use the rasterized density on the
 * grid. Increases up to `tol` between consecutive taus are accepted.
 */
inline InteractionSlopeReport interaction_energy_slope(const Density2D& rho, const Kernel& kernel, SteinerConfig cfg,
                                                       double tol = 1e-6) {
  cfg.mode = SteinerMode::continuous;
  cfg.validate();
  rho.validate();
  if (cfg.taus.size() < 2) throw ConfigError("interaction_energy_slope: needs at least two tau values");
  if (!std::is_sorted(cfg.taus.begin(), cfg.taus.end())) throw ConfigError("interaction_energy_slope: taus must ascend");
  InteractionSlopeReport rep;
  rep.taus = cfg.taus;
  const auto q = quantize_levels(rho, cfg.levels, cfg.axis);
  const bool exact = kernel.log_coefficient != 0.0 && kernel.dimension == 2;
  std::optional<GridPotential> op;
  if (!exact) op.emplace(rho, kernel);
  std::vector<double> psi(rho.size());
  for (double tau : cfg.taus) {
    const auto moved = advance_levels(q, tau, cfg);
    if (exact) {
      rep.energies.push_back(layer_cake_interaction(moved, kernel));
      continue;
    }
    const auto mu = reconstruct(moved);
    op->apply(mu, psi);
    double s = 0.0;
    for (std::size_t k = 0; k < psi.size(); ++k) s += mu.values()[k] * psi[k];
    rep.energies.push_back(0.5 * s * mu.cell_measure());
  }
  for (std::size_t k = 1; k < rep.energies.size(); ++k)
    rep.max_increase = std::max(rep.max_increase, rep.energies[k] - rep.energies[k - 1]);
  rep.non_increasing = rep.max_increase <= tol;
  rep.slope = fitted_slope(rep.taus, rep.energies);
  // A symmetric decreasing input does not move at all.
  const auto last = advance_levels(q, cfg.taus.back(), cfg);
  rep.symmetric_input = last.lines == q.lines;
  return rep;
}

/// Interaction of two 1D interval unions with kernel K by midpoint quadrature
/// of step `h`: iint_{U1} iint_{U2} K(x - y).
inline double pair_interaction(const IntervalSet& u1, const IntervalSet& u2, const std::function<double(double)>& K,
                               double h) {
  auto nodes = [h](const IntervalSet& u) {
    std::vector<std::pair<double, double>> pts;  // (position, weight)
    for (const auto& iv : u.intervals()) {
      const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(iv.length() / h)));
      const double w = iv.length() / static_cast<double>(n);
      for (std::size_t k = 0; k < n; ++k) pts.emplace_back(iv.left() + (static_cast<double>(k) + 0.5) * w, w);
    }
    return pts;
  };
  const auto a = nodes(u1), b = nodes(u2);
  double s = 0.0;
  for (const auto& [x, wx] : a)
    for (const auto& [y, wy] : b) s += wx * wy * K(x - y);
  return s;
}

/// Forward-difference dI/dtau at tau = 0 for the pair advanced by M^tau.
inline double pair_interaction_slope(const IntervalSet& u1, const IntervalSet& u2,
                                     const std::function<double(double)>& K, double h, double dtau = 1e-4) {
  const double i0 = pair_interaction(u1, u2, K, h);
  const double i1 = pair_interaction(advance(u1, dtau), advance(u2, dtau), K, h);
  return (i1 - i0) / dtau;
}

struct StationarityReport {
  std::vector<double> taus;
  std::vector<double> energies;  // E[mu(tau)] - E[mu(0)]
  double c1 = 0.0, c2 = 0.0;     // E[mu(tau)] - E[mu(0)] ~ c1 tau + c2 tau^2
  double sigma_c1 = 0.0, sigma_c2 = 0.0;
  double h0 = 0.0, gradient_bound = 0.0, delta0 = 0.0;
};

namespace detail {

// Largest central-difference gradient norm of rho^{m-1}.
inline double max_power_gradient(const Density2D& rho, double m) {
  const std::size_t nx = rho.nx(), ny = rho.ny();
  auto p = [&](std::size_t i, std::size_t j) { return std::pow(rho(i, j), m - 1.0); };
  double g = 0.0;
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const double gx = (p(std::min(i + 1, nx - 1), j) - p(i > 0 ? i - 1 : 0, j)) /
                        (rho.dx() * static_cast<double>(std::min(i + 1, nx - 1) - (i > 0 ? i - 1 : 0)));
      const double gy = (p(i, std::min(j + 1, ny - 1)) - p(i, j > 0 ? j - 1 : 0)) /
                        (rho.dx() * static_cast<double>(std::min(j + 1, ny - 1) - (j > 0 ? j - 1 : 0)));
      g = std::max(g, std::hypot(gx, gy));
    }
  return g;
}

}  // namespace detail

namespace detail {

// Largest slope of value_at(r)^{m-1} over the segments of the radial profile.
inline double max_power_gradient(const RadialDensity& rho, double m) {
  double g = 0.0, prev_r = 0.0, prev = rho.size() ? std::pow(rho[0], m - 1.0) : 0.0;
  for (std::size_t i = 0; i <= rho.size(); ++i) {
    const double r = i < rho.size() ? rho.radius(i) : rho.rmax();
    const double p = i < rho.size() ? std::pow(rho[i], m - 1.0) : 0.0;
    if (r > prev_r) g = std::max(g, std::abs(p - prev) / (r - prev_r));
    prev_r = r;
    prev = p;
  }
  return g;
}

// Shared part of the stationarity test once the density is quantized.
inline StationarityReport stationarity_fit(const QuantizedDensity& q, double top, double gradient_bound,
                                           const Kernel& kernel, double m, SteinerConfig cfg) {
  StationarityReport rep;
  if (top == 0.0) {
    rep.taus = cfg.taus.empty() ? std::vector<double>{0.0} : cfg.taus;
    rep.energies.assign(rep.taus.size(), 0.0);
    return rep;
  }
  cfg.mode = SteinerMode::modified;
  cfg.m = m;
  if (!(cfg.h0 > 0.0)) cfg.h0 = 1e-2 * top;
  cfg.validate();
  rep.h0 = cfg.h0;
  rep.gradient_bound = gradient_bound;
  rep.delta0 = gradient_bound > 0.0 ? std::pow(cfg.h0, m - 1.0) / gradient_bound : 1.0;
  if (cfg.taus.empty())
    for (int k = 0; k <= 10; ++k) cfg.taus.push_back(rep.delta0 * k / 10.0);
  rep.taus = cfg.taus;

  std::optional<GridPotential> op;
  if (kernel.log_coefficient == 0.0) op.emplace(q.geometry, kernel);
  GridPotential* opp = op ? &*op : nullptr;
  const double e0 = layer_cake_energy(q, kernel, m, opp).total;
  for (double tau : cfg.taus)
    rep.energies.push_back(layer_cake_energy(advance_levels(q, tau, cfg), kernel, m, opp).total - e0);

  // Normal equations for y = c1 t + c2 t^2.
  double s2 = 0, s3 = 0, s4 = 0, b1 = 0, b2 = 0;
  for (std::size_t k = 0; k < rep.taus.size(); ++k) {
    const double t = rep.taus[k], y = rep.energies[k];
    s2 += t * t;
    s3 += t * t * t;
    s4 += t * t * t * t;
    b1 += t * y;
    b2 += t * t * y;
  }
  const double det = s2 * s4 - s3 * s3;
  if (det <= 0.0) throw ConfigError("stationarity test: need at least two distinct positive tau values");
  rep.c1 = (s4 * b1 - s3 * b2) / det;
  rep.c2 = (s2 * b2 - s3 * b1) / det;
  double rss = 0.0;
  std::size_t points = 0;  // tau = 0 fits exactly and carries no information
  for (std::size_t k = 0; k < rep.taus.size(); ++k) {
    const double t = rep.taus[k];
    const double r = rep.energies[k] - rep.c1 * t - rep.c2 * t * t;
    rss += r * r;
    if (t > 0.0) ++points;
  }
  const double dof = static_cast<double>(points) - 2.0;
  const double var = dof > 0.0 ? rss / dof : 0.0;
  rep.sigma_c1 = std::sqrt(var * s4 / det);
  rep.sigma_c2 = std::sqrt(var * s2 / det);
  return rep;
}

}  // namespace detail

/**
 * Free energy along the modified flow (evaluated as in layer_cake_energy),
 * fitted by c1 tau + c2 tau^2 (no intercept) on cfg.taus, or on 11 equally
 * spaced values in [0, delta0] when cfg.taus is empty. delta0 = h0^{m-1} / C0
 * with C0 the largest gradient of rho^{m-1}; h0 defaults to 1e-2 max rho.
 */
inline StationarityReport stationarity_contradiction_test(const Density2D& rho, const Kernel& kernel, double m,
                                                          SteinerConfig cfg) {
  detail::check_exponent(m);
  rho.validate();
  const double top = rho.max();
  const auto q = quantize_levels(rho, cfg.levels, cfg.axis);
  return detail::stationarity_fit(q, top, top > 0.0 ? detail::max_power_gradient(rho, m) : 0.0, kernel, m,
                                  std::move(cfg));
}

/// Same test for a radial profile centered at the origin, quantized by exact
/// chords on the lines of `geometry` (see the radial quantize_levels).
inline StationarityReport stationarity_contradiction_test(const RadialDensity& rho, const Density2D& geometry,
                                                          const Kernel& kernel, double m, SteinerConfig cfg) {
  detail::check_exponent(m);
  const double top = rho.max();
  const auto q = quantize_levels(rho, geometry, cfg.levels, cfg.axis);
  return detail::stationarity_fit(q, top, detail::max_power_gradient(rho, m), kernel, m, std::move(cfg));
}

}  // namespace aggdiff
