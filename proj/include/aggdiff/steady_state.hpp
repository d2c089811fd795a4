#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/error.hpp"
#include "aggdiff/kernel.hpp"
#include "aggdiff/potential.hpp"

namespace aggdiff {

struct SteadyProfile {
  RadialDensity rho;
  double multiplier = 0.0;      // the constant D in m/(m-1) rho^{m-1} = (D - W*rho)_+
  double support_radius = 0.0;
  double mass = 0.0;
  double m = 2.0;
  double residual = 0.0;        // sup over the support of |m/(m-1) rho^{m-1} + psi - D|
  int iterations = 0;
  std::string kernel_name;
};

struct RadialGrid {
  std::size_t n = 4096;
  double rmax = 8.0;
};

enum class InitialGuess { indicator, gaussian };

struct SteadySolverOptions {
  double damping = 0.5;
  double mass_tol = 1e-10;   // relative
  double el_tol = 1e-8;      // relative to the largest value of m/(m-1) rho^{m-1}
  int max_iter = 20000;
  InitialGuess initial = InitialGuess::indicator;
};

namespace detail {

// rho_i = ((m-1)/m (D - psi_i))_+^{1/(m-1)}
inline void el_profile(std::span<const double> psi, double D, double m, std::vector<double>& out) {
  const double c = (m - 1.0) / m, e = 1.0 / (m - 1.0);
  out.resize(psi.size());
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const double g = D - psi[i];
    out[i] = g > 0.0 ? std::pow(c * g, e) : 0.0;
  }
}

inline double shell_mass(const RadialDensity& grid, const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * grid.shell_measure(i);
  return s;
}

// Bisection for the multiplier giving mass M; psi is frozen.
inline double find_multiplier(const RadialDensity& grid, std::span<const double> psi, double m, double M,
                              std::vector<double>& scratch) {
  double lo = *std::min_element(psi.begin(), psi.end());
  double step = std::max(1.0, std::abs(lo)) * 1e-3;
  double hi = lo + step;
  for (int k = 0; k < 200; ++k) {
    el_profile(psi, hi, m, scratch);
    if (shell_mass(grid, scratch) >= M) break;
    lo = hi;
    step *= 2.0;
    hi += step;
  }
  for (int k = 0; k < 200 && hi - lo > 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi)); ++k) {
    const double mid = 0.5 * (lo + hi);
    el_profile(psi, mid, m, scratch);
    const double mass = shell_mass(grid, scratch);
    if (std::abs(mass - M) <= 1e-14 * M) return mid;
    (mass < M ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double el_residual(const std::vector<double>& rho, std::span<const double> psi, double D, double m) {
  const double c = m / (m - 1.0);
  double r = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i)
    if (rho[i] > 0.0) r = std::max(r, std::abs(c * std::pow(rho[i], m - 1.0) + psi[i] - D));
  return r;
}

// Index one past the last shell of the connected positive run starting at the origin.
inline std::size_t support_end(const std::vector<double>& v) {
  const double floor = 1e-14 * *std::max_element(v.begin(), v.end());
  std::size_t k = 0;
  while (k < v.size() && v[k] > floor) ++k;
  return k;
}

}  // namespace detail

/**
 * Radial steady state of mass M by damped fixed-point iteration on the
 * Euler-Lagrange relation, with the multiplier re-fitted to the mass at every
 * outer step.
 */
inline SteadyProfile solve_radial_steady(double m, double M, const Kernel& kernel, RadialGrid grid = {},
                                         SteadySolverOptions opt = {}) {
  if (!(m > 1.0)) throw ConfigError("steady state: m must be > 1");
  if (!(M > 0.0)) throw ConfigError("steady state: mass must be > 0");
  if (grid.n < 8 || !(grid.rmax > 0.0)) throw ConfigError("steady state: grid needs n >= 8 and rmax > 0");
  if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw ConfigError("steady state: damping must lie in (0, 1]");
  const int d = kernel.dimension;
  RadialDensity rho(d, grid.rmax / static_cast<double>(grid.n), grid.n);
  {
    auto& v = rho.mutable_values();
    for (std::size_t i = 0; i < grid.n; ++i) {
      const double r = rho.radius(i);
      v[i] = opt.initial == InitialGuess::indicator ? (r < 1.0 ? 1.0 : 0.0) : std::exp(-r * r);
    }
    if (rho.mass() == 0.0) v[0] = 1.0;
    const double s = M / rho.mass();
    for (auto& x : v) x *= s;
  }

  std::vector<double> update, history;
  const double c = m / (m - 1.0);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const auto psi = radial_potential(rho, kernel);
    const double D = detail::find_multiplier(rho, psi, m, M, update);
    detail::el_profile(psi, D, m, update);
    const auto& cur = rho.values();
    const double scale = c * std::pow(*std::max_element(cur.begin(), cur.end()), m - 1.0);
    // Residual of c rho^{m-1} = (D - psi)_+ over the whole grid, both branches.
    double res = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i)
      res = std::max(res, std::abs((cur[i] > 0.0 ? c * std::pow(cur[i], m - 1.0) : 0.0) - std::max(D - psi[i], 0.0)));
    const double err = res / scale;
    history.push_back(err);
    const bool mass_ok = std::abs(detail::shell_mass(rho, update) - M) <= opt.mass_tol * M;
    if (err <= opt.el_tol && mass_ok) {
      if (update.back() > 0.0) throw DomainError("steady state: support reaches rmax; enlarge the domain");
      SteadyProfile out;
      out.rho = RadialDensity(d, rho.dr(), update);
      const auto psi_final = radial_potential(out.rho, kernel);
      std::vector<double> scratch;
      out.multiplier = detail::find_multiplier(out.rho, psi_final, m, M, scratch);
      out.residual = detail::el_residual(update, psi_final, out.multiplier, m);
      out.mass = out.rho.mass();
      out.m = m;
      out.iterations = it;
      out.kernel_name = kernel.name;
      // Support edge: zero crossing of D - psi between the last positive shell
      // center and the next one.
      const std::size_t end = detail::support_end(update);
      out.support_radius = out.rho.outer(end - 1);
      if (end < grid.n) {
        const double g0 = out.multiplier - psi_final[end - 1], g1 = out.multiplier - psi_final[end];
        if (g0 > 0.0 && g1 <= 0.0) out.support_radius = out.rho.radius(end - 1) + out.rho.dr() * g0 / (g0 - g1);
      }
      for (std::size_t i = end; i < grid.n; ++i) out.rho[i] = 0.0;
      if (!out.rho.is_non_increasing(1e-12 * out.rho.max()))
        throw IterationError("steady state: converged profile is not radially non-increasing", history);
      return out;
    }
    auto& v = rho.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - opt.damping) * v[i] + opt.damping * update[i];
  }
  throw IterationError("steady state: no convergence within max_iter", history);
}

/// rho_new(x) = L^{1/(m-1)} rho(L^{-b} x), L = M_new / M, b = (m-2)/(2(m-1)),
/// represented exactly on the shell grid scaled by L^b. Two dimensions only.
inline SteadyProfile rescale_steady(const SteadyProfile& p, double new_mass) {
  if (p.rho.dimension() != 2) throw ConfigError("rescale_steady: the scaling law is two-dimensional");
  if (!(new_mass > 0.0)) throw ConfigError("rescale_steady: mass must be > 0");
  const double lambda = new_mass / p.mass;
  const double b = (p.m - 2.0) / (2.0 * (p.m - 1.0));
  const double stretch = std::pow(lambda, b), height = std::pow(lambda, 1.0 / (p.m - 1.0));
  SteadyProfile out = p;
  std::vector<double> v(p.rho.values().begin(), p.rho.values().end());
  for (auto& x : v) x *= height;
  out.rho = RadialDensity(2, p.rho.dr() * stretch, std::move(v));
  out.mass = out.rho.mass();
  out.support_radius = p.support_radius * stretch;
  // psi picks up M b log(L) / 2pi under the dilation, for the unshifted log kernel.
  out.multiplier = lambda * (p.multiplier + p.mass * b * std::log(lambda) / (2.0 * std::numbers::pi));
  out.residual = p.residual * lambda;
  return out;
}

struct ExponentTrace {
  double m = 0.0;
  int d = 0;
  char regime = 'C';                 // 'A' (d <= 2), 'B' (m > d/2) or 'C'
  double start = 0.0;                // -d/m
  std::vector<double> iterates;      // start, g(start), ... up to the first positive value
  std::optional<std::size_t> log_step;  // index of an iterate equal to -2
  int steps_to_positive = 0;
  std::optional<double> fixed_point;  // 2/(m-2) when m != 2
};

/**
 * Iterates g(p) = (p + 2)/(m - 1) from -d/m until the value is positive. An
 * iterate equal to -2 is the logarithmic case: it is flagged and replaced by
 * -1 before the next application of g.
 */
inline ExponentTrace exponent_iteration(double m, int d) {
  if (d < 1) throw DomainError("exponent_iteration: dimension must be >= 1");
  if (!(m > 2.0 - 2.0 / d) || !(m > 1.0)) throw DomainError("exponent_iteration: requires m > 2 - 2/d and m > 1");
  ExponentTrace t;
  t.m = m;
  t.d = d;
  t.start = -static_cast<double>(d) / m;
  if (m != 2.0) t.fixed_point = 2.0 / (m - 2.0);
  if (d <= 2 || m > 0.5 * d) {
    t.regime = d <= 2 ? 'A' : 'B';
    t.iterates = {t.start};
    return t;
  }
  double p = t.start;
  t.iterates.push_back(p);
  while (p <= 0.0) {
    if (std::abs(p + 2.0) <= 1e-12) {
      t.log_step = t.iterates.size() - 1;
      p = -1.0;
    }
    p = (p + 2.0) / (m - 1.0);
    t.iterates.push_back(p);
    ++t.steps_to_positive;
    if (t.steps_to_positive > 10000) throw EvaluationError("exponent_iteration: no positive iterate", 0.0);
  }
  return t;
}

struct UniquenessReport {
  std::vector<double> masses;
  std::vector<double> init_distance;     // L1 between indicator and Gaussian starts, per mass
  std::vector<double> scaling_distance;  // L1 between a solve and the rescaled first solve
  std::vector<double> support_ratio;     // R(M_k) / R(M_0)
  std::vector<double> predicted_ratio;   // (M_k / M_0)^{(m-2)/(2(m-1))}
  std::vector<SteadyProfile> profiles;
  bool holds = true;
};

/**
 * Independent solves from two initial guesses per mass, cross-checked against
 * the closed-form rescaling of the first mass (plain L1 distances).
 */
inline UniquenessReport verify_uniqueness_scaling(double m, const std::vector<double>& masses, double tol,
                                                  const Kernel& kernel = log2d(),
                                                  const std::vector<RadialGrid>& grids = {},
                                                  SteadySolverOptions opt = {}) {
  if (masses.size() < 2) throw ConfigError("verify_uniqueness_scaling: needs at least two masses");
  UniquenessReport rep;
  rep.masses = masses;
  for (std::size_t k = 0; k < masses.size(); ++k) {
    const RadialGrid g = grids.empty() ? RadialGrid{} : grids[std::min(k, grids.size() - 1)];
    auto o1 = opt, o2 = opt;
    o1.initial = InitialGuess::indicator;
    o2.initial = InitialGuess::gaussian;
    auto a = solve_radial_steady(m, masses[k], kernel, g, o1);
    const auto b = solve_radial_steady(m, masses[k], kernel, g, o2);
    rep.init_distance.push_back(l1_distance(a.rho, b.rho));
    rep.profiles.push_back(std::move(a));
  }
  const auto& base = rep.profiles.front();
  for (std::size_t k = 0; k < masses.size(); ++k) {
    const auto& p = rep.profiles[k];
    const auto scaled = rescale_steady(base, masses[k]);
    rep.scaling_distance.push_back(l1_distance(resample(scaled.rho, p.rho.dr(), p.rho.size()), p.rho));
    rep.support_ratio.push_back(p.support_radius / base.support_radius);
    rep.predicted_ratio.push_back(std::pow(masses[k] / masses[0], (m - 2.0) / (2.0 * (m - 1.0))));
  }
  for (std::size_t k = 0; k < masses.size(); ++k)
    rep.holds = rep.holds && rep.init_distance[k] <= tol && rep.scaling_distance[k] <= tol;
  return rep;
}

}  // namespace aggdiff
