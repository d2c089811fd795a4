#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/error.hpp"
#include "aggdiff/kernel.hpp"
#include "aggdiff/potential.hpp"

namespace aggdiff {

/**
 * Free energy E = S + I of a density, S = int rho^m / (m - 1) and
 * I = (1/2) int rho (W * rho).
 *
 * `shift_correction` is M^2 shift / 2, the amount by which I exceeds the
 * interaction energy computed with the kernel before it was normalized to
 * omega(1) = 0.
 */
struct EnergyBreakdown {
  double entropy = 0.0;
  double interaction = 0.0;
  double total = 0.0;
  double shift_correction = 0.0;
};

namespace detail {

inline void check_exponent(double m) {
  if (!(m > 1.0) || !std::isfinite(m)) throw ConfigError("diffusion exponent m must be > 1");
}

}  // namespace detail

inline EnergyBreakdown free_energy(const Density2D& rho, std::span<const double> psi, double m, double kernel_shift = 0.0) {
  detail::check_exponent(m);
  if (psi.size() != rho.size()) throw ConfigError("free_energy: potential size mismatch");
  EnergyBreakdown e;
  double s = 0.0, i = 0.0;
  const auto v = rho.values();
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (v[k] == 0.0) continue;
    s += std::pow(v[k], m);
    i += v[k] * psi[k];
  }
  const double cell = rho.cell_measure();
  e.entropy = s * cell / (m - 1.0);
  e.interaction = 0.5 * i * cell;
  e.total = e.entropy + e.interaction;
  const double mass = rho.mass();
  e.shift_correction = 0.5 * mass * mass * kernel_shift;
  return e;
}

inline EnergyBreakdown free_energy(const Density2D& rho, const Kernel& kernel, double m) {
  detail::check_exponent(m);
  rho.validate();
  const auto psi = potential(rho, kernel);
  return free_energy(rho, psi, m, kernel.shift);
}

inline EnergyBreakdown free_energy(const RadialDensity& rho, const Kernel& kernel, double m) {
  detail::check_exponent(m);
  const auto psi = radial_potential(rho, kernel);
  EnergyBreakdown e;
  for (std::size_t k = 0; k < rho.size(); ++k) {
    if (rho[k] == 0.0) continue;
    const double w = rho.shell_measure(k);
    e.entropy += std::pow(rho[k], m) * w;
    e.interaction += rho[k] * psi[k] * w;
  }
  e.entropy /= (m - 1.0);
  e.interaction *= 0.5;
  e.total = e.entropy + e.interaction;
  const double mass = rho.mass();
  e.shift_correction = 0.5 * mass * mass * kernel.shift;
  return e;
}

/// h = m/(m-1) rho^{m-1} + W * rho. With the attractive kernel storage this is
/// m/(m-1) rho^{m-1} - N * rho for the Keller-Segel kernel.
inline std::vector<double> h_field(const Density2D& rho, std::span<const double> psi, double m) {
  detail::check_exponent(m);
  if (psi.size() != rho.size()) throw ConfigError("h_field: potential size mismatch");
  std::vector<double> h(rho.size());
  const double c = m / (m - 1.0);
  const auto v = rho.values();
  for (std::size_t k = 0; k < h.size(); ++k) h[k] = (v[k] > 0.0 ? c * std::pow(v[k], m - 1.0) : 0.0) + psi[k];
  return h;
}

inline std::vector<double> h_field(const Density2D& rho, const Kernel& kernel, double m) {
  detail::check_exponent(m);
  return h_field(rho, potential(rho, kernel), m);
}

/// D = int rho |grad h|^2 with central differences on interior cells; cells
/// where rho <= 1e-12 max(rho) are skipped.
inline double dissipation(const Density2D& rho, std::span<const double> h) {
  if (h.size() != rho.size()) throw ConfigError("dissipation: field size mismatch");
  const std::size_t nx = rho.nx(), ny = rho.ny();
  const double floor = 1e-12 * rho.max();
  const double inv = 1.0 / (2.0 * rho.dx());
  double d = 0.0;
  for (std::size_t j = 1; j + 1 < ny; ++j)
    for (std::size_t i = 1; i + 1 < nx; ++i) {
      const double r = rho(i, j);
      if (r <= floor) continue;
      const double gx = (h[j * nx + i + 1] - h[j * nx + i - 1]) * inv;
      const double gy = (h[(j + 1) * nx + i] - h[(j - 1) * nx + i]) * inv;
      d += r * (gx * gx + gy * gy);
    }
  return d * rho.cell_measure();
}

inline double dissipation(const Density2D& rho, const Kernel& kernel, double m) {
  return dissipation(rho, h_field(rho, kernel, m));
}

}  // namespace aggdiff
