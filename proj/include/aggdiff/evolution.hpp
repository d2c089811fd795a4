#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/energy.hpp"
#include "aggdiff/error.hpp"
#include "aggdiff/kernel.hpp"
#include "aggdiff/potential.hpp"
#include "aggdiff/rearrangement.hpp"
#include "aggdiff/steady_state.hpp"

namespace aggdiff {

enum class InitialKind { gaussian, disk, two_bumps, file, steady };

/// How the advected density is evaluated at a cell face.
enum class FaceReconstruction {
  upwind,   // value of the upwind cell
  limited,  // upwind cell plus a minmod-limited half slope
  centered, // face average while the upwind cell can supply the flux
};

struct InitialSpec {
  InitialKind kind = InitialKind::gaussian;
  std::array<double, 2> center{0.0, 0.0};
  double width = 1.0;       // standard deviation of each Gaussian
  double radius = 1.0;      // disk radius
  double separation = 3.0;  // distance between the two bump centers (along x)
  double weight = 0.5;      // mass fraction carried by the left bump
  double noise = 0.0;       // relative amplitude of multiplicative uniform noise
  std::string path;         // density file for InitialKind::file
};

struct GridSpec {
  std::size_t n = 128;
  double side = 12.0;  // Cartesian grids cover [-side/2, side/2]^2
  double rmax = 8.0;   // radial grids cover [0, rmax)
  bool radial = false;
};

struct SolverConfig {
  double m = 2.0;
  double mass = 1.0;
  std::string kernel = "log2d";  // "log2d" or "gaussian"
  double epsilon = 0.0;          // > 0 selects the regularized log kernel plus eps * Laplacian
  GridSpec grid;
  double safety = 0.2;
  double t_end = 1.0;
  double snapshot_every = 0.0;   // time between stored densities; 0 stores only start and end
  std::size_t diagnostics_every = 1;  // steps between diagnostics records
  InitialSpec initial;
  std::uint64_t seed = 1;
  bool interaction = true;       // false runs pure nonlinear diffusion
  FaceReconstruction reconstruction = FaceReconstruction::centered;

  double mass_tolerance = 1e-10;
  double energy_tolerance = 1e-8;
  double blowup_factor = 10.0;   // allowed growth of max rho within one blow-up window
  double blowup_window = 1.0;

  void validate() const {
    if (!(m > 1.0) || !std::isfinite(m)) throw ConfigError("solver: m must be > 1");
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("solver: mass must be > 0");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("solver: epsilon must be >= 0");
    if (!(safety > 0.0 && safety <= 1.0)) throw ConfigError("solver: safety factor must lie in (0, 1]");
    if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw ConfigError("solver: t_end must be >= 0");
    if (grid.n < 4) throw ConfigError("solver: grid.n must be >= 4");
    if (grid.radial ? !(grid.rmax > 0.0) : !(grid.side > 0.0)) throw ConfigError("solver: grid extent must be > 0");
    if (!(snapshot_every >= 0.0)) throw ConfigError("solver: snapshot cadence must be >= 0");
    if (diagnostics_every == 0) throw ConfigError("solver: diagnostics cadence must be >= 1");
    if (kernel != "log2d" && kernel != "gaussian") throw ConfigError("solver: unknown kernel '" + kernel + "'");
    if (!(blowup_factor > 1.0) || !(blowup_window > 0.0)) throw ConfigError("solver: blow-up factor must be > 1 and window > 0");
    if (!(initial.weight >= 0.0 && initial.weight <= 1.0)) throw ConfigError("solver: two_bumps weight must lie in [0, 1]");
    if (!(initial.width > 0.0) || !(initial.radius > 0.0)) throw ConfigError("solver: initial width and radius must be > 0");
    if (!(initial.noise >= 0.0 && initial.noise < 1.0)) throw ConfigError("solver: noise amplitude must lie in [0, 1)");
  }

  /// True when the run integrates the unregularized 2D logarithmic model.
  bool plain_log() const { return interaction && kernel == "log2d" && epsilon == 0.0; }
};

/// Attractive kernel used by a configuration.
inline Kernel evolution_kernel(const SolverConfig& cfg) {
  if (cfg.kernel == "gaussian") {
    const double c = 1.0 / std::numbers::pi;
    return custom_kernel(
        "gaussian", 2, [c](double r) { return -c * std::exp(-r * r); },
        [c](double r) { return 2.0 * c * r * std::exp(-r * r); });
  }
  if (cfg.kernel != "log2d") throw ConfigError("solver: unknown kernel '" + cfg.kernel + "'");
  return cfg.epsilon > 0.0 ? RegularizedLogKernel(cfg.epsilon).as_kernel() : log2d();
}

struct DiagnosticsRecord {
  double t = 0.0;
  double mass = 0.0;
  double com_x = 0.0, com_y = 0.0;
  double m2 = 0.0;
  double logm = 0.0;
  double entropy = 0.0;      // includes eps * int rho log rho on regularized runs
  double interaction = 0.0;
  double energy = 0.0;
  double dissipation = 0.0;
  double rho_max = 0.0;
  double support_area = 0.0;
  double dt = 0.0;           // step that led to this record (0 at the start)
  std::size_t step = 0;
};

inline constexpr const char* kDiagnosticsHeader =
    "t,mass,com_x,com_y,m2,logm,entropy,interaction,energy,dissipation,rho_max,support_area";

inline std::string to_csv_row(const DiagnosticsRecord& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.t << ',' << r.mass << ',' << r.com_x << ',' << r.com_y << ',' << r.m2 << ',' << r.logm << ','
     << r.entropy << ',' << r.interaction << ',' << r.energy << ',' << r.dissipation << ',' << r.rho_max << ','
     << r.support_area;
  return os.str();
}

struct EvolutionState {
  Density2D rho;
  double t = 0.0;
  std::size_t steps = 0;
  EnergyBreakdown energy;
  double dt = 0.0;
};

struct RadialEvolutionState {
  RadialDensity rho;
  double t = 0.0;
  std::size_t steps = 0;
  EnergyBreakdown energy;
  double dt = 0.0;
};

namespace detail {

inline double minmod(double a, double b) {
  if (a > 0.0 && b > 0.0) return std::min(a, b);
  if (a < 0.0 && b < 0.0) return std::max(a, b);
  return 0.0;
}

// Density at the face between cells with values (l, c | d, r): c and d are the
// neighbours of the face, l and r the next cells out. u is the face velocity.
inline double face_density(FaceReconstruction rec, double u, double l, double c, double d, double r) {
  if (rec == FaceReconstruction::upwind) return u > 0.0 ? c : d;
  return u > 0.0 ? c + 0.5 * minmod(c - l, d - c) : d - 0.5 * minmod(d - c, r - d);
}

// Face flux between cells a (left) and b (right), positive toward b, for
// F = -(pb - pa)/dx - eps (b - a)/dx + rho_face u. In centered mode rho_face
// is the face average unless the total outflow of the upwind cell would then
// exceed its own diffusive outflow plus 2 |u| rho_upwind; the flux is capped
// there.
inline double face_flux(FaceReconstruction rec, double u, double l, double a, double b, double r, double pa,
                        double pb, double eps, double dx) {
  const double diffusive = -(pb - pa + eps * (b - a)) / dx;
  if (u == 0.0) return diffusive;
  if (rec != FaceReconstruction::centered) return diffusive + face_density(rec, u, l, a, b, r) * u;
  const double central = diffusive + 0.5 * (a + b) * u;
  return u > 0.0 ? std::min(central, std::max(diffusive, 0.0) + 2.0 * u * a)
                 : std::max(central, std::min(diffusive, 0.0) + 2.0 * u * b);
}

inline double power_or_zero(double x, double p) {
  if (!(x > 0.0)) return 0.0;
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  if (p == 3.0) return x * x * x;
  return std::pow(x, p);
}

// Mass-neutral removal of rounding negatives; returns the number of clamped
// cells. Values below -floor are reported as a step failure.
inline std::size_t clamp_negatives(std::vector<double>& v, std::span<const double> weight, double floor) {
  double deficit = 0.0, positive = 0.0;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw StepError("evolution: non-finite density after update");
    if (v[i] < 0.0) {
      if (v[i] < -floor) throw StepError("evolution: density became negative beyond rounding (CFL violated)");
      deficit += -v[i] * (weight.empty() ? 1.0 : weight[i]);
      v[i] = 0.0;
      ++clamped;
    } else {
      positive += v[i] * (weight.empty() ? 1.0 : weight[i]);
    }
  }
  if (clamped > 0 && positive > 0.0) {
    const double f = (positive - deficit) / positive;
    for (double& x : v) x *= f;
  }
  return clamped;
}

}  // namespace detail

/**
 * Explicit finite-volume solver for rho_t = Lap(rho^m) + eps Lap(rho) + div(rho grad(W * rho))
 * on a Cartesian grid with no-flux walls.
 *
 * Face flux = -D(rho^m + eps rho) + rho_face u with u = -D psi, psi = W * rho,
 * D the two-point face difference and rho_face upwinded by the sign of u.
 * Each flux leaves one cell and enters its neighbour, so mass is conserved
 * to rounding. The potential of the current density is cached, so one step
 * costs one convolution.
 */
class Solver2D {
 public:
  Solver2D(const SolverConfig& cfg, Density2D initial)
      : cfg_(cfg), kernel_(evolution_kernel(cfg)), op_(initial, kernel_) {
    cfg_.validate();
    if (cfg_.grid.radial) throw ConfigError("solver: radial grid passed to the Cartesian solver");
    initial.validate();
    state_.rho = std::move(initial);
    const std::size_t nx = state_.rho.nx(), ny = state_.rho.ny();
    psi_.assign(nx * ny, 0.0);
    fx_.assign(nx * ny, 0.0);
    fy_.assign(nx * ny, 0.0);
    pm_.assign(nx * ny, 0.0);
    r2_.resize(nx * ny);
    logw_.resize(nx * ny);
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const double x = state_.rho.x(i), y = state_.rho.y(j);
        r2_[j * nx + i] = x * x + y * y;
        logw_[j * nx + i] = std::log1p(x * x + y * y);
      }
    refresh();
    mass0_ = state_.rho.mass();
  }

  const EvolutionState& state() const { return state_; }
  const SolverConfig& config() const { return cfg_; }
  const Kernel& kernel() const { return kernel_; }
  std::span<const double> potential() const { return psi_; }
  std::size_t clamp_events() const { return clamp_events_; }
  double initial_mass() const { return mass0_; }
  double mass() const { return mass_; }
  double max_density() const { return max_; }

  /// CFL step for the current state (infinite for a zero density).
  double stable_dt() const {
    const double dx = state_.rho.dx();
    const double diff = cfg_.m * detail::power_or_zero(max_, cfg_.m - 1.0) + cfg_.epsilon;
    const double denom = 4.0 * diff + dx * grad_;
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return cfg_.safety * dx * dx / denom;
  }

  /// Advances by min(CFL step, positivity bound, dt_cap); returns the step taken.
  double step(double dt_cap = std::numeric_limits<double>::infinity()) {
    auto& rho = state_.rho;
    const std::size_t nx = rho.nx(), ny = rho.ny();
    const double dx = rho.dx();
    auto& v = rho.mutable_values();
    double dt = std::min(stable_dt(), dt_cap);
    if (max_ == 0.0) {
      if (!std::isfinite(dt)) dt = 0.0;
      state_.t += dt;
      state_.dt = dt;
      ++state_.steps;
      return dt;
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) throw StepError("evolution: time step is not positive and finite");

    for (std::size_t k = 0; k < v.size(); ++k) pm_[k] = detail::power_or_zero(v[k], cfg_.m);
    const double eps = cfg_.epsilon;
    const auto rec = cfg_.reconstruction;
    auto at = [&](std::size_t i, std::size_t j) { return v[j * nx + i]; };

    // x faces: fx_[j*nx+i] is the flux through the face between (i,j) and (i+1,j).
    for (std::size_t j = 0; j < ny; ++j) {
      for (std::size_t i = 0; i + 1 < nx; ++i) {
        const std::size_t k = j * nx + i;
        const double u = cfg_.interaction ? -(psi_[k + 1] - psi_[k]) / dx : 0.0;
        const double l = i > 0 ? at(i - 1, j) : at(i, j);
        const double r = i + 2 < nx ? at(i + 2, j) : at(i + 1, j);
        fx_[k] = detail::face_flux(rec, u, l, v[k], v[k + 1], r, pm_[k], pm_[k + 1], eps, dx);
      }
      fx_[j * nx + nx - 1] = 0.0;
    }
    for (std::size_t j = 0; j + 1 < ny; ++j) {
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i, kn = k + nx;
        const double u = cfg_.interaction ? -(psi_[kn] - psi_[k]) / dx : 0.0;
        const double l = j > 0 ? at(i, j - 1) : at(i, j);
        const double r = j + 2 < ny ? at(i, j + 2) : at(i, j + 1);
        fy_[k] = detail::face_flux(rec, u, l, v[k], v[kn], r, pm_[k], pm_[kn], eps, dx);
      }
    }
    for (std::size_t i = 0; i < nx; ++i) fy_[(ny - 1) * nx + i] = 0.0;

    // Positivity guard: the outflow of every cell over dt must not exceed its content.
    double guard = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        double out = std::max(fx_[k], 0.0) + std::max(fy_[k], 0.0);
        if (i > 0) out += std::max(-fx_[k - 1], 0.0);
        if (j > 0) out += std::max(-fy_[k - nx], 0.0);
        if (out > 0.0) guard = std::min(guard, 0.9 * v[k] * dx / out);
      }
    dt = std::min(dt, guard);
    if (!(dt > 0.0)) throw StepError("evolution: positivity bound forces a zero time step");

    const double c = dt / dx;
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        double div = fx_[k] + fy_[k];
        if (i > 0) div -= fx_[k - 1];
        if (j > 0) div -= fy_[k - nx];
        v[k] -= c * div;
      }
    clamp_events_ += detail::clamp_negatives(v, {}, 1e-15);

    state_.t += dt;
    state_.dt = dt;
    ++state_.steps;
    refresh();
    return dt;
  }

  /// Diagnostics of the current state.
  DiagnosticsRecord record() const {
    const auto& rho = state_.rho;
    const std::size_t nx = rho.nx(), ny = rho.ny();
    const auto v = rho.values();
    const double cell = rho.cell_measure();
    DiagnosticsRecord r;
    r.t = state_.t;
    r.step = state_.steps;
    r.dt = state_.dt;
    double sx = 0.0, sy = 0.0, s2 = 0.0, sl = 0.0, mass = 0.0, area = 0.0;
    const double rmax = max_;
    const double floor = 1e-12 * rmax;
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        const double x = v[k];
        if (x == 0.0) continue;
        mass += x;
        sx += x * rho.x(i);
        sy += x * rho.y(j);
        s2 += x * r2_[k];
        sl += x * logw_[k];
        if (x > floor) area += 1.0;
      }
    r.mass = mass * cell;
    if (mass > 0.0) {
      r.com_x = sx / mass;
      r.com_y = sy / mass;
    }
    r.m2 = s2 * cell;
    r.logm = sl * cell;
    r.entropy = state_.energy.entropy;
    r.interaction = state_.energy.interaction;
    r.energy = state_.energy.total;
    r.rho_max = rmax;
    r.support_area = area * cell;

    std::vector<double> h(v.size());
    const double cm = cfg_.m / (cfg_.m - 1.0);
    for (std::size_t k = 0; k < v.size(); ++k) {
      h[k] = (cfg_.interaction ? psi_[k] : 0.0);
      if (v[k] > 0.0) h[k] += cm * detail::power_or_zero(v[k], cfg_.m - 1.0) + (cfg_.epsilon > 0.0 ? cfg_.epsilon * (std::log(v[k]) + 1.0) : 0.0);
    }
    r.dissipation = dissipation(rho, h);
    return r;
  }

 private:
  double max_potential_gradient() const {
    if (!cfg_.interaction) return 0.0;
    const auto& rho = state_.rho;
    const std::size_t nx = rho.nx(), ny = rho.ny();
    double g = 0.0;
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t k = j * nx + i;
        const std::size_t il = i > 0 ? k - 1 : k, ir = i + 1 < nx ? k + 1 : k;
        const std::size_t jl = j > 0 ? k - nx : k, jr = j + 1 < ny ? k + nx : k;
        const double gx = (psi_[ir] - psi_[il]) / ((ir - il) * rho.dx());
        const double gy = (psi_[jr] - psi_[jl]) / (((jr - jl) / nx) * rho.dx());
        g = std::max(g, gx * gx + gy * gy);
      }
    return std::sqrt(g);
  }

  // Recomputes the cached potential and energy for the current density.
  void refresh() {
    const auto& rho = state_.rho;
    if (cfg_.interaction)
      op_.apply(rho, psi_);
    else
      std::fill(psi_.begin(), psi_.end(), 0.0);
    const auto v = rho.values();
    double s = 0.0, sl = 0.0, in = 0.0, mass = 0.0;
    max_ = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      const double x = v[k];
      if (x == 0.0) continue;
      max_ = std::max(max_, x);
      s += detail::power_or_zero(x, cfg_.m);
      if (cfg_.epsilon > 0.0) sl += x * std::log(x);
      in += x * psi_[k];
      mass += x;
    }
    const double cell = rho.cell_measure();
    auto& e = state_.energy;
    e.entropy = s * cell / (cfg_.m - 1.0) + cfg_.epsilon * sl * cell;
    e.interaction = 0.5 * in * cell;
    e.total = e.entropy + e.interaction;
    mass *= cell;
    mass_ = mass;
    e.shift_correction = cfg_.interaction ? 0.5 * mass * mass * kernel_.shift : 0.0;
    grad_ = max_potential_gradient();
  }

  SolverConfig cfg_;
  Kernel kernel_;
  GridPotential op_;
  EvolutionState state_;
  std::vector<double> psi_, fx_, fy_, pm_, r2_, logw_;
  std::size_t clamp_events_ = 0;
  double mass0_ = 0.0;
  double mass_ = 0.0, max_ = 0.0, grad_ = 0.0;  // of the current density
};

/**
 * Radial counterpart of Solver2D on shells [i dr, (i+1) dr): fluxes live on
 * the circles r = (i+1) dr with length 2 pi r, the flux through r = 0
 * vanishes, and the outer wall is closed.
 */
class RadialSolver {
 public:
  RadialSolver(const SolverConfig& cfg, RadialDensity initial) : cfg_(cfg), kernel_(evolution_kernel(cfg)) {
    cfg_.validate();
    if (initial.dimension() != 2) throw ConfigError("radial solver: only two-dimensional densities are supported");
    state_.rho = std::move(initial);
    const std::size_t n = state_.rho.size();
    vol_.resize(n);
    for (std::size_t i = 0; i < n; ++i) vol_[i] = state_.rho.shell_measure(i);
    flux_.assign(n, 0.0);
    pm_.assign(n, 0.0);
    refresh();
    mass0_ = state_.rho.mass();
  }

  const RadialEvolutionState& state() const { return state_; }
  std::span<const double> potential() const { return psi_; }
  std::size_t clamp_events() const { return clamp_events_; }
  double initial_mass() const { return mass0_; }
  double mass() const { return state_.rho.mass(); }
  double max_density() const { return state_.rho.max(); }

  double stable_dt() const {
    const double dr = state_.rho.dr();
    const double diff = cfg_.m * detail::power_or_zero(state_.rho.max(), cfg_.m - 1.0) + cfg_.epsilon;
    double drift = 0.0;
    if (cfg_.interaction)
      for (std::size_t i = 0; i + 1 < psi_.size(); ++i) drift = std::max(drift, std::abs(psi_[i + 1] - psi_[i]) / dr);
    const double denom = 4.0 * diff + dr * drift;
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return cfg_.safety * dr * dr / denom;
  }

  double step(double dt_cap = std::numeric_limits<double>::infinity()) {
    auto& rho = state_.rho;
    auto& v = rho.mutable_values();
    const std::size_t n = v.size();
    const double dr = rho.dr();
    double dt = std::min(stable_dt(), dt_cap);
    if (rho.max() == 0.0) {
      if (!std::isfinite(dt)) dt = 0.0;
      state_.t += dt;
      state_.dt = dt;
      ++state_.steps;
      return dt;
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) throw StepError("radial evolution: time step is not positive and finite");
    for (std::size_t i = 0; i < n; ++i) pm_[i] = detail::power_or_zero(v[i], cfg_.m);
    // flux_[i]: total flux through the circle r = (i + 1) dr (outward positive).
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double u = cfg_.interaction ? -(psi_[i + 1] - psi_[i]) / dr : 0.0;
      const double l = i > 0 ? v[i - 1] : v[i];
      const double r = i + 2 < n ? v[i + 2] : v[i + 1];
      const double f = detail::face_flux(cfg_.reconstruction, u, l, v[i], v[i + 1], r, pm_[i], pm_[i + 1], cfg_.epsilon, dr);
      flux_[i] = f * 2.0 * std::numbers::pi * rho.outer(i);
    }
    flux_[n - 1] = 0.0;
    double guard = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      double out = std::max(flux_[i], 0.0) + (i > 0 ? std::max(-flux_[i - 1], 0.0) : 0.0);
      if (out > 0.0) guard = std::min(guard, 0.9 * v[i] * vol_[i] / out);
    }
    dt = std::min(dt, guard);
    if (!(dt > 0.0)) throw StepError("radial evolution: positivity bound forces a zero time step");
    for (std::size_t i = 0; i < n; ++i) v[i] -= dt * (flux_[i] - (i > 0 ? flux_[i - 1] : 0.0)) / vol_[i];
    clamp_events_ += detail::clamp_negatives(v, vol_, 1e-15);
    state_.t += dt;
    state_.dt = dt;
    ++state_.steps;
    refresh();
    return dt;
  }

  DiagnosticsRecord record() const {
    const auto& rho = state_.rho;
    DiagnosticsRecord r;
    r.t = state_.t;
    r.step = state_.steps;
    r.dt = state_.dt;
    const double floor = 1e-12 * rho.max();
    const double cm = cfg_.m / (cfg_.m - 1.0);
    std::vector<double> h(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
      const double x = rho[i];
      h[i] = cfg_.interaction ? psi_[i] : 0.0;
      if (x > 0.0) h[i] += cm * detail::power_or_zero(x, cfg_.m - 1.0) + (cfg_.epsilon > 0.0 ? cfg_.epsilon * (std::log(x) + 1.0) : 0.0);
      if (x == 0.0) continue;
      const double rc = rho.radius(i);
      r.mass += x * vol_[i];
      r.m2 += x * vol_[i] * rc * rc;
      r.logm += x * vol_[i] * std::log1p(rc * rc);
      if (x > floor) r.support_area += vol_[i];
    }
    // Central differences of h on interior shells.
    for (std::size_t i = 1; i + 1 < rho.size(); ++i) {
      if (rho[i] <= floor) continue;
      const double g = (h[i + 1] - h[i - 1]) / (2.0 * rho.dr());
      r.dissipation += rho[i] * g * g * vol_[i];
    }
    r.entropy = state_.energy.entropy;
    r.interaction = state_.energy.interaction;
    r.energy = state_.energy.total;
    r.rho_max = rho.max();
    return r;
  }

 private:
  void refresh() {
    const auto& rho = state_.rho;
    if (cfg_.interaction)
      psi_ = radial_potential(rho, kernel_);
    else
      psi_.assign(rho.size(), 0.0);
    EnergyBreakdown e;
    for (std::size_t i = 0; i < rho.size(); ++i) {
      const double x = rho[i];
      if (x == 0.0) continue;
      e.entropy += detail::power_or_zero(x, cfg_.m) * vol_[i] / (cfg_.m - 1.0);
      if (cfg_.epsilon > 0.0) e.entropy += cfg_.epsilon * x * std::log(x) * vol_[i];
      e.interaction += 0.5 * x * psi_[i] * vol_[i];
    }
    e.total = e.entropy + e.interaction;
    const double mass = rho.mass();
    e.shift_correction = cfg_.interaction ? 0.5 * mass * mass * kernel_.shift : 0.0;
    state_.energy = e;
  }

  SolverConfig cfg_;
  Kernel kernel_;
  RadialEvolutionState state_;
  std::vector<double> psi_, flux_, pm_, vol_;
  std::size_t clamp_events_ = 0;
  double mass0_ = 0.0;
};

/// Single step of a fresh solver; convenient for tests, wasteful in loops.
inline EvolutionState step(const EvolutionState& state, const SolverConfig& cfg) {
  Solver2D s(cfg, state.rho);
  s.step(cfg.t_end > state.t ? cfg.t_end - state.t : std::numeric_limits<double>::infinity());
  EvolutionState out = s.state();
  out.t += state.t;
  out.steps += state.steps;
  return out;
}

// ---------------------------------------------------------------------------
// Initial data

/// Barenblatt solution of rho_t = Lap(rho^m) in 2D with mass M at time t.
struct Barenblatt {
  double m, mass;

  double alpha() const { return 1.0 / m; }
  double k() const { return (m - 1.0) / (4.0 * m * m); }
  // rho(t, x) = t^{-a} (C - k |x|^2 t^{-a})_+^{1/(m-1)}; C fixed by the mass.
  double constant() const {
    // int (C - k r^2)_+^{1/(m-1)} dx = pi C^{m/(m-1)} (m-1) / (m k)
    const double e = m / (m - 1.0);
    return std::pow(mass * m * k() / (std::numbers::pi * (m - 1.0)), 1.0 / e);
  }
  double operator()(double t, double r) const {
    const double a = alpha();
    const double g = constant() - k() * r * r * std::pow(t, -a);
    return g > 0.0 ? std::pow(t, -a) * std::pow(g, 1.0 / (m - 1.0)) : 0.0;
  }
  /// int rho |x|^2 = M (m - 1) C t^a / ((2m - 1) k).
  double second_moment(double t) const {
    return mass * (m - 1.0) * constant() * std::pow(t, alpha()) / ((2.0 * m - 1.0) * k());
  }
};

namespace detail {

inline double gaussian2(double x, double y, double cx, double cy, double s) {
  const double dx = x - cx, dy = y - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
}

inline SteadyProfile steady_for(double m, double mass) {
  for (double rmax = 8.0; rmax <= 1024.0; rmax *= 2.0) {
    try {
      return solve_radial_steady(m, mass, log2d(), {4096, rmax});
    } catch (const DomainError&) {
    }
  }
  throw DomainError("steady profile does not fit a radial domain of radius 1024");
}

}  // namespace detail

/// Initial density for a Cartesian configuration (InitialKind::file is
/// resolved by the caller, which passes the loaded density instead).
inline Density2D make_initial(const SolverConfig& cfg) {
  cfg.validate();
  const auto& in = cfg.initial;
  Density2D rho = Density2D::centered(cfg.grid.n, cfg.grid.side);
  const double cx = in.center[0], cy = in.center[1];
  switch (in.kind) {
    case InitialKind::gaussian:
      rho.fill_average([&](double x, double y) { return detail::gaussian2(x, y, cx, cy, in.width); }, 4);
      break;
    case InitialKind::disk:
      rho.fill_average([&](double x, double y) { return std::hypot(x - cx, y - cy) < in.radius ? 1.0 : 0.0; }, 8);
      break;
    case InitialKind::two_bumps: {
      const double h = 0.5 * in.separation, w = in.weight;
      rho.fill_average(
          [&](double x, double y) {
            return w * detail::gaussian2(x, y, cx - h, cy, in.width) +
                   (1.0 - w) * detail::gaussian2(x, y, cx + h, cy, in.width);
          },
          4);
      break;
    }
    case InitialKind::steady: {
      const auto p = detail::steady_for(cfg.m, cfg.mass);
      rho.fill_average([&](double x, double y) { return p.rho.value_at(std::hypot(x - cx, y - cy)); }, 4);
      break;
    }
    case InitialKind::file:
      throw ConfigError("solver: file initial data must be loaded by the caller");
  }
  if (in.noise > 0.0) {
    std::mt19937_64 gen(cfg.seed);
    std::uniform_real_distribution<double> u(-in.noise, in.noise);
    for (double& x : rho.mutable_values()) x *= 1.0 + u(gen);
  }
  const double mass = rho.mass();
  if (!(mass > 0.0)) throw ConfigError("solver: initial density has no mass on this grid");
  return rho.scale(cfg.mass / mass);
}

inline RadialDensity make_radial_initial(const SolverConfig& cfg) {
  cfg.validate();
  const auto& in = cfg.initial;
  const double dr = cfg.grid.rmax / static_cast<double>(cfg.grid.n);
  RadialDensity rho(2, dr, cfg.grid.n);
  auto& v = rho.mutable_values();
  const auto& gl = gauss_legendre(8);
  auto average = [&](auto&& f) {
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = 2.0 * std::numbers::pi * gl.integrate([&](double r) { return f(r) * r; }, rho.inner(i), rho.outer(i)) /
             rho.shell_measure(i);
  };
  switch (in.kind) {
    case InitialKind::gaussian:
      average([&](double r) { return std::exp(-r * r / (2.0 * in.width * in.width)); });
      break;
    case InitialKind::disk:
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double a = rho.inner(i), b = rho.outer(i);
        const double inside = std::clamp(in.radius, a, b);
        v[i] = (inside * inside - a * a) / (b * b - a * a);
      }
      break;
    case InitialKind::steady: {
      const auto p = detail::steady_for(cfg.m, cfg.mass);
      average([&](double r) { return p.rho.value_at(r); });
      break;
    }
    default:
      throw ConfigError("solver: radial runs accept gaussian, disk or steady initial data");
  }
  const double mass = rho.mass();
  if (!(mass > 0.0)) throw ConfigError("solver: initial density has no mass on this grid");
  for (double& x : v) x *= cfg.mass / mass;
  return rho;
}

// ---------------------------------------------------------------------------
// Runs

struct Snapshot {
  double t = 0.0;
  Density2D rho;
};

struct RadialSnapshot {
  double t = 0.0;
  RadialDensity rho;
};

template <class Density>
struct BasicRunResult {
  std::vector<DiagnosticsRecord> series;
  std::vector<std::pair<double, Density>> snapshots;
  double min_energy = std::numeric_limits<double>::infinity();
  double log_moment_rate = 0.0;   // sup over records of (N(t) - N(0)) / t
  double max_mass_drift = 0.0;    // relative
  double max_energy_rise = 0.0;   // largest (E_{n+1} - E_n) / |E_n| over steps
  std::size_t steps = 0;
  std::size_t clamp_events = 0;
  bool stopped_early = false;
};

using RunResult = BasicRunResult<Density2D>;
using RadialRunResult = BasicRunResult<RadialDensity>;

/// Called after every stored record; returning false stops the run.
using RunObserver = std::function<bool(const DiagnosticsRecord&)>;

namespace detail {

template <class Solver, class Density>
BasicRunResult<Density> drive(Solver& solver, const SolverConfig& cfg, const RunObserver& observer) {
  BasicRunResult<Density> out;
  auto fail = [&](const std::string& what, const DiagnosticsRecord& r) {
    throw AssertionFailure(what, std::string(kDiagnosticsHeader) + "\n" + to_csv_row(r));
  };
  auto store = [&](const DiagnosticsRecord& r) {
    out.series.push_back(r);
    out.min_energy = std::min(out.min_energy, r.energy);
    if (r.t > 0.0) out.log_moment_rate = std::max(out.log_moment_rate, (r.logm - out.series.front().logm) / r.t);
    return observer ? observer(r) : true;
  };
  auto snapshot = [&]() { out.snapshots.emplace_back(solver.state().t, solver.state().rho); };

  const double mass0 = solver.mass();
  snapshot();
  bool go = store(solver.record());

  // Blow-up trend: running minimum of max rho over the trailing window, kept
  // as a deque of (time, value) with increasing values.
  std::deque<std::pair<double, double>> window{{solver.state().t, solver.max_density()}};
  double next_snap = cfg.snapshot_every > 0.0 ? solver.state().t + cfg.snapshot_every : cfg.t_end;
  const double t_stop = cfg.t_end;
  while (go && solver.state().t < t_stop) {
    const double e_prev = solver.state().energy.total;
    const double cap = std::min(t_stop, next_snap) - solver.state().t;
    solver.step(cap);
    const auto& st = solver.state();
    // Landing within rounding of a target time counts as reaching it.
    const double t_now = st.t;
    const bool at_end = t_now >= t_stop - 1e-12 * std::max(1.0, t_stop);
    const bool at_snap = cfg.snapshot_every > 0.0 && t_now >= next_snap - 1e-12 * std::max(1.0, next_snap);

    const double mass = solver.mass();
    const double drift = mass0 > 0.0 ? std::abs(mass - mass0) / mass0 : 0.0;
    out.max_mass_drift = std::max(out.max_mass_drift, drift);
    const double e_now = st.energy.total;
    const double rise = (e_now - e_prev) / std::max(std::abs(e_prev), 1e-300);
    out.max_energy_rise = std::max(out.max_energy_rise, rise);
    if (drift > cfg.mass_tolerance) fail("mass conservation violated", solver.record());
    if (e_now > e_prev + cfg.energy_tolerance * std::abs(e_prev)) fail("free energy increased", solver.record());

    const double rmax = solver.max_density();
    while (!window.empty() && window.back().second >= rmax) window.pop_back();
    window.emplace_back(t_now, rmax);
    while (window.size() > 1 && window.front().first < t_now - cfg.blowup_window) window.pop_front();
    const double lowest = window.front().second;
    if (lowest > 0.0 && rmax > cfg.blowup_factor * lowest) fail("max density grows faster than the blow-up bound", solver.record());

    if (at_snap) {
      snapshot();
      next_snap += cfg.snapshot_every;
    }
    if (at_end || at_snap || st.steps % cfg.diagnostics_every == 0) go = store(solver.record());
    if (at_end) break;
  }
  if (!go) out.stopped_early = true;
  if (out.snapshots.back().first != solver.state().t) snapshot();
  if (out.series.back().t != solver.state().t) store(solver.record());
  out.steps = solver.state().steps;
  out.clamp_events = solver.clamp_events();
  return out;
}

}  // namespace detail

/**
 * Integrates a configuration to t_end, storing diagnostics every
 * `diagnostics_every` steps and at snapshot times. Aborts with
 * AssertionFailure (carrying the offending record) when mass drifts, the free
 * energy rises, or max rho grows by more than the blow-up factor within one
 * window.
 */
inline RunResult run(const SolverConfig& cfg, Density2D initial, const RunObserver& observer = {}) {
  Solver2D solver(cfg, std::move(initial));
  return detail::drive<Solver2D, Density2D>(solver, cfg, observer);
}

inline RunResult run(const SolverConfig& cfg, const RunObserver& observer = {}) {
  return run(cfg, make_initial(cfg), observer);
}

inline RadialRunResult run_radial(const SolverConfig& cfg, RadialDensity initial, const RunObserver& observer = {}) {
  RadialSolver solver(cfg, std::move(initial));
  return detail::drive<RadialSolver, RadialDensity>(solver, cfg, observer);
}

inline RadialRunResult run_radial(const SolverConfig& cfg, const RunObserver& observer = {}) {
  return run_radial(cfg, make_radial_initial(cfg), observer);
}

// ---------------------------------------------------------------------------
// Second-moment law

struct MomentResidual {
  std::vector<double> t;
  std::vector<double> residual;  // M2(t) - M2(0) - 4 int_0^t int rho^m + t M^2 / (2 pi)
  double scale = 0.0;            // 4 int rho_0^m + M^2 / (2 pi), the size of the competing rates
  double worst_rate = 0.0;       // max over t > 0 of |residual(t)| / t
};

/// Residual of dM2/dt = 4 int rho^m - M^2 / (2 pi) along a run of the plain
/// 2D logarithmic model; the time integral uses the trapezoid rule on the
/// records, so dense diagnostics are needed.
inline MomentResidual second_moment_residual(const std::vector<DiagnosticsRecord>& series, double m, double mass,
                                             bool plain_log_kernel = true) {
  if (!plain_log_kernel) throw DomainError("second moment law holds only for the unregularized 2D log kernel");
  if (series.empty()) throw ConfigError("second moment residual: empty series");
  MomentResidual out;
  // int rho^m = (m - 1) S
  auto power_integral = [m](const DiagnosticsRecord& r) { return (m - 1.0) * r.entropy; };
  const double drift = mass * mass / (2.0 * std::numbers::pi);
  out.scale = 4.0 * power_integral(series.front()) + drift;
  double integral = 0.0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (k > 0) integral += 0.5 * (series[k].t - series[k - 1].t) * (power_integral(series[k]) + power_integral(series[k - 1]));
    const double t = series[k].t - series.front().t;
    const double res = series[k].m2 - series.front().m2 - 4.0 * integral + t * drift;
    out.t.push_back(t);
    out.residual.push_back(res);
    if (t > 0.0) out.worst_rate = std::max(out.worst_rate, std::abs(res) / t);
  }
  return out;
}

inline MomentResidual second_moment_residual(const std::vector<DiagnosticsRecord>& series, const SolverConfig& cfg) {
  return second_moment_residual(series, cfg.m, cfg.mass, cfg.plain_log());
}

// ---------------------------------------------------------------------------
// Mass concentration comparison

enum class ComparisonMode {
  radial_pair,       // two radial runs with f(0) < g(0)
  rearranged_start,  // g started from the rearrangement of f(0)
};

struct ComparisonPoint {
  double t = 0.0;
  bool holds = true;
  double worst_excess = 0.0;  // max over r of M_f(r) - M_g(r + one cell)
  double worst_radius = 0.0;
};

struct ComparisonReport {
  std::vector<ComparisonPoint> points;
  bool holds = true;
  double worst_excess = -std::numeric_limits<double>::infinity();
};

namespace detail {

// Checks M_f(r) <= M_g(r + shift) + tol at every shell boundary.
inline ComparisonPoint compare_shifted(double t, const RadialDensity& f, const RadialDensity& g, std::size_t shift,
                                       double tol) {
  const auto cf = f.cumulative_mass(), cg = g.cumulative_mass();
  ComparisonPoint p;
  p.t = t;
  p.worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cf.size(); ++i) {
    const double e = cf[i] - cg[std::min(i + shift, cg.size() - 1)];
    if (e > p.worst_excess) {
      p.worst_excess = e;
      p.worst_radius = f.outer(i);
    }
  }
  p.holds = p.worst_excess <= tol;
  return p;
}

inline void add_point(ComparisonReport& rep, const ComparisonPoint& p) {
  rep.points.push_back(p);
  rep.holds = rep.holds && p.holds;
  rep.worst_excess = std::max(rep.worst_excess, p.worst_excess);
}

inline bool same_time(double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); }

}  // namespace detail

/**
 * f(t)# < g(t) at every shared snapshot time, with one grid cell of slack:
 * M_f(r) <= M_g(r + cell) + 1e-12 M. Both runs must carry equal mass.
 *
 * radial_pair: f and g are radial runs on one shell grid with f(0) < g(0)
 * exactly. The cell is one shell.
 */
inline ComparisonReport concentration_comparison_check(const std::vector<std::pair<double, RadialDensity>>& f,
                                                       const std::vector<std::pair<double, RadialDensity>>& g) {
  if (f.empty() || g.empty()) throw DomainError("comparison: empty run");
  const auto& f0 = f.front().second;
  const auto& g0 = g.front().second;
  if (f0.dr() != g0.dr() || f0.size() != g0.size()) throw DomainError("comparison: runs must share a shell grid");
  const double mass = std::max(f0.mass(), g0.mass());
  const double tol = 1e-12 * mass;
  if (std::abs(f0.mass() - g0.mass()) > 1e-10 * mass) throw DomainError("comparison: runs must carry equal mass");
  if (!less_concentrated(schwarz_rearrangement(f0), schwarz_rearrangement(g0)).holds)
    throw DomainError("comparison: initial data are not ordered by mass concentration");
  ComparisonReport rep;
  std::size_t k = 0;
  for (const auto& [t, a] : f) {
    while (k < g.size() && g[k].first < t && !detail::same_time(g[k].first, t)) ++k;
    if (k == g.size()) break;
    if (!detail::same_time(g[k].first, t)) continue;
    detail::add_point(rep, detail::compare_shifted(t, schwarz_rearrangement(a), schwarz_rearrangement(g[k].second), 1, tol));
  }
  return rep;
}

/**
 * rearranged_start: f is a Cartesian run and g a Cartesian run on the same
 * grid whose start has the same value distribution as f(0). Both are
 * rearranged onto shells of width dx/2; the slack is one cell (two shells).
 */
inline ComparisonReport concentration_comparison_check(const std::vector<std::pair<double, Density2D>>& f,
                                                       const std::vector<std::pair<double, Density2D>>& g) {
  if (f.empty() || g.empty()) throw DomainError("comparison: empty run");
  const auto& f0 = f.front().second;
  const auto& g0 = g.front().second;
  if (!f0.same_grid(g0)) throw DomainError("comparison: runs must share a grid");
  auto a = decreasing_rearrangement(f0.values()), b = decreasing_rearrangement(g0.values());
  const double top = std::max(f0.max(), g0.max());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-12 * top) throw DomainError("comparison: g(0) is not a rearrangement of f(0)");
  const double tol = 1e-12 * std::max(f0.mass(), g0.mass());
  ComparisonReport rep;
  std::size_t k = 0;
  for (const auto& [t, x] : f) {
    while (k < g.size() && g[k].first < t && !detail::same_time(g[k].first, t)) ++k;
    if (k == g.size()) break;
    if (!detail::same_time(g[k].first, t)) continue;
    const auto fs = schwarz_rearrangement(x);
    const auto gs = schwarz_rearrangement(g[k].second);
    detail::add_point(rep, detail::compare_shifted(t, fs, gs, 2, tol));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Long-time convergence

struct ConvergenceReport {
  std::vector<std::pair<double, double>> distance;  // (t, L1 distance to the translated steady state)
  Density2D final_density;
  Density2D target;
  SteadyProfile profile;
  std::array<double, 2> center{0.0, 0.0};
  bool converged = false;
  bool trend_decreasing = false;  // last distance below the first
  double m2_bound = 0.0;          // M2(0) + M2 of the centered steady state
  double max_m2 = 0.0;
  bool m2_bound_holds = true;
  double final_time = 0.0;
  RunResult run;
};

/// L1 distance between two densities on the same grid.
inline double l1_distance(const Density2D& a, const Density2D& b) {
  if (!a.same_grid(b)) throw DomainError("l1_distance: grids differ");
  double s = 0.0;
  const auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s * a.cell_measure();
}

/// Steady profile of mass M sampled as cell averages around `center`, rescaled to mass M on the grid.
inline Density2D steady_on_grid(const SteadyProfile& p, const Density2D& geometry, std::array<double, 2> center) {
  Density2D t = geometry.zeros_like();
  t.fill_average([&](double x, double y) { return p.rho.value_at(std::hypot(x - center[0], y - center[1])); }, 4);
  const double mass = t.mass();
  if (mass > 0.0) t.scale(p.mass / mass);
  return t;
}

/**
 * Runs the plain log model until the L1 distance to the steady state of the
 * same mass, centered at the initial center of mass, drops below `target`
 * (checked every `check_every` time units) or t_end is reached. Not
 * converging is reported, not thrown.
 */
inline ConvergenceReport converge_to_steady(const SolverConfig& cfg, Density2D initial, double target = 1e-2,
                                            double check_every = 1.0) {
  if (!cfg.plain_log()) throw DomainError("converge_to_steady: requires the unregularized 2D log kernel");
  if (!(target > 0.0) || !(check_every > 0.0)) throw ConfigError("converge_to_steady: target and cadence must be > 0");
  ConvergenceReport rep;
  const auto mom = moments(initial);
  rep.center = mom.center;
  rep.profile = detail::steady_for(cfg.m, mom.mass);
  rep.target = steady_on_grid(rep.profile, initial, rep.center);
  rep.m2_bound = mom.second + moments(rep.profile.rho).second;

  SolverConfig c = cfg;
  c.snapshot_every = check_every;
  Solver2D solver(c, std::move(initial));
  rep.distance.emplace_back(0.0, l1_distance(solver.state().rho, rep.target));
  rep.max_m2 = mom.second;
  double next = check_every;
  const double mass0 = solver.initial_mass();
  double e_prev = solver.state().energy.total;
  rep.run.series.push_back(solver.record());
  while (solver.state().t < cfg.t_end - 1e-12 * std::max(1.0, cfg.t_end)) {
    solver.step(std::min(next, cfg.t_end) - solver.state().t);
    const auto& st = solver.state();
    if (std::abs(solver.mass() - mass0) > cfg.mass_tolerance * mass0)
      throw AssertionFailure("mass conservation violated", to_csv_row(solver.record()));
    if (st.energy.total > e_prev + cfg.energy_tolerance * std::abs(e_prev))
      throw AssertionFailure("free energy increased", to_csv_row(solver.record()));
    e_prev = st.energy.total;
    if (st.steps % cfg.diagnostics_every == 0) {
      const auto r = solver.record();
      rep.max_m2 = std::max(rep.max_m2, r.m2);
      rep.run.series.push_back(r);
    }
    if (st.t >= next - 1e-12 * std::max(1.0, next)) {
      const double d = l1_distance(st.rho, rep.target);
      rep.distance.emplace_back(st.t, d);
      const auto r = solver.record();
      rep.max_m2 = std::max(rep.max_m2, r.m2);
      next += check_every;
      if (d < target) break;
    }
  }
  rep.final_time = solver.state().t;
  rep.final_density = solver.state().rho;
  rep.converged = rep.distance.back().second < target;
  rep.trend_decreasing = rep.distance.back().second < rep.distance.front().second;
  rep.m2_bound_holds = rep.max_m2 <= rep.m2_bound * (1.0 + 1e-12);
  rep.run.steps = solver.state().steps;
  rep.run.clamp_events = solver.clamp_events();
  return rep;
}

inline ConvergenceReport converge_to_steady(const SolverConfig& cfg, double target = 1e-2, double check_every = 1.0) {
  return converge_to_steady(cfg, make_initial(cfg), target, check_every);
}

}  // namespace aggdiff
