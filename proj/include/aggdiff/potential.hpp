#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "aggdiff/density.hpp"
#include "aggdiff/error.hpp"
#include "aggdiff/kernel.hpp"
#include "aggdiff/quadrature.hpp"

namespace aggdiff {

namespace detail {

// FFTW's planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/**
 * Linear (non-circular) 2D convolution with a fixed kernel via zero-padded FFTs.
 *
 * out(i, j) = sum_{i', j'} K(i - i', j - j') in(i', j') for an nx-by-ny input,
 * where K is given on integer offsets. The padded transform is
 * (pad * nx) x (pad * ny) with pad >= 2, so no wraparound reaches the output.
 *
 * Owns scratch buffers: one instance must not be used from two threads at once.
 */
class FftConvolver {
 public:
  FftConvolver(std::size_t nx, std::size_t ny, const std::function<double(long, long)>& kernel_at,
               unsigned flags = FFTW_ESTIMATE, std::size_t pad = 2)
      : nx_(nx), ny_(ny), px_(pad * nx), py_(pad * ny), hx_(px_ / 2 + 1), nc_(py_ * hx_) {
    if (pad < 2) throw ConfigError("fft convolution: padding factor must be >= 2");
    real_.reset(fftw_alloc_real(px_ * py_));
    spec_.reset(reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(nc_)));
    kernel_hat_.resize(nc_);
    auto* cspec = reinterpret_cast<fftw_complex*>(spec_.get());
    fftw_plan full = nullptr;
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      full = fftw_plan_dft_r2c_2d(static_cast<int>(py_), static_cast<int>(px_), real_.get(), cspec, FFTW_ESTIMATE);
      // The input occupies the first ny rows only, and only those rows of the
      // output are wanted: row transforms run on ny rows, column transforms
      // on every column.
      const int n_row = static_cast<int>(px_), n_col = static_cast<int>(py_);
      const int rows = static_cast<int>(ny_), cols = static_cast<int>(hx_);
      rows_forward_ = fftw_plan_many_dft_r2c(1, &n_row, rows, real_.get(), nullptr, 1, n_row, cspec, nullptr, 1,
                                             cols, flags);
      cols_forward_ = fftw_plan_many_dft(1, &n_col, cols, cspec, nullptr, cols, 1, cspec, nullptr, cols, 1,
                                         FFTW_FORWARD, flags);
      cols_backward_ = fftw_plan_many_dft(1, &n_col, cols, cspec, nullptr, cols, 1, cspec, nullptr, cols, 1,
                                          FFTW_BACKWARD, flags);
      rows_backward_ = fftw_plan_many_dft_c2r(1, &n_row, rows, cspec, nullptr, 1, cols, real_.get(), nullptr, 1,
                                              n_row, flags);
    }
    std::fill_n(real_.get(), px_ * py_, 0.0);
    const long lx = static_cast<long>(nx_), ly = static_cast<long>(ny_);
    for (long l = -(ly - 1); l <= ly - 1; ++l) {
      const std::size_t row = static_cast<std::size_t>((l + static_cast<long>(py_)) % static_cast<long>(py_));
      for (long k = -(lx - 1); k <= lx - 1; ++k) {
        const std::size_t col = static_cast<std::size_t>((k + static_cast<long>(px_)) % static_cast<long>(px_));
        real_[row * px_ + col] = kernel_at(k, l);
      }
    }
    fftw_execute(full);
    const double norm = 1.0 / static_cast<double>(px_ * py_);
    for (std::size_t i = 0; i < nc_; ++i) kernel_hat_[i] = spec_[i] * norm;
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(full);
  }

  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;

  ~FftConvolver() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    for (fftw_plan p : {rows_forward_, cols_forward_, cols_backward_, rows_backward_})
      if (p) fftw_destroy_plan(p);
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }

  void apply(std::span<const double> in, std::span<double> out) {
    if (in.size() != nx_ * ny_ || out.size() != nx_ * ny_) throw ConfigError("fft convolution: size mismatch");
    for (std::size_t j = 0; j < ny_; ++j) {
      double* row = real_.get() + j * px_;
      std::memcpy(row, in.data() + j * nx_, nx_ * sizeof(double));
      std::fill(row + nx_, row + px_, 0.0);
    }
    fftw_execute(rows_forward_);
    std::fill(spec_.get() + ny_ * hx_, spec_.get() + nc_, std::complex<double>(0.0, 0.0));
    fftw_execute(cols_forward_);
    for (std::size_t i = 0; i < nc_; ++i) spec_[i] *= kernel_hat_[i];
    fftw_execute(cols_backward_);
    fftw_execute(rows_backward_);
    for (std::size_t j = 0; j < ny_; ++j) std::memcpy(out.data() + j * nx_, real_.get() + j * px_, nx_ * sizeof(double));
  }

 private:
  std::size_t nx_, ny_, px_, py_, hx_, nc_;
  std::unique_ptr<double[], detail::FftwFree> real_;
  std::unique_ptr<std::complex<double>[], detail::FftwFree> spec_;
  std::vector<std::complex<double>> kernel_hat_;
  fftw_plan rows_forward_ = nullptr, cols_forward_ = nullptr, cols_backward_ = nullptr, rows_backward_ = nullptr;
};

/// Discrete kernel weight for a cell offset (k, l): midpoint value away from
/// the origin, exact cell average of omega on the singular host cell.
inline double grid_kernel_weight(const Kernel& kernel, double dx, long k, long l) {
  if (k == 0 && l == 0) return kernel.origin_cell_average(dx) * dx * dx;
  return kernel.omega(dx * std::hypot(static_cast<double>(k), static_cast<double>(l))) * dx * dx;
}

/**
 * psi = W * rho on a fixed 2D grid geometry.
 *
 * psi_i = sum_j w(i - j) rho_j with w from grid_kernel_weight. Reuses the
 * kernel transform across calls; not safe for concurrent use of one instance.
 */
class GridPotential {
 public:
  GridPotential(const Density2D& geometry, const Kernel& kernel, unsigned flags = FFTW_ESTIMATE)
      : nx_(geometry.nx()), ny_(geometry.ny()), dx_(geometry.dx()) {
    if (kernel.dimension != 2) throw ConfigError("grid potential: kernel dimension must be 2 for a 2D grid");
    conv_ = std::make_unique<FftConvolver>(
        nx_, ny_, [&](long k, long l) { return grid_kernel_weight(kernel, dx_, k, l); }, flags);
  }

  bool matches(const Density2D& rho) const { return rho.nx() == nx_ && rho.ny() == ny_ && rho.dx() == dx_; }

  void apply(const Density2D& rho, std::span<double> psi) {
    if (!matches(rho)) throw ConfigError("grid potential: density grid does not match operator");
    conv_->apply(rho.values(), psi);
  }

  std::vector<double> operator()(const Density2D& rho) {
    std::vector<double> psi(rho.size());
    apply(rho, psi);
    return psi;
  }

 private:
  std::size_t nx_, ny_;
  double dx_;
  std::unique_ptr<FftConvolver> conv_;
};

/// One-shot W * rho on the density's own grid.
inline std::vector<double> potential(const Density2D& rho, const Kernel& kernel) {
  GridPotential op(rho, kernel);
  return op(rho);
}

namespace detail {

// int_a^b omega(t) |S^{d-1}| t^{d-1} dt
inline double shell_integral(const Kernel& kernel, int d, double a, double b) {
  if (b <= a) return 0.0;
  if (kernel.radial_primitive) return kernel.radial_primitive(b) - kernel.radial_primitive(a);
  const double area = unit_sphere_area(d);
  return area * gauss_legendre(16).integrate([&](double t) { return kernel.omega(t) * std::pow(t, d - 1); }, a, b);
}

// Mean of omega(|x - y|) over the sphere |y| = s, with |x| = r.
inline double sphere_average(const Kernel& kernel, int d, double r, double s) {
  if (kernel.mean_value_shells) return kernel.omega(std::max(r, s));
  if (d == 1) return 0.5 * (kernel.omega(std::abs(r - s)) + kernel.omega(r + s));
  if (d == 3) {
    if (r == 0.0 || s == 0.0) return kernel.omega(r + s);
    return gauss_legendre(32).integrate([&](double t) { return kernel.omega(t) * t; }, std::abs(r - s), r + s) /
           (2.0 * r * s);
  }
  if (d == 2) {
    // Split the angle integral at a small angle to resolve the near-coincident point.
    auto f = [&](double th) { return kernel.omega(std::sqrt(std::max(r * r + s * s - 2 * r * s * std::cos(th), 1e-300))); };
    const auto& gl = gauss_legendre(32);
    const double split = 0.05;
    return (gl.integrate(f, 0.0, split) + gl.integrate(f, split, std::numbers::pi)) / std::numbers::pi;
  }
  throw ConfigError("radial potential: unsupported dimension for a generic kernel");
}

}  // namespace detail

/// psi = W * rho at radius r for a radial density.
inline double radial_potential_at(const RadialDensity& rho, const Kernel& kernel, double r) {
  if (kernel.dimension != rho.dimension()) throw ConfigError("radial potential: kernel/density dimension mismatch");
  const int d = rho.dimension();
  const std::size_t n = rho.size();
  if (kernel.mean_value_shells) {
    double inner_mass = 0.0, outer = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = rho[j];
      if (v == 0.0) continue;
      const double a = rho.inner(j), b = rho.outer(j);
      if (b <= r) {
        inner_mass += v * rho.shell_measure(j);
      } else if (a >= r) {
        outer += v * detail::shell_integral(kernel, d, a, b);
      } else {
        inner_mass += v * (rho.ball_measure(r) - rho.ball_measure(a));
        outer += v * detail::shell_integral(kernel, d, r, b);
      }
    }
    return (inner_mass > 0.0 ? kernel.omega(r) * inner_mass : 0.0) + outer;
  }
  const double area = unit_sphere_area(d);
  const auto& gl = gauss_legendre(8);
  double psi = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (rho[j] == 0.0) continue;
    psi += rho[j] * area *
           gl.integrate([&](double s) { return detail::sphere_average(kernel, d, r, s) * std::pow(s, d - 1); },
                        rho.inner(j), rho.outer(j));
  }
  return psi;
}

/// psi = W * rho at every shell center.
inline std::vector<double> radial_potential(const RadialDensity& rho, const Kernel& kernel) {
  if (kernel.dimension != rho.dimension()) throw ConfigError("radial potential: kernel/density dimension mismatch");
  const std::size_t n = rho.size();
  std::vector<double> psi(n, 0.0);
  if (!kernel.mean_value_shells) {
    for (std::size_t i = 0; i < n; ++i) psi[i] = radial_potential_at(rho, kernel, rho.radius(i));
    return psi;
  }
  // O(n): omega(r) * (mass inside r) + sum over outer shells of rho_j int omega dmu.
  const int d = rho.dimension();
  std::vector<double> outer_tail(n + 1, 0.0);
  for (std::size_t j = n; j-- > 0;)
    outer_tail[j] = outer_tail[j + 1] + (rho[j] != 0.0 ? rho[j] * detail::shell_integral(kernel, d, rho.inner(j), rho.outer(j)) : 0.0);
  double below = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rho.radius(i);
    const double inner_mass = below + rho[i] * (rho.ball_measure(r) - rho.ball_measure(rho.inner(i)));
    psi[i] = (inner_mass > 0.0 ? kernel.omega(r) * inner_mass : 0.0) +
             rho[i] * detail::shell_integral(kernel, d, r, rho.outer(i)) + outer_tail[i + 1];
    below += rho[i] * rho.shell_measure(i);
  }
  return psi;
}

/// d psi / dr at the outer face of every shell, omega'(b_i) M(< b_i).
/// Exact for kernels obeying Newton's theorem; others are rejected.
inline std::vector<double> radial_potential_gradient(const RadialDensity& rho, const Kernel& kernel) {
  if (!kernel.mean_value_shells)
    throw ConfigError("radial potential gradient requires a kernel with the mean-value property");
  std::vector<double> g(rho.size());
  double m = 0.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    m += rho[i] * rho.shell_measure(i);
    g[i] = kernel.omega_prime(rho.outer(i)) * m;
  }
  return g;
}

/// psi(x) / omega(|x|) at |x| = radius, outside the support of rho.
inline double potential_far_field_ratio(const RadialDensity& rho, const Kernel& kernel, double radius) {
  if (!(radius > rho.support_radius()))
    throw DomainError("potential_far_field_ratio: radius must lie outside the support");
  const double w = kernel.omega(radius);
  if (w == 0.0 || !std::isfinite(w)) throw DomainError("potential_far_field_ratio: omega(radius) must be finite and nonzero");
  return radial_potential_at(rho, kernel, radius) / w;
}

}  // namespace aggdiff
