#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "aggdiff/error.hpp"
#include "aggdiff/quadrature.hpp"

namespace aggdiff {

/**
 * Radially symmetric density sampled at shell centers r_i = (i + 1/2) dr.
 *
 * Values are shell averages; shell i is the annulus a_i <= |x| < b_i with
 * a_i = i dr and b_i = (i + 1) dr.
 */
class RadialDensity {
 public:
  RadialDensity() = default;
  RadialDensity(int dimension, double dr, std::vector<double> values)
      : d_(dimension), dr_(dr), v_(std::move(values)) {
    if (d_ < 1) throw ConfigError("radial density: dimension must be >= 1");
    if (!(dr_ > 0.0)) throw ConfigError("radial density: dr must be > 0");
    for (double x : v_)
      if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("radial density: values must be finite and >= 0");
  }
  RadialDensity(int dimension, double dr, std::size_t n) : RadialDensity(dimension, dr, std::vector<double>(n, 0.0)) {}

  int dimension() const { return d_; }
  double dr() const { return dr_; }
  std::size_t size() const { return v_.size(); }
  double rmax() const { return dr_ * static_cast<double>(v_.size()); }
  double radius(std::size_t i) const { return (static_cast<double>(i) + 0.5) * dr_; }
  double inner(std::size_t i) const { return static_cast<double>(i) * dr_; }
  double outer(std::size_t i) const { return static_cast<double>(i + 1) * dr_; }

  /// Measure of the ball of radius r.
  double ball_measure(double r) const { return unit_ball_volume(d_) * std::pow(r, d_); }
  double shell_measure(std::size_t i) const { return ball_measure(outer(i)) - ball_measure(inner(i)); }

  std::span<const double> values() const { return v_; }
  std::vector<double>& mutable_values() { return v_; }
  double operator[](std::size_t i) const { return v_[i]; }
  double& operator[](std::size_t i) { return v_[i]; }

  double mass() const {
    double m = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) m += v_[i] * shell_measure(i);
    return m;
  }
  double max() const { return v_.empty() ? 0.0 : *std::max_element(v_.begin(), v_.end()); }

  /// Outer radius of the last shell with a positive value (0 if empty).
  double support_radius(double threshold = 0.0) const {
    for (std::size_t i = v_.size(); i-- > 0;)
      if (v_[i] > threshold) return outer(i);
    return 0.0;
  }

  /// Mass inside the ball of radius outer(i), for every i.
  std::vector<double> cumulative_mass() const {
    std::vector<double> c(v_.size());
    double m = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) c[i] = (m += v_[i] * shell_measure(i));
    return c;
  }

  /// Piecewise-linear interpolation through shell centers; zero beyond rmax.
  double value_at(double r) const {
    if (v_.empty() || r >= rmax()) return 0.0;
    const double s = r / dr_ - 0.5;
    if (s <= 0.0) return v_.front();
    const auto i = static_cast<std::size_t>(s);
    if (i + 1 >= v_.size()) {
      // Last half shell: interpolate toward zero at rmax.
      const double w = (r - radius(v_.size() - 1)) / (0.5 * dr_);
      return v_.back() * (1.0 - w);
    }
    const double w = s - static_cast<double>(i);
    return (1.0 - w) * v_[i] + w * v_[i + 1];
  }

  bool is_non_increasing(double tol = 0.0) const {
    for (std::size_t i = 1; i < v_.size(); ++i)
      if (v_[i] > v_[i - 1] + tol) return false;
    return true;
  }

 private:
  int d_ = 2;
  double dr_ = 1.0;
  std::vector<double> v_;
};

/**
 * Cell-average density on a uniform nx-by-ny Cartesian grid.
 *
 * Cell (i, j) covers [x0 + i dx, x0 + (i+1) dx) x [y0 + j dx, y0 + (j+1) dx);
 * storage is row-major with rows at fixed y (index j * nx + i).
 */
class Density2D {
 public:
  Density2D() = default;
  Density2D(std::size_t nx, std::size_t ny, double dx, double x0, double y0)
      : nx_(nx), ny_(ny), dx_(dx), x0_(x0), y0_(y0), v_(nx * ny, 0.0) {
    if (nx == 0 || ny == 0) throw ConfigError("density2d: empty grid");
    if (!(dx > 0.0)) throw ConfigError("density2d: dx must be > 0");
  }

  /// n-by-n grid on the square [-L/2, L/2]^2.
  static Density2D centered(std::size_t n, double side) {
    return Density2D(n, n, side / static_cast<double>(n), -0.5 * side, -0.5 * side);
  }

  /// Same geometry, all zero.
  Density2D zeros_like() const { return Density2D(nx_, ny_, dx_, x0_, y0_); }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return v_.size(); }
  double dx() const { return dx_; }
  double x0() const { return x0_; }
  double y0() const { return y0_; }
  double cell_measure() const { return dx_ * dx_; }
  double x(std::size_t i) const { return x0_ + (static_cast<double>(i) + 0.5) * dx_; }
  double y(std::size_t j) const { return y0_ + (static_cast<double>(j) + 0.5) * dx_; }
  double width() const { return dx_ * static_cast<double>(nx_); }
  double height() const { return dx_ * static_cast<double>(ny_); }

  double operator()(std::size_t i, std::size_t j) const { return v_[j * nx_ + i]; }
  double& operator()(std::size_t i, std::size_t j) { return v_[j * nx_ + i]; }
  std::span<const double> values() const { return v_; }
  std::vector<double>& mutable_values() { return v_; }

  bool same_grid(const Density2D& o) const {
    return nx_ == o.nx_ && ny_ == o.ny_ && dx_ == o.dx_ && x0_ == o.x0_ && y0_ == o.y0_;
  }

  double mass() const { return std::accumulate(v_.begin(), v_.end(), 0.0) * cell_measure(); }
  double max() const { return v_.empty() ? 0.0 : *std::max_element(v_.begin(), v_.end()); }
  double min() const { return v_.empty() ? 0.0 : *std::min_element(v_.begin(), v_.end()); }

  /// Throws DomainError when a value is negative or non-finite.
  void validate() const {
    for (double x : v_)
      if (!(x >= 0.0) || !std::isfinite(x)) throw DomainError("density2d: values must be finite and >= 0");
  }

  /// Fills cells with f evaluated at cell centers.
  template <class F>
  Density2D& fill(F&& f) {
    for (std::size_t j = 0; j < ny_; ++j)
      for (std::size_t i = 0; i < nx_; ++i) (*this)(i, j) = f(x(i), y(j));
    return *this;
  }

  /// Fills cells with sub-sampled cell averages of f (s-by-s midpoint rule).
  template <class F>
  Density2D& fill_average(F&& f, int s = 8) {
    const double h = dx_ / s;
    for (std::size_t j = 0; j < ny_; ++j)
      for (std::size_t i = 0; i < nx_; ++i) {
        double acc = 0.0;
        for (int b = 0; b < s; ++b)
          for (int a = 0; a < s; ++a) acc += f(x0_ + i * dx_ + (a + 0.5) * h, y0_ + j * dx_ + (b + 0.5) * h);
        (*this)(i, j) = acc / (s * s);
      }
    return *this;
  }

  Density2D& scale(double c) {
    for (double& x : v_) x *= c;
    return *this;
  }

 private:
  std::size_t nx_ = 0, ny_ = 0;
  double dx_ = 1.0, x0_ = 0.0, y0_ = 0.0;
  std::vector<double> v_;
};

/// Shell averages of a (piecewise-constant) radial density on a new shell grid.
inline RadialDensity resample(const RadialDensity& src, double dr, std::size_t n) {
  RadialDensity out(src.dimension(), dr, n);
  auto& v = out.mutable_values();
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = out.inner(i), b = out.outer(i);
    while (k < src.size() && src.outer(k) <= a) ++k;
    double mass = 0.0;
    for (std::size_t s = k; s < src.size() && src.inner(s) < b; ++s) {
      const double lo = std::max(a, src.inner(s)), hi = std::min(b, src.outer(s));
      if (hi > lo) mass += src[s] * (out.ball_measure(hi) - out.ball_measure(lo));
    }
    v[i] = mass / out.shell_measure(i);
  }
  return out;
}

/// int |a - b| for two radial densities on the same shell grid.
inline double l1_distance(const RadialDensity& a, const RadialDensity& b) {
  if (a.dimension() != b.dimension() || a.dr() != b.dr() || a.size() != b.size())
    throw DomainError("l1_distance: densities must share a shell grid");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]) * a.shell_measure(i);
  return s;
}

/// Mass, center of mass, second moment int rho |x|^2 and log-moment int rho ln(1 + |x|^2).
struct MomentSet {
  double mass = 0.0;
  std::array<double, 2> center{0.0, 0.0};
  double second = 0.0;
  double log_moment = 0.0;
};

inline MomentSet moments(const Density2D& rho) {
  MomentSet m;
  const double cell = rho.cell_measure();
  double sx = 0.0, sy = 0.0;
  for (std::size_t j = 0; j < rho.ny(); ++j) {
    const double y = rho.y(j);
    for (std::size_t i = 0; i < rho.nx(); ++i) {
      const double v = rho(i, j) * cell;
      if (v == 0.0) continue;
      const double x = rho.x(i);
      const double r2 = x * x + y * y;
      m.mass += v;
      sx += v * x;
      sy += v * y;
      m.second += v * r2;
      m.log_moment += v * std::log1p(r2);
    }
  }
  if (m.mass > 0.0) m.center = {sx / m.mass, sy / m.mass};
  return m;
}

/// Radial moments integrate |x|^2 and ln(1+|x|^2) exactly over each shell
/// (values are piecewise constant); the center of mass is the origin.
inline MomentSet moments(const RadialDensity& rho) {
  MomentSet m;
  const int d = rho.dimension();
  const double area = unit_sphere_area(d);
  const auto& gl = gauss_legendre(8);
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double v = rho[i];
    if (v == 0.0) continue;
    const double a = rho.inner(i), b = rho.outer(i);
    m.mass += v * rho.shell_measure(i);
    m.second += v * area * (std::pow(b, d + 2) - std::pow(a, d + 2)) / (d + 2);
    m.log_moment += v * area * gl.integrate([d](double s) { return std::log1p(s * s) * std::pow(s, d - 1); }, a, b);
  }
  return m;
}

}  // namespace aggdiff
