#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aggdiff/error.hpp"
#include "aggdiff/quadrature.hpp"

namespace aggdiff {

enum class SingularityClass { logarithmic, power, bounded };
enum class FarFieldClass { divergent, saturating, unclassified };

/**
 * Radial interaction potential W(x) = omega(|x|).
 *
 * Every kernel is stored in its attractive form (omega increasing) and
 * shifted so that omega(1) = 0. The constant that was added to the raw
 * profile is kept in `shift`; the interaction energy of a density of mass M
 * differs from the unshifted one by M^2 * shift / 2.
 *
 * Instances are immutable after construction and safe to share.
 */
struct Kernel {
  std::string name;
  int dimension = 2;
  std::function<double(double)> omega;
  std::function<double(double)> omega_prime;
  SingularityClass singularity = SingularityClass::bounded;
  double singular_exponent = 0.0;  // p in |x|^{-p} for power singularities
  FarFieldClass far_field = FarFieldClass::unclassified;
  double far_limit = 0.0;  // limit of omega at infinity when saturating
  double far_alpha = 0.0;  // homogeneity exponent of limit - omega
  double shift = 0.0;
  // omega = log_coefficient * log(r) exactly (2D logarithmic kernel).
  double log_coefficient = 0.0;
  // Sphere averages obey Newton's theorem: mean of W(x - y) over |y| = s
  // equals omega(max(|x|, s)). True for multiples of the fundamental solution.
  bool mean_value_shells = false;
  // W = -N with N the 2D Newtonian kernel; the energy then reads
  // S + (1/4pi) iint log|x-y| rho rho, i.e. the Keller-Segel form.
  bool keller_segel = false;
  double regularization = 0.0;
  // Optional closed form of int_0^s omega(t) |S^{d-1}| t^{d-1} dt.
  std::function<double(double)> radial_primitive;

  double operator()(double r) const { return omega(r); }
  double derivative(double r) const { return omega_prime(r); }

  /// Mean of omega(|x|) over the square cell [-dx/2, dx/2]^2.
  double origin_cell_average(double dx) const {
    const double a = 0.5 * dx;
    if (log_coefficient != 0.0) {
      // (1/4a^2) iint log|x| = log a + log(2)/2 - 3/2 + pi/4
      return log_coefficient * (std::log(a) + 0.5 * std::numbers::ln2 - 1.5 + 0.25 * std::numbers::pi) +
             shift;
    }
    // Polar quadrature over one of the eight congruent triangles.
    const auto& gl = gauss_legendre(64);
    const double tri = gl.integrate(
        [&](double theta) {
          const double rmax = a / std::cos(theta);
          return gl.integrate([&](double r) { return omega(r) * r; }, 0.0, rmax);
        },
        0.0, 0.25 * std::numbers::pi);
    return 8.0 * tri / (4.0 * a * a);
  }
};

/// 2D attractive logarithmic kernel omega(r) = log(r) / (2 pi), i.e. W = -N.
inline Kernel log2d() {
  Kernel k;
  k.name = "log2d";
  k.dimension = 2;
  const double c = 0.5 / std::numbers::pi;
  k.omega = [c](double r) { return c * std::log(r); };
  k.omega_prime = [c](double r) { return c / r; };
  k.singularity = SingularityClass::logarithmic;
  k.far_field = FarFieldClass::divergent;
  k.log_coefficient = c;
  k.mean_value_shells = true;
  k.keller_segel = true;
  k.radial_primitive = [](double s) { return s > 0.0 ? 0.5 * s * s * std::log(s) - 0.25 * s * s : 0.0; };
  return k;
}

/// Attractive Newtonian kernel W = -N in R^d, shifted to omega(1) = 0.
inline Kernel newtonian(int d) {
  if (d < 1) throw ConfigError("newtonian kernel: dimension must be >= 1");
  if (d == 2) {
    Kernel k = log2d();
    k.name = "newtonian2d";
    return k;
  }
  Kernel k;
  k.dimension = d;
  k.mean_value_shells = true;
  if (d == 1) {
    k.name = "newtonian1d";
    k.omega = [](double r) { return 0.5 * (r - 1.0); };
    k.omega_prime = [](double) { return 0.5; };
    k.shift = -0.5;
    k.far_field = FarFieldClass::divergent;
    k.radial_primitive = [](double s) { return 0.5 * s * s - s; };
    return k;
  }
  const double c = 1.0 / ((d - 2) * unit_sphere_area(d));
  k.name = "newtonian" + std::to_string(d) + "d";
  k.omega = [c, d](double r) { return c * (1.0 - std::pow(r, 2.0 - d)); };
  k.omega_prime = [c, d](double r) { return c * (d - 2) * std::pow(r, 1.0 - d); };
  k.singularity = SingularityClass::power;
  k.singular_exponent = d - 2;
  k.far_field = FarFieldClass::saturating;
  k.far_limit = c;
  k.far_alpha = d - 2;
  k.shift = c;
  k.radial_primitive = [d](double s) { return (std::pow(s, d) / d - 0.5 * s * s) / (d - 2); };
  return k;
}

/**
 * Regularized 2D logarithmic interaction.
 *
 * N_eps(x) = -(1/4pi) log(|x|^2 + eps^2), grad N_eps = -(1/2pi) x / (|x|^2 + eps^2),
 * J_eps = -Lap N_eps = (1/pi) eps^2 / (|x|^2 + eps^2)^2 >= 0 with unit mass.
 */
struct RegularizedLogKernel {
  double epsilon;

  explicit RegularizedLogKernel(double eps) : epsilon(eps) {
    if (!(eps > 0.0)) throw ConfigError("regularized log kernel: epsilon must be > 0");
  }

  double potential(double r) const {
    return -0.25 / std::numbers::pi * std::log(r * r + epsilon * epsilon);
  }
  /// Radial component of grad N_eps (pointing outward).
  double gradient(double r) const { return -0.5 / std::numbers::pi * r / (r * r + epsilon * epsilon); }
  double source(double r) const {
    const double q = r * r + epsilon * epsilon;
    return epsilon * epsilon / (std::numbers::pi * q * q);
  }

  /// Attractive, normalized form W = -N_eps + const with omega(1) = 0.
  Kernel as_kernel() const {
    Kernel k;
    k.name = "log2d_eps";
    k.dimension = 2;
    const double e2 = epsilon * epsilon;
    const double shift = -0.25 / std::numbers::pi * std::log(1.0 + e2);
    k.omega = [e2, shift](double r) { return 0.25 / std::numbers::pi * std::log(r * r + e2) + shift; };
    k.omega_prime = [e2](double r) { return 0.5 / std::numbers::pi * r / (r * r + e2); };
    k.singularity = SingularityClass::bounded;
    k.far_field = FarFieldClass::divergent;
    k.shift = shift;
    k.keller_segel = true;
    k.regularization = epsilon;
    return k;
  }
};

/// Kernel from user-supplied evaluators.
inline Kernel custom_kernel(std::string name, int d, std::function<double(double)> omega,
                            std::function<double(double)> omega_prime) {
  Kernel k;
  k.name = std::move(name);
  k.dimension = d;
  k.omega = std::move(omega);
  k.omega_prime = std::move(omega_prime);
  return k;
}

struct KernelTableRow {
  double r, omega, omega_prime;
};

/// Piecewise-linear kernel through tabulated (r, omega, omega') rows.
/// Outside the table omega is extended linearly with the end slopes.
inline Kernel table_kernel(std::vector<KernelTableRow> rows, int d, std::string name = "table") {
  if (rows.size() < 2) throw ConfigError("kernel table needs at least two rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i].r > 0.0)) throw ConfigError("kernel table: radii must be positive");
    if (i > 0 && !(rows[i].r > rows[i - 1].r)) throw ConfigError("kernel table: radii must be strictly increasing");
  }
  auto table = std::make_shared<const std::vector<KernelTableRow>>(std::move(rows));
  auto lookup = [table](double r, bool derivative) {
    const auto& t = *table;
    if (r <= t.front().r) {
      return derivative ? t.front().omega_prime : t.front().omega + t.front().omega_prime * (r - t.front().r);
    }
    if (r >= t.back().r) {
      return derivative ? t.back().omega_prime : t.back().omega + t.back().omega_prime * (r - t.back().r);
    }
    auto it = std::upper_bound(t.begin(), t.end(), r, [](double x, const KernelTableRow& row) { return x < row.r; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (r - lo.r) / (hi.r - lo.r);
    return derivative ? (1 - w) * lo.omega_prime + w * hi.omega_prime : (1 - w) * lo.omega + w * hi.omega;
  };
  Kernel k;
  k.name = std::move(name);
  k.dimension = d;
  k.omega = [lookup](double r) { return lookup(r, false); };
  k.omega_prime = [lookup](double r) { return lookup(r, true); };
  return k;
}

/// Reads whitespace- or comma-separated (r, omega, omega') rows; '#' starts a comment.
inline Kernel load_table_kernel(const std::string& path, int d) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open kernel table: " + path);
  std::vector<KernelTableRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    KernelTableRow row{};
    if (ls >> row.r >> row.omega >> row.omega_prime) rows.push_back(row);
  }
  return table_kernel(std::move(rows), d, "custom:" + path);
}

/// Comparison profile: r^{2-d} (d >= 3), -log r (d = 2), r - 1 (d = 1).
inline double phi(int d, double r) {
  if (d >= 3) return std::pow(r, 2.0 - d);
  if (d == 2) return -std::log(r);
  return r - 1.0;
}

struct AssumptionCheck {
  bool satisfied = false;
  std::optional<double> witness_radius;  // radius of the (first) violation
  double constant = 0.0;                 // audited constant, if any
  std::string note;
};

/// Sample-based audit of the kernel hypotheses. "Satisfied" means
/// satisfied on the recorded probe grid.
struct AssumptionReport {
  int dimension = 0;
  std::size_t probe_count = 0;
  double probe_min = 0.0, probe_max = 0.0;
  std::array<AssumptionCheck, 6> k{};  // K1..K6 at indices 0..5
  double k6_limit = 0.0;
  double k6_alpha = 0.0;

  const AssumptionCheck& operator[](int i) const { return k.at(i - 1); }
  double phi(double r) const { return aggdiff::phi(dimension, r); }
};

/// Logarithmically spaced probe radii in [lo, hi].
inline std::vector<double> log_probe_grid(double lo = 1e-4, double hi = 1e4, int per_decade = 10) {
  const int n = static_cast<int>(std::round(std::log10(hi / lo) * per_decade));
  std::vector<double> r(n + 1);
  for (int i = 0; i <= n; ++i) r[i] = lo * std::pow(hi / lo, static_cast<double>(i) / n);
  r.back() = hi;
  return r;
}

namespace detail {

inline double checked(const std::function<double(double)>& f, double r, const char* what) {
  const double v = f(r);
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "non-finite " << what << " at r = " << r;
    throw EvaluationError(os.str(), r);
  }
  return v;
}

// Log-log growth rate of g as the sampled variable moves from `from` to `to`.
inline double growth_exponent(double g_from, double g_to, double from, double to) {
  return std::log(std::abs(g_to) / std::abs(g_from)) / std::abs(std::log(to / from));
}

}  // namespace detail

inline AssumptionReport audit_assumptions(const Kernel& kernel, const std::vector<double>& probe_radii) {
  if (probe_radii.empty()) throw DomainError("audit_assumptions: empty probe grid");
  std::vector<double> r = probe_radii;
  std::sort(r.begin(), r.end());
  if (!(r.front() > 0.0)) throw DomainError("audit_assumptions: probe radii must be positive");
  if (r.front() > 1e-4 * (1 + 1e-12) || r.back() < 1e4 * (1 - 1e-12))
    throw DomainError("audit_assumptions: probes must span at least [1e-4, 1e4]");

  AssumptionReport rep;
  rep.dimension = kernel.dimension;
  rep.probe_count = r.size();
  rep.probe_min = r.front();
  rep.probe_max = r.back();
  const int d = kernel.dimension;

  std::vector<double> w(r.size()), dw(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    w[i] = detail::checked(kernel.omega, r[i], "omega");
    dw[i] = detail::checked(kernel.omega_prime, r[i], "omega'");
  }
  auto value_at = [&](double x) { return detail::checked(kernel.omega, x, "omega"); };

  // K1: attractive and normalized.
  {
    auto& c = rep.k[0];
    c.satisfied = true;
    const double w1 = value_at(1.0);
    if (std::abs(w1) > 1e-12) {
      c.satisfied = false;
      c.witness_radius = 1.0;
      c.constant = w1;
      c.note = "normalization omega(1) = 0 violated";
    }
    for (std::size_t i = 0; i < r.size() && c.satisfied; ++i) {
      if (!(dw[i] > 0.0)) {
        c.satisfied = false;
        c.witness_radius = r[i];
        c.note = "omega' not positive";
      }
    }
    if (c.satisfied) c.note = "attractive, omega(1) = 0";
  }

  // Indices for the smallest and largest probe decades.
  auto index_of = [&](double x) {
    return static_cast<std::size_t>(std::lower_bound(r.begin(), r.end(), x) - r.begin());
  };
  const std::size_t i_one = index_of(1.0);
  const std::size_t i_lo_decade = std::min(index_of(r.front() * 10.0), r.size() - 1);
  const std::size_t i_hi_decade = index_of(r.back() / 10.0);
  constexpr double growth_tol = 0.05;

  // K2: omega'(r) <= C r^{1-d} for r <= 1.
  {
    auto& c = rep.k[1];
    double cmax = 0.0;
    for (std::size_t i = 0; i < i_one; ++i) cmax = std::max(cmax, std::abs(dw[i]) * std::pow(r[i], d - 1));
    c.constant = cmax;
    const double g0 = std::abs(dw[0]) * std::pow(r[0], d - 1);
    const double g1 = std::abs(dw[i_lo_decade]) * std::pow(r[i_lo_decade], d - 1);
    const double growth = (g0 > 0 && g1 > 0) ? detail::growth_exponent(g1, g0, r[i_lo_decade], r[0]) : 0.0;
    c.satisfied = std::isfinite(cmax) && growth <= growth_tol;
    if (!c.satisfied) c.witness_radius = r[0];
    c.note = "C_w = sup omega'(r) r^{d-1} on r <= 1";
  }

  // K3: omega'(r) <= C for r > 1.
  {
    auto& c = rep.k[2];
    double cmax = 0.0;
    for (std::size_t i = i_one; i < r.size(); ++i) cmax = std::max(cmax, std::abs(dw[i]));
    c.constant = cmax;
    const double g0 = std::abs(dw[i_hi_decade]);
    const double g1 = std::abs(dw.back());
    const double growth = (g0 > 0 && g1 > 0) ? detail::growth_exponent(g0, g1, r[i_hi_decade], r.back()) : 0.0;
    c.satisfied = std::isfinite(cmax) && growth <= growth_tol;
    if (!c.satisfied) c.witness_radius = r.back();
    c.note = "C_w = sup omega'(r) on r > 1";
  }

  // Far-field increments over the last two decades.
  const double w_far = w.back();
  const double w_mid = value_at(r.back() / 10.0);
  const double w_near = value_at(r.back() / 100.0);
  const double inc_hi = w_far - w_mid;
  const double inc_lo = w_mid - w_near;
  const bool bounded_far = std::abs(inc_hi) <= 1e-3 * (1.0 + std::abs(w_far)) && inc_hi <= 0.5 * std::abs(inc_lo);

  // K4: bounded on r >= 1, or omega_+(a+b) <= C (1 + omega(1+a) + omega(1+b)).
  {
    auto& c = rep.k[3];
    if (bounded_far) {
      c.satisfied = true;
      c.note = "omega bounded on r >= 1";
    } else {
      double cmax = 0.0;
      std::optional<double> worst;
      std::vector<double> ab{0.0};
      for (std::size_t i = 0; i < r.size(); i += 4) ab.push_back(r[i]);
      for (double a : ab) {
        for (double b : ab) {
          const double lhs = std::max(0.0, value_at(a + b > 0 ? a + b : r.front()));
          const double rhs = 1.0 + value_at(1.0 + a) + value_at(1.0 + b);
          const double ratio = rhs > 0 ? lhs / rhs : (lhs > 0 ? INFINITY : 0.0);
          if (ratio > cmax || !std::isfinite(ratio)) {
            cmax = ratio;
            worst = a + b;
          }
        }
      }
      c.constant = cmax;
      c.satisfied = std::isfinite(cmax) && cmax <= 1e3;
      if (!c.satisfied) c.witness_radius = worst;
      c.note = "omega_+(a+b) <= C (1 + omega(1+a) + omega(1+b)) on probe pairs";
    }
  }

  // K5: omega_+ -> +infinity (increments do not decay geometrically).
  {
    auto& c = rep.k[4];
    c.satisfied = inc_hi > 0.0 && inc_lo > 0.0 && inc_hi >= 0.5 * inc_lo && w_far > 0.0;
    c.constant = inc_lo > 0 ? inc_hi / inc_lo : 0.0;
    c.note = "ratio of omega increments over the last two decades";
    if (!c.satisfied) c.witness_radius = r.back();
  }

  // K6: omega -> l in (0, inf) with K = l - omega, K(tau x) >= tau^{-alpha} K(x).
  {
    auto& c = rep.k[5];
    c.satisfied = false;
    if (!rep.k[4].satisfied) {
      const double R = r.back();
      const double w0 = value_at(R / 4.0), w1 = value_at(R / 2.0), w2 = value_at(R);
      const double d1 = w2 - w1, d0 = w1 - w0;
      double ell = w2;
      if (std::abs(d1 - d0) > 0.0) ell = w2 - d1 * d1 / (d1 - d0);
      rep.k6_limit = ell;
      if (std::isfinite(ell) && ell > 0.0) {
        // Least squares for log K(tau x) - log K(x) = -alpha log tau, tau in {1,2,4,8}.
        double num = 0.0, den = 0.0;
        bool positive = true;
        std::vector<std::array<double, 3>> samples;  // x, tau, K(tau x)/K(x)
        for (double x : r) {
          if (x <= 1.0 || x > 100.0) continue;
          const double k0 = ell - value_at(x);
          if (!(k0 > 0.0)) {
            positive = false;
            c.witness_radius = x;
            break;
          }
          for (double tau : {2.0, 4.0, 8.0}) {
            const double kt = ell - value_at(tau * x);
            if (!(kt > 0.0)) {
              positive = false;
              c.witness_radius = tau * x;
              break;
            }
            num += std::log(tau) * (std::log(kt) - std::log(k0));
            den += std::log(tau) * std::log(tau);
            samples.push_back({x, tau, kt / k0});
          }
        }
        if (positive && den > 0.0) {
          const double alpha = -num / den;
          rep.k6_alpha = alpha;
          bool homogeneous = alpha > 0.0 && alpha < d;
          for (const auto& s : samples) {
            if (s[2] < std::pow(s[1], -alpha) * (1.0 - 1e-6)) {
              homogeneous = false;
              c.witness_radius = s[0] * s[1];
              break;
            }
          }
          c.satisfied = homogeneous;
        }
      }
    }
    c.constant = rep.k6_alpha;
    c.note = "alpha fitted over dyadic tau in {1, 2, 4, 8}";
  }

  return rep;
}

inline AssumptionReport audit_assumptions(const Kernel& kernel) {
  return audit_assumptions(kernel, log_probe_grid());
}

}  // namespace aggdiff
