#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "aggdiff/evolution.hpp"
#include "aggdiff/interval_set.hpp"
#include "aggdiff/potential.hpp"
#include "aggdiff/rearrangement.hpp"
#include "aggdiff/steady_state.hpp"
#include "aggdiff/steiner.hpp"

namespace aggdiff::acceptance {

struct Outcome {
  int id = 0;
  std::string suite;
  std::string title;
  bool pass = false;
  std::string measured;
  std::string tolerance;
  double seconds = 0.0;
};

struct Criterion {
  int id;
  std::string suite;
  std::string title;
  std::function<Outcome()> run;
};

namespace detail {

inline std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

inline std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : "; ") + p;
  return s;
}

inline IntervalSet random_union(std::mt19937_64& rng, std::vector<Interval>& raw) {
  std::uniform_int_distribution<int> count(1, 16);
  std::uniform_real_distribution<double> c(-10.0, 10.0), r(0.01, 1.5);
  raw.clear();
  const int n = count(rng);
  for (int i = 0; i < n; ++i) raw.push_back({c(rng), r(rng)});
  return normalize(raw);
}

inline double endpoint_distance(const IntervalSet& a, const IntervalSet& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max({d, std::abs(a.intervals()[i].left() - b.intervals()[i].left()),
                  std::abs(a.intervals()[i].right() - b.intervals()[i].right())});
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline Outcome interval_dynamics() {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> tau(0.0, 12.0), grow(0.0, 0.3), unit(0.0, 1.0);
  double measure_err = 0.0, semigroup_err = 0.0;
  std::size_t violations = 0, samples = 0;
  std::vector<Interval> raw;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto u = detail::random_union(rng, raw);
    const double s = tau(rng), t = tau(rng);
    const auto once = advance(u, s + t);
    measure_err = std::max(measure_err, std::abs(once.measure() - u.measure()));
    semigroup_err = std::max(semigroup_err, detail::endpoint_distance(once, advance(advance(u, s), t)));

    // A superset: every interval widened, plus a few extra ones.
    auto bigger = raw;
    for (auto& iv : bigger) iv.radius += grow(rng);
    std::vector<Interval> extra;
    detail::random_union(rng, extra);
    bigger.insert(bigger.end(), extra.begin(), extra.begin() + std::min<std::size_t>(3, extra.size()));
    const auto v = normalize(bigger);
    const double st = tau(rng);
    const auto mu = advance(u, st), mv = advance(v, st);
    const double lo = mv.intervals().front().left(), hi = mv.intervals().back().right();
    for (int k = 0; k < 1000; ++k) {
      const double x = lo + (hi - lo) * unit(rng);
      ++samples;
      if (mu.contains(x) && !mv.contains(x) && !mv.contains(x - 1e-12) && !mv.contains(x + 1e-12)) ++violations;
    }
  }
  Outcome o;
  o.pass = measure_err <= 1e-12 && semigroup_err <= 1e-12 && violations == 0;
  o.measured = detail::fmt("measure error %.2e; semigroup endpoint error %.2e; inclusion violations %zu of %zu samples",
                           measure_err, semigroup_err, violations, samples);
  o.tolerance = "measure <= 1e-12; endpoints <= 1e-12; 0 violations";
  return o;
}

inline Outcome pair_slope_bound() {
  const auto u1 = IntervalSet::from_endpoints({{-1.5, -0.5}});
  const auto u2 = IntervalSet::from_endpoints({{0.5, 1.5}});
  const double slope = pair_interaction_slope(u1, u2, [](double x) { return std::exp(-x * x); }, 1e-3);
  Outcome o;
  o.pass = slope >= 7.4e-4;
  o.measured = detail::fmt("dI/dtau(0+) = %.4e", slope);
  o.tolerance = ">= 7.4e-4 (quadrature step 1e-3)";
  return o;
}

/// Random density with bumps on both sides of the symmetry line, so every
/// sample is genuinely asymmetric about x = 0.
inline Density2D asymmetric_density(std::mt19937_64& rng, int trial, double side) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Density2D rho = Density2D::centered(64, side);
  const int count = 2 + trial % 3;
  std::vector<std::array<double, 4>> bumps;  // x, y, height, width
  const double yc = (u(rng) - 0.5) * side * 0.3;
  bumps.push_back({-(0.3 + 1.5 * u(rng)), yc + 0.4 * (u(rng) - 0.5), 0.5 + u(rng), 0.3 + 0.5 * u(rng)});
  bumps.push_back({0.3 + 1.5 * u(rng), yc + 0.4 * (u(rng) - 0.5), 0.5 + u(rng), 0.3 + 0.5 * u(rng)});
  for (int k = 2; k < count; ++k)
    bumps.push_back({(u(rng) - 0.5) * side * 0.5, (u(rng) - 0.5) * side * 0.5, 0.5 + u(rng), 0.3 + 0.5 * u(rng)});
  rho.fill([&](double x, double y) {
    double s = 0.0;
    for (const auto& b : bumps) s += b[2] * std::exp(-((x - b[0]) * (x - b[0]) + (y - b[1]) * (y - b[1])) / (b[3] * b[3]));
    return s;
  });
  return rho;
}

inline Outcome interaction_decay() {
  std::mt19937_64 rng(42);
  SteinerConfig cfg;
  cfg.levels = 128;
  for (int k = 0; k <= 10; ++k) cfg.taus.push_back(0.02 * k);
  int failures = 0;
  double worst_increase = -std::numeric_limits<double>::infinity(), flattest = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 50; ++trial) {
    const auto rep = interaction_energy_slope(asymmetric_density(rng, trial, 8.0), log2d(), cfg, 1e-6);
    worst_increase = std::max(worst_increase, rep.max_increase);
    flattest = std::max(flattest, rep.slope);
    if (!rep.non_increasing || !(rep.slope < 0.0)) ++failures;
  }
  Outcome o;
  o.pass = failures == 0;
  o.measured = detail::fmt("%d of 50 failing; largest step increase %.2e; largest fitted slope %.3e", failures,
                           worst_increase, flattest);
  o.tolerance = "increase <= 1e-6 and slope < 0 for every density";
  return o;
}

inline Outcome stationarity_dichotomy() {
  Density2D bumps = Density2D::centered(48, 8.0);
  bumps.fill([](double x, double y) {
    return std::exp(-((x + 1.0) * (x + 1.0) + y * y) / 0.5) +
           0.7 * std::exp(-((x - 1.2) * (x - 1.2) + (y - 0.3) * (y - 0.3)) / 0.4);
  });
  SteinerConfig a;
  a.levels = 64;
  const auto ra = stationarity_contradiction_test(bumps, log2d(), 2.0, a);

  const auto p = solve_radial_steady(2.0, 1.0, log2d());
  SteinerConfig b;
  b.levels = 64;
  b.h0 = 0.1 * p.rho.max();
  b.hyperplane = 0.25 * p.support_radius;
  const auto rb = stationarity_contradiction_test(p.rho, Density2D::centered(48, 8.0), log2d(), 2.0, b);
  const double bound = 1e-3 * std::abs(rb.c2) * rb.taus.back();

  Outcome o;
  const bool pa = ra.c1 < 0.0 && ra.c1 < -3.0 * ra.sigma_c1;
  const bool pb = std::abs(rb.c1) <= bound;
  o.pass = pa && pb;
  o.measured = detail::fmt("(a) c1 = %.4e, 3 sigma = %.2e; (b) |c1| = %.3e, c2 = %.3e, tau_max = %.3e", ra.c1,
                           3.0 * ra.sigma_c1, std::abs(rb.c1), rb.c2, rb.taus.back());
  o.tolerance = detail::fmt("(a) c1 < -3 sigma; (b) |c1| <= 1e-3 |c2| tau_max = %.3e", bound);
  return o;
}

inline Outcome rearrangement_inequalities() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_grid = [&](std::size_t n, double side) {
    Density2D f = Density2D::centered(n, side);
    for (auto& v : f.mutable_values()) v = u(rng) < 0.5 ? 0.0 : u(rng);
    return f;
  };

  double worst_gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 1000; ++k) worst_gap = std::min(worst_gap, hardy_littlewood_gap(random_grid(8, 1.0), random_grid(8, 1.0)));

  const double m = 2.5;
  double lp_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto f = random_grid(24, 3.0);
    const auto fs = schwarz_rearrangement_grid(f);
    for (double p : {1.0, 2.0, m}) {
      double a = 0.0, b = 0.0;
      for (double v : f.values()) a += std::pow(v, p);
      for (double v : fs.values()) b += std::pow(v, p);
      lp_err = std::max(lp_err, std::abs(a - b) / std::max(a, 1e-300));
    }
  }

  // Pairs with f# < g: g the rearrangement itself, or g squeezed toward the origin.
  int moment_failures = 0;
  double worst_moment = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    const auto f = random_grid(20, 2.0);
    auto g = schwarz_rearrangement(f, 0.01, 200);
    if (k % 2 == 1) {
      const double squeeze = 0.5 + 0.5 * u(rng);
      std::vector<double> v(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) v[i] = g.value_at(g.radius(i) / squeeze) / (squeeze * squeeze);
      RadialDensity h(2, g.dr(), std::move(v));
      const double scale = f.mass() / h.mass();
      for (auto& x : h.mutable_values()) x *= scale;
      g = std::move(h);
    }
    const auto v = second_moment_compare(f, g);
    if (!v.rearranged_less_concentrated || !v.holds) ++moment_failures;
    worst_moment = std::min(worst_moment, v.second_f - v.second_g);
  }
  Outcome o;
  o.pass = worst_gap >= -1e-10 && lp_err <= 1e-12 && moment_failures == 0;
  o.measured = detail::fmt("min HL gap %.2e; max relative Lp change %.2e; second-moment failures %d of 100 (min M2 gap %.3e)",
                           worst_gap, lp_err, moment_failures, worst_moment);
  o.tolerance = "gap >= -1e-10; Lp exact (<= 1e-12 rel.); 0 failures";
  return o;
}

inline Outcome steady_oracle() {
  constexpr double j01 = 2.404825557695773;
  const double R = std::numbers::sqrt2 * j01;
  const double A = 1.0 / (2.0 * std::numbers::pi * 2.0 * j01 * std::cyl_bessel_j(1.0, j01));
  const auto p = solve_radial_steady(2.0, 1.0, log2d(), {4096, 8.0});
  double worst = 0.0;
  for (std::size_t i = 0; i < p.rho.size(); ++i) {
    const double r = p.rho.radius(i);
    const double exact = r < R ? A * std::cyl_bessel_j(0.0, r / std::numbers::sqrt2) : 0.0;
    worst = std::max(worst, std::abs(p.rho[i] - exact));
  }
  const double support_err = std::abs(p.support_radius - R) / R;
  const double linf = worst / A;
  double spread = 0.0;
  for (double M : {0.5, 2.0}) {
    const auto q = solve_radial_steady(2.0, M, log2d(), {4096, 8.0});
    spread = std::max(spread, std::abs(q.support_radius / p.support_radius - 1.0));
  }
  Outcome o;
  o.pass = support_err <= 5e-3 && linf <= 1e-3 && spread <= 5e-3;
  o.measured = detail::fmt("support %.5f vs %.5f (rel. %.2e); L-inf rel. %.2e; mass spread of support %.2e",
                           p.support_radius, R, support_err, linf, spread);
  o.tolerance = "support <= 0.5%; profile <= 1e-3; mass independence <= 0.5%";
  return o;
}

inline Outcome scaling_law() {
  std::vector<std::string> parts;
  bool pass = true;
  for (double m : {1.5, 3.0}) {
    const RadialGrid g1{2048, m < 2.0 ? 24.0 : 3.0}, g4{2048, m < 2.0 ? 12.0 : 5.0};
    const auto p1 = solve_radial_steady(m, 1.0, log2d(), g1);
    const auto p4 = solve_radial_steady(m, 4.0, log2d(), g4);
    const auto s = rescale_steady(p1, 4.0);
    const double l1 = l1_distance(resample(s.rho, p4.rho.dr(), p4.rho.size()), p4.rho);
    const double predicted = std::pow(4.0, (m - 2.0) / (2.0 * (m - 1.0)));
    const double ratio = p4.support_radius / p1.support_radius;
    const double ratio_err = std::abs(ratio / predicted - 1.0);
    pass = pass && l1 <= 1e-3 && ratio_err <= 1e-2;
    parts.push_back(detail::fmt("m=%.1f: L1 %.2e, ratio %.4f vs %.4f (rel. %.2e)", m, l1, ratio, predicted, ratio_err));
  }
  Outcome o;
  o.pass = pass;
  o.measured = detail::join(parts);
  o.tolerance = "L1 <= 1e-3; support ratio within 1%";
  return o;
}

inline SolverConfig conservation_config(std::size_t n) {
  SolverConfig c;
  c.grid.n = n;
  c.grid.side = 12.0;
  c.t_end = 50.0;
  c.diagnostics_every = 10;
  c.initial.kind = InitialKind::two_bumps;
  c.initial.separation = 3.0;
  c.initial.width = 0.8;
  c.initial.weight = 0.6;
  c.initial.center = {0.3, -0.2};
  return c;
}

inline Outcome evolution_conservation() {
  const auto fine_cfg = conservation_config(256), coarse_cfg = conservation_config(128);
  const auto fine = run(fine_cfg);
  const auto coarse = run(coarse_cfg);
  double com = 0.0;
  for (const auto& r : fine.series)
    com = std::max(com, std::hypot(r.com_x - fine.series.front().com_x, r.com_y - fine.series.front().com_y));
  const auto rf = second_moment_residual(fine.series, fine_cfg);
  const auto rc = second_moment_residual(coarse.series, coarse_cfg);
  const double rate_f = rf.worst_rate / rf.scale, rate_c = rc.worst_rate / rc.scale;
  const double refinement = rate_f / rate_c;
  const double com_tol = 1e-6 * fine_cfg.grid.side;

  Outcome o;
  o.pass = fine.max_mass_drift <= 1e-10 && fine.max_energy_rise <= 1e-8 && com <= com_tol && rate_f <= 1e-2 &&
           refinement <= 0.5;
  o.measured = detail::fmt(
      "mass drift %.2e; max energy rise %.2e |E|; com drift %.2e; residual/(t scale) %.2e at 256, %.2e at 128 "
      "(ratio %.3f); %zu steps",
      fine.max_mass_drift, fine.max_energy_rise, com, rate_f, rate_c, refinement, fine.steps);
  o.tolerance = detail::fmt("mass <= 1e-10; rise <= 1e-8; com <= %.1e; residual <= 1e-2; ratio <= 0.5", com_tol);
  return o;
}

inline Outcome long_time_convergence() {
  SolverConfig c;
  c.grid.n = 256;
  c.grid.side = 12.0;
  c.t_end = 200.0;
  c.initial.kind = InitialKind::gaussian;
  c.initial.width = 1.0;
  c.initial.center = {0.7, -0.4};
  const auto rep = converge_to_steady(c, 1e-2, 2.0);
  Outcome o;
  o.pass = rep.converged && rep.final_time <= 200.0 + 1e-9 && rep.m2_bound_holds;
  o.measured = detail::fmt("L1 %.3e at t = %.1f (start %.3f); max M2 %.4f vs bound %.4f", rep.distance.back().second,
                           rep.final_time, rep.distance.front().second, rep.max_m2, rep.m2_bound);
  o.tolerance = "L1 <= 1e-2 by t = 200; M2 bound never exceeded";
  return o;
}

inline Outcome comparison_principles() {
  SolverConfig r;
  r.grid.radial = true;
  r.grid.n = 512;
  r.grid.rmax = 8.0;
  r.t_end = 20.0;
  r.snapshot_every = 0.5;
  r.initial.kind = InitialKind::disk;
  r.initial.radius = 2.0;
  const auto wide = run_radial(r);
  r.initial.radius = 1.2;
  const auto narrow = run_radial(r);
  const auto radial = concentration_comparison_check(wide.snapshots, narrow.snapshots);

  SolverConfig c;
  c.grid.n = 128;
  c.grid.side = 12.0;
  c.t_end = 20.0;
  c.snapshot_every = 1.0;
  c.initial.kind = InitialKind::two_bumps;
  c.initial.width = 0.7;
  c.initial.weight = 0.6;
  c.initial.separation = 3.5;
  const auto rho0 = make_initial(c);
  const auto bumps = run(c, rho0);
  const auto sym = run(c, schwarz_rearrangement_grid(rho0));
  const auto cart = concentration_comparison_check(bumps.snapshots, sym.snapshots);

  Outcome o;
  o.pass = radial.holds && cart.holds;
  o.measured = detail::fmt("nested disks: worst excess %.2e over %zu times; two bumps vs rearranged: %.2e over %zu times",
                           radial.worst_excess, radial.points.size(), cart.worst_excess, cart.points.size());
  o.tolerance = "excess <= 1e-12 M with one cell of slack";
  return o;
}

inline Outcome far_field() {
  RadialDensity disk(2, 1.0 / 256, 512);
  for (std::size_t i = 0; i < disk.size() && disk.outer(i) <= 1.0 + 1e-12; ++i) disk[i] = 1.0;
  // The shell route reduces to omega(R) times the enclosed mass; the generic
  // route integrates the kernel over every circle by quadrature instead.
  Kernel generic = log2d();
  generic.mean_value_shells = false;
  double shells = 0.0, quadrature = 0.0;
  for (double R : {1.5, 2.0, 3.0, 10.0, 100.0}) {
    shells = std::max(shells, std::abs(potential_far_field_ratio(disk, log2d(), R) / disk.mass() - 1.0));
    quadrature = std::max(quadrature, std::abs(potential_far_field_ratio(disk, generic, R) / disk.mass() - 1.0));
  }
  const double worst = std::max(shells, quadrature);
  Outcome o;
  o.pass = worst <= 1e-6;
  o.measured = detail::fmt("max |ratio / mass - 1| over R in {1.5, 2, 3, 10, 100}: shells %.2e, circle quadrature %.2e",
                           shells, quadrature);
  o.tolerance = "<= 1e-6";
  return o;
}

// ---------------------------------------------------------------------------

inline std::vector<Criterion> criteria() {
  return {
      {1, "steiner", "interval dynamics exactness", interval_dynamics},
      {2, "steiner", "pair interaction slope bound", pair_slope_bound},
      {3, "steiner", "interaction energy decay", interaction_decay},
      {4, "steiner", "stationarity dichotomy", stationarity_dichotomy},
      {5, "rearrangement", "rearrangement inequalities", rearrangement_inequalities},
      {6, "steady", "Bessel steady-state oracle", steady_oracle},
      {7, "steady", "mass scaling law", scaling_law},
      {8, "evolution", "conservation and monotonicity", evolution_conservation},
      {9, "evolution", "long-time convergence", long_time_convergence},
      {10, "evolution", "comparison principles", comparison_principles},
      {11, "kernel", "far-field potential", far_field},
  };
}

inline std::vector<std::string> suite_names() { return {"steiner", "rearrangement", "steady", "evolution", "kernel"}; }

/// Criteria matching a selector: "all", "none", a suite name or a criterion number.
inline std::vector<Criterion> select(const std::string& selector) {
  std::vector<Criterion> out;
  if (selector == "none") return out;
  for (auto& c : criteria())
    if (selector == "all" || selector == c.suite || selector == std::to_string(c.id)) out.push_back(std::move(c));
  if (out.empty()) throw ConfigError("accept: unknown suite '" + selector + "'");
  return out;
}

/// Worker count from AGGDIFF_THREADS, else the hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("AGGDIFF_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs the criteria on up to `threads` workers; results keep the input
/// order. A criterion that throws counts as a failure carrying the message.
inline std::vector<Outcome> run_all(const std::vector<Criterion>& list, unsigned threads,
                                    const std::function<void(const Outcome&)>& on_done = {}) {
  std::vector<Outcome> out(list.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < list.size();) {
      const auto t0 = std::chrono::steady_clock::now();
      Outcome o;
      try {
        o = list[i].run();
      } catch (const std::exception& e) {
        o.pass = false;
        o.measured = std::string("error: ") + e.what();
      }
      o.id = list[i].id;
      o.suite = list[i].suite;
      o.title = list[i].title;
      o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out[i] = o;
      if (on_done) {
        std::lock_guard lock(report);
        on_done(o);
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(list.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

inline std::string format_line(const Outcome& o) {
  return detail::fmt("%s  [%2d] %-32s %s | tolerance: %s (%.1f s)", o.pass ? "PASS" : "FAIL", o.id, o.title.c_str(),
                     o.measured.c_str(), o.tolerance.c_str(), o.seconds);
}

}  // namespace aggdiff::acceptance
