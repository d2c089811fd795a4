#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "aggdiff/quadrature.hpp"
#include "aggdiff/steady_state.hpp"
#include "aggdiff/steiner.hpp"

namespace aggdiff {
namespace {

Density2D two_bumps(std::size_t n = 48, double side = 8.0) {
  Density2D rho = Density2D::centered(n, side);
  rho.fill([](double x, double y) {
    return std::exp(-((x + 1.0) * (x + 1.0) + y * y) / 0.5) +
           0.7 * std::exp(-((x - 1.2) * (x - 1.2) + (y - 0.3) * (y - 0.3)) / 0.4);
  });
  return rho;
}

Density2D gaussian(std::size_t n, double side, double cx = 0.0, double cy = 0.0) {
  Density2D rho = Density2D::centered(n, side);
  rho.fill([&](double x, double y) { return std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy))); });
  return rho;
}

// Overlap length of [a1, b1] and [a2, b2] + z, as a function of z.
double overlap(double a1, double b1, double a2, double b2, double z) {
  return std::max(0.0, std::min(b1, b2 + z) - std::max(a1, a2 + z));
}

// Graded breakpoints of [lo, hi] toward 0 when 0 lies inside.
std::vector<double> cuts(std::vector<double> pts) {
  std::vector<double> out;
  std::sort(pts.begin(), pts.end());
  const double lo = pts.front(), hi = pts.back();
  if (lo < 0.0 && hi > 0.0) pts.push_back(0.0);
  for (int k = 1; k <= 24; ++k) {
    const double s = std::ldexp(1.0, -k);
    if (-s * (-lo) > lo) pts.push_back(-s * (-lo));
    if (s * hi < hi) pts.push_back(s * hi);
  }
  std::sort(pts.begin(), pts.end());
  for (double p : pts)
    if (out.empty() || p > out.back()) out.push_back(p);
  return out;
}

// iint over two axis-aligned rectangles of log|x - y|, written as the
// integral of log|(z, w)| against the product of the two overlap trapezoids.
double rectangle_log_integral(const std::array<double, 4>& r1, const std::array<double, 4>& r2) {
  const auto& gl = gauss_legendre(16);
  const auto zc = cuts({r1[0] - r2[1], r1[0] - r2[0], r1[1] - r2[1], r1[1] - r2[0]});
  const auto wc = cuts({r1[2] - r2[3], r1[2] - r2[2], r1[3] - r2[3], r1[3] - r2[2]});
  double total = 0.0;
  for (std::size_t a = 0; a + 1 < zc.size(); ++a)
    for (std::size_t b = 0; b + 1 < wc.size(); ++b)
      total += gl.integrate(
          [&](double z) {
            const double tz = overlap(r1[0], r1[1], r2[0], r2[1], z);
            if (tz == 0.0) return 0.0;
            return tz * gl.integrate(
                            [&](double w) {
                              return overlap(r1[2], r1[3], r2[2], r2[3], w) * 0.5 * std::log(z * z + w * w);
                            },
                            wc[b], wc[b + 1]);
          },
          zc[a], zc[a + 1]);
  return total;
}

QuantizedDensity hand_built_layer_cake() {
  QuantizedDensity q;
  q.geometry = Density2D(4, 2, 0.5, -1.0, -0.5);
  q.axis = Axis::x;
  q.level_spacing = 0.3;
  q.lines = {
      {IntervalSet::from_endpoints({{-1.0, 0.6}}), IntervalSet::from_endpoints({{-0.4, 0.2}})},
      {IntervalSet::from_endpoints({{-0.5, 1.2}, {1.5, 2.0}}), IntervalSet::from_endpoints({{0.1, 0.9}})},
  };
  return q;
}

TEST(LayerCake, InteractionMatchesRectangleQuadrature) {
  const auto q = hand_built_layer_cake();
  std::vector<std::array<double, 4>> rects;
  for (std::size_t l = 0; l < q.lines.size(); ++l) {
    const double y = q.geometry.y(l);
    for (const auto& set : q.lines[l])
      for (const auto& iv : set.intervals()) rects.push_back({iv.left(), iv.right(), y - 0.25, y + 0.25});
  }
  double direct = 0.0;
  for (const auto& a : rects)
    for (const auto& b : rects) direct += rectangle_log_integral(a, b);
  direct *= 0.5 * q.level_spacing * q.level_spacing / (2.0 * std::numbers::pi);
  EXPECT_NEAR(layer_cake_interaction(q, log2d()), direct, 1e-9);
}

TEST(LayerCake, UnitSquareSelfInteraction) {
  const double self = rectangle_log_integral({0, 1, 0, 1}, {0, 1, 0, 1});
  // Mean of log|x - y| over the unit square, closed form.
  const double closed = (std::log(2.0) + std::numbers::pi) / 3.0 - 25.0 / 12.0;
  EXPECT_NEAR(self, closed, 1e-10);
  QuantizedDensity q;
  q.geometry = Density2D(1, 1, 1.0, 0.0, 0.0);
  q.level_spacing = 1.0;
  q.lines = {{IntervalSet::from_endpoints({{0.0, 1.0}})}};
  EXPECT_NEAR(layer_cake_interaction(q, log2d()), 0.5 * closed / (2.0 * std::numbers::pi), 1e-12);
}

TEST(LayerCake, EntropyOfHandBuiltProfile) {
  const auto q = hand_built_layer_cake();
  // Line 0 pieces: 0.3 on (-1,-0.4) and (0.2,0.6), 0.6 on (-0.4,0.2).
  // Line 1 pieces: 0.3 on (-0.5,0.1), (0.9,1.2), (1.5,2); 0.6 on (0.1,0.9).
  const double m = 2.5;
  const double s = (1.0 * std::pow(0.3, m) + 0.6 * std::pow(0.6, m)) + (1.4 * std::pow(0.3, m) + 0.8 * std::pow(0.6, m));
  EXPECT_NEAR(layer_cake_entropy(q, m), s * 0.5 / (m - 1.0), 1e-14);
  EXPECT_NEAR(quantized_mass(q), 0.3 * 0.5 * (1.6 + 0.6 + 1.7 + 0.5 + 0.8), 1e-14);
}

TEST(LayerCake, MatchesGridEnergyWhenProfileIsExact) {
  // Values that are exact multiples of the level spacing quantize without error.
  Density2D rho = Density2D::centered(16, 4.0);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> lvl(0, 4);
  for (auto& v : rho.mutable_values()) v = 0.25 * lvl(rng);
  rho(3, 3) = 1.0;
  const auto q = quantize_levels(rho, 4);
  const auto e = layer_cake_energy(q, log2d(), 2.0);
  const auto g = free_energy(rho, log2d(), 2.0);
  EXPECT_NEAR(e.entropy, g.entropy, 1e-12);
  // The grid operator uses midpoint weights off the host cell.
  EXPECT_NEAR(e.interaction, g.interaction, 5e-3 * std::abs(g.interaction));
}

TEST(LayerCake, InteractionIsTranslationInvariant) {
  auto q = hand_built_layer_cake();
  const double i0 = layer_cake_interaction(q, log2d());
  for (auto& line : q.lines)
    for (auto& set : line) set = translated(set, 0.37);
  EXPECT_NEAR(layer_cake_interaction(q, log2d()), i0, 1e-13);
  EXPECT_THROW(layer_cake_interaction(q, newtonian(3)), ConfigError);
}

TEST(SteinerFlow, PreservesDistributionAlongLines) {
  const auto rho = two_bumps();
  SteinerConfig cfg;
  cfg.levels = 64;
  cfg.hyperplane = 0.3;
  const auto q = quantize_levels(rho, cfg.levels);
  for (double tau : {0.05, 0.4, 2.0, 9.0}) {
    const auto moved = advance_levels(q, tau, cfg);
    EXPECT_NEAR(quantized_mass(moved), quantized_mass(q), 1e-12);
    for (double p : {2.0, 3.0, 1.7})
      EXPECT_NEAR(layer_cake_entropy(moved, p), layer_cake_entropy(q, p), 1e-12) << "tau " << tau << " p " << p;
  }
  EXPECT_NEAR(steiner_advance(rho, 0.4, cfg).mass(), quantized_mass(q), 1e-12);
}

TEST(SteinerFlow, SemigroupOnQuantizedDensity) {
  const auto q = quantize_levels(two_bumps(32), 32);
  SteinerConfig cfg;
  cfg.hyperplane = -0.2;
  for (auto [s, t] : {std::pair{0.1, 0.3}, {0.7, 0.05}, {1.3, 2.2}}) {
    const auto a = advance_levels(advance_levels(q, s, cfg), t, cfg);
    const auto b = advance_levels(q, s + t, cfg);
    for (std::size_t l = 0; l < a.lines.size(); ++l)
      for (std::size_t j = 0; j < a.lines[l].size(); ++j) {
        const auto& ia = a.lines[l][j].intervals();
        const auto& ib = b.lines[l][j].intervals();
        ASSERT_EQ(ia.size(), ib.size());
        for (std::size_t k = 0; k < ia.size(); ++k) {
          ASSERT_NEAR(ia[k].left(), ib[k].left(), 1e-12);
          ASSERT_NEAR(ia[k].right(), ib[k].right(), 1e-12);
        }
      }
  }
}

TEST(SteinerFlow, LargeTimeGivesCenteredNestedSlabs) {
  const auto rho = two_bumps(32);
  SteinerConfig cfg;
  cfg.levels = 32;
  cfg.hyperplane = 0.5;
  const auto q = advance_levels(quantize_levels(rho, cfg.levels), 20.0, cfg);
  for (const auto& line : q.lines) {
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& set : line) {
      if (set.empty()) {
        prev = 0.0;
        continue;
      }
      ASSERT_EQ(set.size(), 1u);
      EXPECT_DOUBLE_EQ(set.intervals()[0].center, 0.5);
      ASSERT_LE(set.measure(), prev + 1e-12);
      prev = set.measure();
    }
  }
  // The limit is a fixed point.
  EXPECT_EQ(advance_levels(q, 3.0, cfg).lines, q.lines);
}

TEST(SteinerFlow, ModifiedEqualsContinuousAboveThreshold) {
  const auto rho = two_bumps(32);
  SteinerConfig cfg;
  cfg.levels = 16;
  const auto q = quantize_levels(rho, cfg.levels);
  SteinerConfig mod = cfg;
  mod.mode = SteinerMode::modified;
  mod.h0 = 0.5 * q.level(0);
  EXPECT_EQ(advance_levels(q, 0.3, mod).lines, advance_levels(q, 0.3, cfg).lines);
  EXPECT_EQ(modified_steiner_advance(rho, 0.3, mod).values().size(), rho.size());
}

TEST(SteinerFlow, ModifiedFlowStaysCloseToContinuous) {
  // One bump, one interval per line and level: each slow slab lags by
  // (1 - v) tau, so the L1 gap is at most 2 tau dh dx per slow slab.
  const auto rho = gaussian(48, 8.0, -1.3, 0.4);
  SteinerConfig cfg;
  cfg.levels = 64;
  const auto q = quantize_levels(rho, cfg.levels);
  SteinerConfig mod = cfg;
  mod.mode = SteinerMode::modified;
  mod.h0 = 0.2 * rho.max();
  double bound_rate = 0.0;
  for (const auto& line : q.lines)
    for (std::size_t j = 0; j < line.size(); ++j)
      if (q.level(j) < mod.h0 && !line[j].empty()) bound_rate += 2.0 * q.level_spacing * rho.dx();
  for (double tau : {0.01, 0.1, 0.5}) {
    const auto a = reconstruct(advance_levels(q, tau, cfg));
    const auto b = reconstruct(advance_levels(q, tau, mod));
    double l1 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) l1 += std::abs(a.values()[k] - b.values()[k]);
    l1 *= a.cell_measure();
    EXPECT_LE(l1, tau * bound_rate + 1e-12) << tau;
    EXPECT_GT(l1, 0.0);
  }
}

TEST(SteinerFlow, RejectsBadConfiguration) {
  const auto rho = gaussian(16, 4.0);
  SteinerConfig cfg;
  cfg.levels = 0;
  EXPECT_THROW(steiner_advance(rho, 0.1, cfg), ConfigError);
  cfg = {};
  EXPECT_THROW(modified_steiner_advance(rho, 0.1, cfg), ConfigError);  // h0 unset
  const auto q = quantize_levels(rho, 8);
  EXPECT_THROW(advance_levels(q, -1.0, cfg), DomainError);
  Density2D bad = rho;
  bad(2, 2) = -1.0;
  EXPECT_THROW(steiner_advance(bad, 0.1, {}), DomainError);
}

TEST(SteinerFlow, ZeroDensityStaysZero) {
  const Density2D zero = Density2D::centered(16, 4.0);
  EXPECT_EQ(steiner_advance(zero, 1.0, {}).max(), 0.0);
  const auto rep = stationarity_contradiction_test(zero, log2d(), 2.0, {});
  EXPECT_EQ(rep.c1, 0.0);
  EXPECT_EQ(rep.c2, 0.0);
}

TEST(Symmetry, HalfMassHyperplane) {
  const auto rho = gaussian(64, 8.0, 0.75, -0.5);
  EXPECT_NEAR(half_mass_hyperplane(rho, Axis::x), 0.75, 1e-3);
  EXPECT_NEAR(half_mass_hyperplane(rho, Axis::y), -0.5, 1e-3);
}

TEST(Symmetry, DetectsRadialDecrease) {
  const auto centered = detect_radial_decreasing(gaussian(64, 8.0), 0.05);
  EXPECT_TRUE(centered.is_radially_decreasing);
  EXPECT_NEAR(centered.center[0], 0.0, 1e-12);
  const auto shifted = detect_radial_decreasing(gaussian(64, 8.0, 1.0, -1.0), 0.05);
  EXPECT_TRUE(shifted.is_radially_decreasing);
  EXPECT_NEAR(shifted.center[0], 1.0, 1e-3);
  EXPECT_NEAR(shifted.center[1], -1.0, 1e-3);
  const auto bumps = detect_radial_decreasing(two_bumps(64), 0.05);
  EXPECT_FALSE(bumps.is_radially_decreasing);
  EXPECT_GT(bumps.residual[0], 0.3);
  EXPECT_THROW(detect_radial_decreasing(Density2D::centered(8, 1.0), 0.1), DomainError);
}

TEST(InteractionDecay, PairOfIntervalsAttractsAtPositiveRate) {
  const auto u1 = IntervalSet::from_endpoints({{-1.5, -0.5}});
  const auto u2 = IntervalSet::from_endpoints({{0.5, 1.5}});
  const auto K = [](double x) { return std::exp(-x * x); };
  // Moving both unit intervals together by t raises the overlap integral.
  EXPECT_GE(pair_interaction_slope(u1, u2, K, 1e-3), 7.4e-4);
  const double direct = pair_interaction(u1, u2, K, 1e-3);
  EXPECT_NEAR(direct, pair_interaction(u2, u1, K, 1e-3), 1e-12);
  // Centered intervals do not move.
  const auto c = IntervalSet::from_endpoints({{-0.5, 0.5}});
  EXPECT_DOUBLE_EQ(pair_interaction_slope(c, c, K, 1e-2), 0.0);
}

TEST(InteractionDecay, AsymmetricDensityLosesInteractionEnergy) {
  SteinerConfig cfg;
  cfg.levels = 32;
  for (int k = 0; k <= 10; ++k) cfg.taus.push_back(0.02 * k);
  const auto rep = interaction_energy_slope(two_bumps(32), log2d(), cfg);
  EXPECT_TRUE(rep.non_increasing) << rep.max_increase;
  EXPECT_LT(rep.slope, 0.0);
  EXPECT_FALSE(rep.symmetric_input);
  const auto sym = interaction_energy_slope(gaussian(32, 8.0), log2d(), cfg);
  EXPECT_TRUE(sym.symmetric_input);
  EXPECT_NEAR(sym.slope, 0.0, 1e-14);
  cfg.taus = {0.1};
  EXPECT_THROW(interaction_energy_slope(gaussian(16, 4.0), log2d(), cfg), ConfigError);
}

TEST(InteractionDecay, RasterizedPathForOtherKernels) {
  SteinerConfig cfg;
  cfg.levels = 32;
  cfg.taus = {0.0, 0.5, 1.0};
  const auto bump = custom_kernel(
      "gauss", 2, [](double r) { return -std::exp(-r * r); }, [](double r) { return 2.0 * r * std::exp(-r * r); });
  const auto rep = interaction_energy_slope(two_bumps(32), bump, cfg, 1e-3);
  EXPECT_LT(rep.slope, 0.0);
}

TEST(Stationarity, TwoBumpsDecreaseLinearly) {
  SteinerConfig cfg;
  cfg.levels = 64;
  const auto rep = stationarity_contradiction_test(two_bumps(), log2d(), 2.0, cfg);
  ASSERT_EQ(rep.taus.size(), 11u);
  EXPECT_GT(rep.delta0, 0.0);
  EXPECT_LT(rep.c1, -3.0 * rep.sigma_c1);
  EXPECT_LT(rep.c1, 0.0);
}

TEST(Stationarity, SteadyStateIsQuadraticDominated) {
  const auto p = solve_radial_steady(2.0, 1.0, log2d(), {1024, 8.0});
  SteinerConfig cfg;
  cfg.levels = 32;
  cfg.h0 = 0.1 * p.rho.max();
  cfg.hyperplane = 0.25 * p.support_radius;
  const auto rep = stationarity_contradiction_test(p.rho, Density2D::centered(32, 8.0), log2d(), 2.0, cfg);
  EXPECT_GT(rep.c2, 0.0);
  EXPECT_LE(std::abs(rep.c1), 1e-3 * std::abs(rep.c2) * rep.taus.back());
}

TEST(Stationarity, RadialQuantizationUsesExactChords) {
  const auto p = solve_radial_steady(2.0, 1.0, log2d(), {1024, 8.0});
  const auto geometry = Density2D::centered(64, 8.0);
  const auto q = quantize_levels(p.rho, geometry, 128);
  EXPECT_NEAR(quantized_mass(q), 1.0, 5e-3);
  for (const auto& line : q.lines) {
    std::vector<double> ends;
    for (const auto& set : line)
      for (const auto& iv : set.intervals()) {
        EXPECT_NEAR(iv.center, 0.0, 1e-12);
        ends.push_back(iv.right());
      }
    std::sort(ends.begin(), ends.end());
    EXPECT_EQ(std::adjacent_find(ends.begin(), ends.end()), ends.end());
  }
}

}  // namespace
}  // namespace aggdiff
