#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "aggdiff/energy.hpp"

namespace aggdiff {
namespace {

TEST(Energy, InteractionMatchesDirectDoubleSum) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Density2D rho(8, 8, 0.25, -1.0, -1.0);
  for (auto& v : rho.mutable_values()) v = u(rng);
  const auto k = log2d();
  const auto e = free_energy(rho, k, 2.0);
  double direct = 0.0, s = 0.0;
  for (std::size_t a = 0; a < 64; ++a) {
    s += rho.values()[a] * rho.values()[a];
    for (std::size_t b = 0; b < 64; ++b) {
      const long di = static_cast<long>(a % 8) - static_cast<long>(b % 8);
      const long dj = static_cast<long>(a / 8) - static_cast<long>(b / 8);
      direct += rho.values()[a] * rho.values()[b] * grid_kernel_weight(k, 0.25, di, dj);
    }
  }
  direct *= 0.5 * rho.cell_measure();
  EXPECT_NEAR(e.interaction, direct, 1e-12 * std::abs(direct) + 1e-14);
  EXPECT_NEAR(e.entropy, s * rho.cell_measure(), 1e-12);
  EXPECT_DOUBLE_EQ(e.total, e.entropy + e.interaction);
}

TEST(Energy, TranslationByWholeCells) {
  Density2D a = Density2D::centered(64, 8.0), b = a.zeros_like();
  a.fill([](double x, double y) { return std::exp(-2.0 * ((x + 0.5) * (x + 0.5) + y * y)); });
  b.fill([](double x, double y) { return std::exp(-2.0 * ((x - 0.5) * (x - 0.5) + (y - 0.25) * (y - 0.25))); });
  const auto k = log2d();
  const auto ea = free_energy(a, k, 1.5), eb = free_energy(b, k, 1.5);
  EXPECT_NEAR(ea.total, eb.total, 1e-12);
}

TEST(Energy, LogKernelScaling) {
  // rho_l(x) = l^2 rho(l x) on the grid of spacing dx / l carries the same
  // cell values times l^2.
  const double l = 2.0, m = 2.0;
  Density2D a(32, 32, 0.2, -3.2, -3.2), b(32, 32, 0.1, -1.6, -1.6);
  a.fill([](double x, double y) { return std::exp(-(x * x + 0.5 * y * y)); });
  auto& bv = b.mutable_values();
  for (std::size_t k = 0; k < bv.size(); ++k) bv[k] = l * l * a.values()[k];
  const auto ea = free_energy(a, log2d(), m), eb = free_energy(b, log2d(), m);
  const double mass = a.mass();
  EXPECT_NEAR(b.mass(), mass, 1e-12);
  EXPECT_NEAR(eb.entropy, std::pow(l, 2.0 * (m - 1.0)) * ea.entropy, 1e-12);
  EXPECT_NEAR(eb.interaction, ea.interaction - mass * mass * std::log(l) / (4.0 * std::numbers::pi), 1e-12);
}

TEST(Energy, RadialAgreesWithGrid) {
  const auto k = log2d();
  Density2D g = Density2D::centered(160, 8.0);
  g.fill([](double x, double y) { return std::exp(-(x * x + y * y)); });
  RadialDensity r(2, 0.005, 1000);
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double a = r.inner(i), b = r.outer(i);
    r[i] = (std::exp(-a * a) - std::exp(-b * b)) / (b * b - a * a);
  }
  const auto eg = free_energy(g, k, 2.0), er = free_energy(r, k, 2.0);
  EXPECT_NEAR(eg.entropy, er.entropy, 1e-4);
  EXPECT_NEAR(eg.interaction, er.interaction, 1e-4);
}

TEST(Energy, ZeroDensityAndExponentCheck) {
  const Density2D zero = Density2D::centered(16, 2.0);
  const auto e = free_energy(zero, log2d(), 2.0);
  EXPECT_EQ(e.total, 0.0);
  for (double h : h_field(zero, log2d(), 2.0)) EXPECT_EQ(h, 0.0);
  EXPECT_THROW(free_energy(zero, log2d(), 1.0), ConfigError);
  EXPECT_THROW(free_energy(zero, log2d(), 0.5), ConfigError);
}

TEST(Energy, ShiftCorrection) {
  Density2D rho = Density2D::centered(16, 2.0);
  rho.fill([](double, double) { return 0.25; });
  const auto k = newtonian(3);
  RadialDensity ball(3, 0.01, 100);
  for (std::size_t i = 0; i < 100; ++i) ball[i] = 1.0;
  const auto e = free_energy(ball, k, 2.0);
  EXPECT_NEAR(e.shift_correction, 0.5 * ball.mass() * ball.mass() * k.shift, 1e-14);
}

TEST(Dissipation, LinearFieldGivesInteriorMass) {
  Density2D rho = Density2D::centered(20, 2.0);
  rho.fill([](double x, double y) { return 1.0 + x * x + y; });
  std::vector<double> h(rho.size());
  for (std::size_t j = 0; j < 20; ++j)
    for (std::size_t i = 0; i < 20; ++i) h[j * 20 + i] = 3.0 * rho.x(i) - 4.0 * rho.y(j);
  double interior = 0.0;
  for (std::size_t j = 1; j < 19; ++j)
    for (std::size_t i = 1; i < 19; ++i) interior += rho(i, j);
  EXPECT_NEAR(dissipation(rho, h), 25.0 * interior * rho.cell_measure(), 1e-10);
}

TEST(Dissipation, HFieldDefinition) {
  Density2D rho = Density2D::centered(16, 4.0);
  rho.fill([](double x, double y) { return std::exp(-(x * x + y * y)); });
  const auto psi = potential(rho, log2d());
  const auto h = h_field(rho, psi, 3.0);
  for (std::size_t k = 0; k < h.size(); ++k)
    EXPECT_NEAR(h[k], 1.5 * std::pow(rho.values()[k], 2.0) + psi[k], 1e-14);
}

}  // namespace
}  // namespace aggdiff
