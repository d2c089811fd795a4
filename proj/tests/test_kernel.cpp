#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "aggdiff/kernel.hpp"

namespace aggdiff {
namespace {

TEST(Kernel, Log2dClassifiedAsK5NotK6) {
  const auto rep = audit_assumptions(log2d());
  for (int i = 1; i <= 5; ++i) EXPECT_TRUE(rep[i].satisfied) << "K" << i << ": " << rep[i].note;
  EXPECT_FALSE(rep[6].satisfied);
  EXPECT_NEAR(rep[2].constant, 0.5 / std::numbers::pi, 1e-12);
}

TEST(Kernel, Newtonian3dSatisfiesK6WithAlphaOne) {
  const auto rep = audit_assumptions(newtonian(3));
  for (int i = 1; i <= 4; ++i) EXPECT_TRUE(rep[i].satisfied) << "K" << i;
  EXPECT_FALSE(rep[5].satisfied);
  EXPECT_TRUE(rep[6].satisfied);
  EXPECT_NEAR(rep.k6_alpha, 1.0, 1e-6);
  EXPECT_NEAR(rep.k6_limit, 1.0 / (4.0 * std::numbers::pi), 1e-9);
}

TEST(Kernel, NewtonianHigherDimensionAlpha) {
  const auto rep = audit_assumptions(newtonian(4));
  EXPECT_TRUE(rep[6].satisfied);
  EXPECT_NEAR(rep.k6_alpha, 2.0, 1e-6);
}

TEST(Kernel, NormalizationViolationReported) {
  auto k = custom_kernel("inv", 2, [](double r) { return -1.0 / r; }, [](double r) { return 1.0 / (r * r); });
  const auto rep = audit_assumptions(k);
  EXPECT_FALSE(rep[1].satisfied);
  ASSERT_TRUE(rep[1].witness_radius.has_value());
  EXPECT_EQ(*rep[1].witness_radius, 1.0);
  EXPECT_NE(rep[1].note.find("normalization"), std::string::npos);
}

TEST(Kernel, TooSingularKernelFailsK2) {
  // omega' = r^{-2} in 2D is more singular than the Newtonian kernel.
  auto k = custom_kernel("sing", 2, [](double r) { return 1.0 - 1.0 / r; }, [](double r) { return 1.0 / (r * r); });
  const auto rep = audit_assumptions(k);
  EXPECT_TRUE(rep[1].satisfied);
  EXPECT_FALSE(rep[2].satisfied);
}

TEST(Kernel, NonFiniteValueNamesRadius) {
  auto k = custom_kernel("bad", 2, [](double r) { return r > 10.0 ? NAN : std::log(r); },
                         [](double r) { return 1.0 / r; });
  try {
    audit_assumptions(k);
    FAIL() << "expected EvaluationError";
  } catch (const EvaluationError& e) {
    EXPECT_GT(e.radius(), 10.0);
  }
}

TEST(Kernel, ProbeGridPreconditions) {
  EXPECT_THROW(audit_assumptions(log2d(), {}), DomainError);
  EXPECT_THROW(audit_assumptions(log2d(), {1e-3, 1.0, 1e4}), DomainError);
  EXPECT_THROW(audit_assumptions(log2d(), {0.0, 1e-4, 1e4}), DomainError);
}

TEST(Kernel, PhiProfile) {
  EXPECT_DOUBLE_EQ(phi(3, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(phi(2, std::exp(1.0)), -1.0);
  EXPECT_DOUBLE_EQ(phi(1, 3.0), 2.0);
}

TEST(Kernel, OriginCellAverageMatchesQuadrature) {
  // Closed form for the log kernel against the generic polar quadrature.
  const auto k = log2d();
  auto generic = custom_kernel("log", 2, k.omega, k.omega_prime);
  for (double dx : {0.01, 0.3, 2.0}) EXPECT_NEAR(k.origin_cell_average(dx), generic.origin_cell_average(dx), 1e-8);
}

TEST(Kernel, RegularizedSourceHasUnitMass) {
  RegularizedLogKernel k(0.1);
  // int J_eps dx = 2 pi int_0^inf J(r) r dr; substitute r = eps tan(t).
  const auto& gl = gauss_legendre(64);
  const double total = 2 * std::numbers::pi * gl.integrate([&](double t) {
    const double r = k.epsilon * std::tan(t);
    const double dr = k.epsilon / (std::cos(t) * std::cos(t));
    return k.source(r) * r * dr;
  }, 0.0, 0.5 * std::numbers::pi);
  EXPECT_NEAR(total, 1.0, 1e-10);
  for (double r : {0.0, 0.05, 1.0, 100.0}) EXPECT_GE(k.source(r), 0.0);
}

TEST(Kernel, RegularizedConvergesToLog) {
  // |N_eps(x) - N(x)| <= eps^2 / (4 pi |x|^2)
  for (double eps : {0.5, 0.1, 0.01}) {
    RegularizedLogKernel k(eps);
    for (double r : log_probe_grid(1e-2, 1e2, 5)) {
      const double exact = -0.5 / std::numbers::pi * std::log(r);
      EXPECT_LE(std::abs(k.potential(r) - exact), eps * eps / (4 * std::numbers::pi * r * r) * (1 + 1e-12));
    }
  }
}

TEST(Kernel, RegularizedKernelNormalizedAndAttractive) {
  auto k = RegularizedLogKernel(0.2).as_kernel();
  EXPECT_NEAR(k.omega(1.0), 0.0, 1e-15);
  const auto rep = audit_assumptions(k);
  EXPECT_TRUE(rep[1].satisfied);
  EXPECT_TRUE(rep[5].satisfied);
}

TEST(Kernel, TableKernelInterpolatesLinearly) {
  const std::string path = ::testing::TempDir() + "kernel_table.txt";
  {
    std::ofstream out(path);
    out << "# r omega omega'\n0.5,-1,2\n1,0,2\n2 2 2\n";
  }
  const auto k = load_table_kernel(path, 2);
  EXPECT_DOUBLE_EQ(k.omega(0.75), -0.5);
  EXPECT_DOUBLE_EQ(k.omega(1.5), 1.0);
  EXPECT_DOUBLE_EQ(k.omega(3.0), 4.0);
  EXPECT_DOUBLE_EQ(k.omega_prime(1.2), 2.0);
  EXPECT_THROW(table_kernel({{1.0, 0, 1}, {0.5, 0, 1}}, 2), ConfigError);
}

}  // namespace
}  // namespace aggdiff
