#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "aggdiff/interval_set.hpp"

namespace aggdiff {
namespace {

void expect_same(const IntervalSet& a, const IntervalSet& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a.intervals()[i].left(), b.intervals()[i].left(), tol);
    EXPECT_NEAR(a.intervals()[i].right(), b.intervals()[i].right(), tol);
  }
}

IntervalSet random_set(std::mt19937_64& rng, int max_count = 16) {
  std::uniform_int_distribution<int> count(1, max_count);
  std::uniform_real_distribution<double> c(-10.0, 10.0), r(0.01, 1.5);
  std::vector<Interval> raw;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) raw.push_back({c(rng), r(rng)});
  return normalize(raw);
}

TEST(IntervalSet, NormalizeMergesSharedEndpoint) {
  const auto s = normalize({{0.0, 1.0}, {1.5, 0.5}});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(s.intervals()[0].center, 0.5);
  EXPECT_DOUBLE_EQ(s.intervals()[0].radius, 1.5);
}

TEST(IntervalSet, NormalizeIdentityAndNested) {
  EXPECT_EQ(normalize({{3.0, 1.0}}).intervals(), std::vector<Interval>({{3.0, 1.0}}));
  const auto s = normalize({{0.0, 1.0}, {0.5, 0.2}});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.intervals()[0], (Interval{0.0, 1.0}));
}

TEST(IntervalSet, NormalizeRejectsNonPositiveRadius) {
  EXPECT_THROW(normalize({{0.0, 0.0}}), DomainError);
  EXPECT_THROW(normalize({{0.0, -1.0}}), DomainError);
}

TEST(IntervalSet, Measure) {
  EXPECT_DOUBLE_EQ(normalize({{0.0, 1.0}}).measure(), 2.0);
  EXPECT_DOUBLE_EQ(IntervalSet{}.measure(), 0.0);
}

TEST(IntervalSet, NextEvent) {
  EXPECT_DOUBLE_EQ(*next_event(normalize({{-2.0, 0.5}, {3.0, 0.5}})), 2.0);
  EXPECT_FALSE(next_event(normalize({{0.0, 1.0}})).has_value());
  EXPECT_DOUBLE_EQ(*next_event(normalize({{3.0, 1.0}})), 3.0);
  EXPECT_FALSE(next_event(IntervalSet{}).has_value());
}

TEST(IntervalSet, AdvanceSingleInterval) {
  expect_same(advance(normalize({{3.0, 1.0}}), 1.0), normalize({{2.0, 1.0}}), 0.0);
  expect_same(advance(normalize({{3.0, 1.0}}), 5.0), normalize({{0.0, 1.0}}), 0.0);
  expect_same(advance(normalize({{-3.0, 1.0}}), 1.0), normalize({{-2.0, 1.0}}), 0.0);
}

TEST(IntervalSet, AdvanceThroughMergeAndArrival) {
  const auto u = normalize({{-2.0, 0.5}, {3.0, 0.5}});
  expect_same(advance(u, 3.0), normalize({{0.0, 1.0}}), 1e-15);
  // Just after the coincident arrival/merge at tau = 2.
  expect_same(advance(u, 2.25), normalize({{0.25, 1.0}}), 1e-15);
}

TEST(IntervalSet, CoincidentEventsAreOrderIndependent) {
  // Arrival of the left interval and the merge both happen at tau = 2.
  const auto u = normalize({{-2.0, 0.5}, {3.0, 0.5}});
  const auto split = advance(advance(u, 2.0), 1.0);
  expect_same(split, advance(u, 3.0), 1e-15);
  // Same configuration but with the arrival strictly before the merge.
  const auto v = normalize({{-2.0, 0.5}, {3.0 + 1e-9, 0.5}});
  expect_same(advance(v, 3.0), advance(u, 3.0), 1e-8);
}

TEST(IntervalSet, StationaryIntervalAbsorbsMovingNeighbour) {
  const auto u = normalize({{0.0, 1.0}, {3.0, 0.5}});
  // Gap 1.5 closes at tau = 1.5 -> merged (-1, 2) = I(0.5, 1.5) then drifts to 0.
  expect_same(advance(u, 1.5), normalize({{0.5, 1.5}}), 1e-15);
  expect_same(advance(u, 10.0), normalize({{0.0, 1.5}}), 1e-15);
}

TEST(IntervalSet, PropertyMeasureAndSemigroup) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> t(0.0, 12.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto u = random_set(rng);
    const double s = t(rng), tt = t(rng);
    const auto once = advance(u, s + tt);
    const auto twice = advance(advance(u, s), tt);
    EXPECT_NEAR(once.measure(), u.measure(), 1e-12);
    expect_same(once, twice, 1e-12);
  }
}

TEST(IntervalSet, LimitIsCenteredIntervalOfEqualMeasure) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const auto u = random_set(rng);
    const auto inf = advance(u, 1e3);
    ASSERT_EQ(inf.size(), 1u);
    EXPECT_EQ(inf.intervals()[0].center, 0.0);
    EXPECT_NEAR(inf.measure(), u.measure(), 1e-12);
  }
}

TEST(IntervalSet, CsvRoundTrip) {
  const auto u = normalize({{-2.0, 0.5}, {3.0, 0.25}});
  std::stringstream ss;
  write_csv(ss, u);
  EXPECT_EQ(read_interval_csv(ss), u);
}

TEST(IntervalSet, Contains) {
  const auto u = normalize({{0.0, 1.0}, {5.0, 1.0}});
  EXPECT_TRUE(u.contains(0.5));
  EXPECT_FALSE(u.contains(1.0));
  EXPECT_FALSE(u.contains(2.0));
  EXPECT_TRUE(u.contains(5.9));
  EXPECT_FALSE(u.contains(-1.0));
}

}  // namespace
}  // namespace aggdiff
