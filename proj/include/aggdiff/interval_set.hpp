#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "aggdiff/error.hpp"

namespace aggdiff {

/// Open interval (center - radius, center + radius).
struct Interval {
  double center = 0.0;
  double radius = 0.0;

  double left() const { return center - radius; }
  double right() const { return center + radius; }
  double length() const { return 2.0 * radius; }

  static Interval from_endpoints(double l, double r) { return {0.5 * (l + r), 0.5 * (r - l)}; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/**
 * Finite union of pairwise disjoint open intervals, sorted by left endpoint.
 *
 * No two members share an endpoint: touching or overlapping inputs are merged
 * on construction, so a set is always in canonical form.
 */
class IntervalSet {
 public:
  IntervalSet() = default;

  /// Canonicalizes an arbitrary list of intervals (sort, merge overlaps and
  /// shared endpoints). Throws DomainError on a non-positive radius.
  static IntervalSet normalize(std::vector<Interval> raw) {
    for (const auto& iv : raw) {
      if (!(iv.radius > 0.0) || !std::isfinite(iv.center) || !std::isfinite(iv.radius))
        throw DomainError("interval radius must be positive and finite");
    }
    std::sort(raw.begin(), raw.end(), [](const Interval& a, const Interval& b) { return a.left() < b.left(); });
    IntervalSet out;
    for (const auto& iv : raw) {
      if (!out.iv_.empty() && iv.left() <= out.iv_.back().right()) {
        auto& last = out.iv_.back();
        if (iv.right() > last.right()) last = Interval::from_endpoints(last.left(), iv.right());
      } else {
        out.iv_.push_back(iv);
      }
    }
    return out;
  }

  /// Builds from endpoint pairs (l, r) with l < r.
  static IntervalSet from_endpoints(const std::vector<std::pair<double, double>>& ends) {
    std::vector<Interval> raw;
    raw.reserve(ends.size());
    for (auto [l, r] : ends) raw.push_back(Interval::from_endpoints(l, r));
    return normalize(std::move(raw));
  }

  const std::vector<Interval>& intervals() const { return iv_; }
  std::size_t size() const { return iv_.size(); }
  bool empty() const { return iv_.empty(); }

  double measure() const {
    double m = 0.0;
    for (const auto& iv : iv_) m += iv.length();
    return m;
  }

  bool contains(double x) const {
    auto it = std::upper_bound(iv_.begin(), iv_.end(), x, [](double v, const Interval& iv) { return v < iv.right(); });
    return it != iv_.end() && it->left() < x;
  }

  friend bool operator==(const IntervalSet&, const IntervalSet&) = default;

 private:
  friend IntervalSet advance(IntervalSet set, double tau);
  std::vector<Interval> iv_;
};

inline IntervalSet normalize(std::vector<Interval> raw) { return IntervalSet::normalize(std::move(raw)); }

inline double measure(const IntervalSet& set) { return set.measure(); }

namespace detail {

inline double sgn(double c) { return c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0); }

// Velocity of an interval's center under M^tau: unit speed toward 0.
inline double center_velocity(const Interval& iv) { return -sgn(iv.center); }

// Merges neighbours whose gap is within rounding of zero.
inline void merge_touching(std::vector<Interval>& iv) {
  double scale = 0.0;
  for (const auto& i : iv) scale = std::max(scale, std::abs(i.left()) + std::abs(i.right()));
  const double tol = 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + scale);
  std::vector<Interval> merged;
  merged.reserve(iv.size());
  for (const auto& i : iv) {
    if (!merged.empty() && i.left() - merged.back().right() <= tol) {
      merged.back() = Interval::from_endpoints(merged.back().left(), std::max(i.right(), merged.back().right()));
    } else {
      merged.push_back(i);
    }
  }
  iv = std::move(merged);
}

}  // namespace detail

/// Smallest tau > 0 at which an interval center reaches 0 or two neighbours
/// touch, given the current velocities. Empty when nothing moves.
inline std::optional<double> next_event(const IntervalSet& set) {
  const auto& iv = set.intervals();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& i : iv) {
    if (i.center != 0.0) best = std::min(best, std::abs(i.center));
  }
  for (std::size_t k = 0; k + 1 < iv.size(); ++k) {
    const double closing = detail::center_velocity(iv[k]) - detail::center_velocity(iv[k + 1]);
    if (closing > 0.0) {
      const double gap = iv[k + 1].left() - iv[k].right();
      best = std::min(best, std::max(gap, 0.0) / closing);
    }
  }
  if (!std::isfinite(best)) return std::nullopt;
  return best;
}

/**
 * Continuous Steiner symmetrization M^tau of a finite union of intervals.
 *
 * Event driven: between events every center moves toward 0 at unit speed
 * (intervals centered at 0 stay put); at an event, centers that reached 0 are
 * pinned first, then touching neighbours are merged, and integration resumes.
 * Neighbours left within rounding of each other at the final time are merged
 * as well.
 */
inline IntervalSet advance(IntervalSet set, double tau) {
  if (!(tau >= 0.0)) throw DomainError("advance: tau must be >= 0");
  auto& iv = set.iv_;
  double remaining = tau;
  while (remaining > 0.0) {
    const auto ev = next_event(set);
    if (!ev) break;
    const double step = std::min(*ev, remaining);
    const bool at_event = *ev <= remaining;
    for (auto& i : iv) {
      if (i.center == 0.0) continue;
      if (std::abs(i.center) <= step) {
        i.center = 0.0;
      } else {
        i.center -= step * detail::sgn(i.center);
      }
    }
    remaining -= step;
    if (at_event || remaining <= 0.0) detail::merge_touching(iv);
  }
  return set;
}

/// Every interval shifted by `offset`.
inline IntervalSet translated(const IntervalSet& set, double offset) {
  std::vector<Interval> raw(set.intervals());
  for (auto& i : raw) i.center += offset;
  return IntervalSet::normalize(std::move(raw));
}

/// M^tau with respect to the point `origin` instead of 0.
inline IntervalSet advance_about(const IntervalSet& set, double tau, double origin) {
  if (origin == 0.0) return advance(set, tau);
  return translated(advance(translated(set, -origin), tau), origin);
}

/// Writes one `center,radius` row per interval.
inline void write_csv(std::ostream& os, const IntervalSet& set) {
  os.precision(17);
  for (const auto& i : set.intervals()) os << i.center << ',' << i.radius << '\n';
}

inline IntervalSet read_interval_csv(std::istream& is) {
  std::vector<Interval> raw;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Interval iv;
    if (ls >> iv.center >> iv.radius) raw.push_back(iv);
  }
  return IntervalSet::normalize(std::move(raw));
}

}  // namespace aggdiff
