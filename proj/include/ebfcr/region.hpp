#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

namespace ebfcr {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  double length() const { return upper - lower; }
  bool contains(double v) const { return lower <= v && v <= upper; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

// Set estimate for one parameter: an optional atom {0} plus disjoint closed
// intervals. The atom carries zero length.
struct CredibleRegion {
  bool includes_zero = false;
  std::vector<Interval> intervals;
  double achieved_mass = 0.0;

  double length() const {
    return std::accumulate(intervals.begin(), intervals.end(), 0.0,
                           [](double acc, const Interval& iv) { return acc + iv.length(); });
  }

  // Closed-endpoint membership; the atom covers exactly the value 0.
  bool contains(double theta) const {
    if (theta == 0.0 && includes_zero) return true;
    return std::any_of(intervals.begin(), intervals.end(),
                       [theta](const Interval& iv) { return iv.contains(theta); });
  }

  bool contains_zero() const { return contains(0.0); }

  bool is_well_formed() const {
    for (std::size_t i = 0; i < intervals.size(); ++i) {
      if (!(intervals[i].lower <= intervals[i].upper)) return false;
      if (i > 0 && !(intervals[i - 1].upper < intervals[i].lower)) return false;
    }
    return true;
  }
};

}  // namespace ebfcr
