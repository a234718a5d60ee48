#pragma once

#include <algorithm>
#include <cmath>

namespace ergo {

// Geometry of the unit circle [0,1) with wrap-around metric.

inline double wrap01(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0) y = 0.0;  // guard against floor rounding at exact integers
  return y;
}

// Torus distance, max value 1/2.
inline double torus_dist(double a, double b) {
  double d = std::fabs(wrap01(a) - wrap01(b));
  return std::min(d, 1.0 - d);
}

// Closed circular arc [lo, lo+len] (mod 1). len in [0,1]; len = 1 is the full circle.
struct Arc {
  double lo = 0.0;
  double len = 0.0;

  double hi() const { return wrap01(lo + len); }
  bool full() const { return len >= 1.0; }

  // Membership of point x in the closed arc.
  bool contains(double x) const {
    if (full()) return true;
    double off = wrap01(x - lo);
    return off <= len || off >= 1.0;  // off==1-eps rounds back to lo
  }

  // Whether the closed arc `inner` lies inside this closed arc.
  bool contains_arc(const Arc& inner) const {
    if (full()) return true;
    if (inner.full()) return false;
    double off = wrap01(inner.lo - lo);
    return off + inner.len <= len + 1e-15;
  }

  bool intersects(const Arc& other) const {
    if (full() || other.full()) return true;
    double off = wrap01(other.lo - lo);
    return off <= len || off >= 1.0 - other.len;
  }

  // Grow both ends by r (clamped to the full circle).
  Arc inflated(double r) const {
    if (len + 2 * r >= 1.0) return Arc{0.0, 1.0};
    return Arc{wrap01(lo - r), len + 2 * r};
  }

  // Shrink both ends by r; empty arcs are reported with len < 0 (caller checks).
  Arc deflated(double r) const {
    return Arc{wrap01(lo + r), len - 2 * r};
  }

  double midpoint() const { return wrap01(lo + len / 2); }
};

}  // namespace ergo
