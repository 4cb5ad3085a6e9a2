#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace uavtraj {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

inline double horizontal_distance(const Vec3& a, const Vec3& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Closed axis-aligned box.
struct Box {
  Vec3 lo;
  Vec3 hi;

  bool contains_strictly(const Vec3& p) const {
    return p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y && p.z > lo.z && p.z < hi.z;
  }
};

/// Parametric overlap [t_enter, t_exit] of the segment a + t (b - a), t in [0, 1],
/// with a closed box (slab method). Empty overlap gives t_enter > t_exit.
struct SegmentOverlap {
  double t_enter;
  double t_exit;
  bool empty() const { return t_enter > t_exit; }
};

inline SegmentOverlap clip_segment(const Vec3& a, const Vec3& b, const Box& box) {
  double t0 = 0.0;
  double t1 = 1.0;
  const Vec3 d = b - a;
  for (int axis = 0; axis < 3; ++axis) {
    const double origin = a[axis];
    const double dir = d[axis];
    const double lo = box.lo[axis];
    const double hi = box.hi[axis];
    if (dir == 0.0) {
      if (origin < lo || origin > hi) return {1.0, 0.0};
      continue;
    }
    double ta = (lo - origin) / dir;
    double tb = (hi - origin) / dir;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return {1.0, 0.0};
  }
  return {t0, t1};
}

/// True when the segment passes through the box over a parameter interval
/// longer than `min_overlap`. Grazing contacts (faces, edges, corners) do not
/// count as blocking.
inline bool segment_crosses_box(const Vec3& a, const Vec3& b, const Box& box,
                                double min_overlap = 1e-12) {
  const SegmentOverlap o = clip_segment(a, b, box);
  if (o.empty() || o.t_exit - o.t_enter <= min_overlap) return false;
  // A positive-length overlap that lies on a face is still a graze: check the midpoint.
  const double tm = 0.5 * (o.t_enter + o.t_exit);
  return box.contains_strictly(a + (b - a) * tm);
}

}  // namespace uavtraj
