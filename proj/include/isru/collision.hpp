#pragma once

// Convex collision primitives and their pairwise separation distance.
//
// Every primitive is a polytope "core" (point, segment, box) swept by a radius:
// sphere = point + r, capsule = segment + r, box = box + 0. The distance between
// two primitives is the GJK distance between their cores minus both radii, so a
// value <= 0 means the primitives touch or overlap. When cores overlap the value
// is -(ra + rb), which is a flag rather than a penetration depth.

#include "isru/errors.hpp"
#include "isru/geometry.hpp"

#include <array>
#include <limits>
#include <string>
#include <variant>

namespace isru {

struct Sphere {
  double radius = 0.0;
  bool operator==(const Sphere&) const = default;
};

/// Segment along the local z axis, length 2 * half_length, swept by radius.
struct Capsule {
  double radius = 0.0;
  double half_length = 0.0;
  bool operator==(const Capsule&) const = default;
};

struct Box {
  Vec3 half_extents = Vec3::Zero();
  bool operator==(const Box& o) const { return half_extents == o.half_extents; }
};

using Shape = std::variant<Sphere, Capsule, Box>;

/// Attachment index used for bodies fixed in the world.
inline constexpr int kWorldAttachment = -1;

struct CollisionPrimitive {
  std::string name;
  Shape shape;
  Pose local_pose;                  // relative to its link (or world)
  int attachment = kWorldAttachment;  // link index or kWorldAttachment

  bool operator==(const CollisionPrimitive& o) const {
    return name == o.name && shape == o.shape && local_pose == o.local_pose && attachment == o.attachment;
  }
};

inline void validate(const Shape& s) {
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          if (!(v.radius > 0.0)) throw BadConfig("sphere radius must be > 0");
        } else if constexpr (std::is_same_v<T, Capsule>) {
          if (!(v.radius > 0.0) || !(v.half_length > 0.0))
            throw BadConfig("capsule radius and half_length must be > 0");
        } else {
          if (!(v.half_extents.minCoeff() > 0.0)) throw BadConfig("box half extents must be > 0");
        }
      },
      s);
}

inline CollisionPrimitive make_sphere(std::string name, double r, const Pose& at,
                                      int attachment = kWorldAttachment) {
  CollisionPrimitive p{std::move(name), Sphere{r}, at, attachment};
  validate(p.shape);
  return p;
}

inline CollisionPrimitive make_capsule(std::string name, double r, double half_length,
                                       const Pose& at, int attachment = kWorldAttachment) {
  CollisionPrimitive p{std::move(name), Capsule{r, half_length}, at, attachment};
  validate(p.shape);
  return p;
}

inline CollisionPrimitive make_box(std::string name, const Vec3& half_extents, const Pose& at,
                                   int attachment = kWorldAttachment) {
  CollisionPrimitive p{std::move(name), Box{half_extents}, at, attachment};
  validate(p.shape);
  return p;
}

/// Axis-aligned bounding box in the world frame.
struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool overlaps(const Aabb& o, double margin = 0.0) const {
    return (lo.array() <= o.hi.array() + margin).all() && (o.lo.array() <= hi.array() + margin).all();
  }
};

namespace detail {

/// Polytope core of a primitive placed in the world.
struct Core {
  enum class Kind { Point, Segment, Box } kind = Kind::Point;
  Vec3 center = Vec3::Zero();
  Mat3 rot = Mat3::Identity();
  Vec3 half = Vec3::Zero();  // box half extents, or (0, 0, half_length) for segments
  double radius = 0.0;

  Vec3 support(const Vec3& d) const {
    switch (kind) {
      case Kind::Point:
        return center;
      case Kind::Segment: {
        const Vec3 axis = rot.col(2);
        return axis.dot(d) >= 0.0 ? Vec3(center + half.z() * axis) : Vec3(center - half.z() * axis);
      }
      case Kind::Box: {
        const Vec3 local = rot.transpose() * d;
        Vec3 corner;
        for (int i = 0; i < 3; ++i) corner[i] = local[i] >= 0.0 ? half[i] : -half[i];
        return center + rot * corner;
      }
    }
    return center;
  }
};

inline Core make_core(const Shape& shape, const Pose& world_pose) {
  Core c;
  c.center = world_pose.position;
  c.rot = world_pose.rotation();
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          c.kind = Core::Kind::Point;
          c.radius = s.radius;
        } else if constexpr (std::is_same_v<T, Capsule>) {
          c.kind = Core::Kind::Segment;
          c.half = Vec3(0, 0, s.half_length);
          c.radius = s.radius;
        } else {
          c.kind = Core::Kind::Box;
          c.half = s.half_extents;
        }
      },
      shape);
  return c;
}

struct Simplex {
  std::array<Vec3, 4> pts;
  int size = 0;
};

// Closest point to the origin on segment [a, b]; reduces the simplex to the support set.
inline Vec3 closest_on_segment(Simplex& s) {
  const Vec3 a = s.pts[0], b = s.pts[1];
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) {
    s.size = 1;
    return a;
  }
  const double t = -a.dot(ab) / len2;
  if (t <= 0.0) {
    s.size = 1;
    return a;
  }
  if (t >= 1.0) {
    s.pts[0] = b;
    s.size = 1;
    return b;
  }
  return a + t * ab;
}

// Closest point to the origin on triangle abc (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_on_triangle(Simplex& s) {
  const Vec3 a = s.pts[0], b = s.pts[1], c = s.pts[2];
  const Vec3 ab = b - a, ac = c - a, ap = -a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    s.size = 1;
    return a;
  }
  const Vec3 bp = -b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    s.pts[0] = b;
    s.size = 1;
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    s.pts = {a, b, Vec3::Zero(), Vec3::Zero()};
    s.size = 2;
    return a + v * ab;
  }
  const Vec3 cp = -c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    s.pts[0] = c;
    s.size = 1;
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    s.pts = {a, c, Vec3::Zero(), Vec3::Zero()};
    s.size = 2;
    return a + w * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    s.pts = {b, c, Vec3::Zero(), Vec3::Zero()};
    s.size = 2;
    return b + w * (c - b);
  }
  const double denom = va + vb + vc;
  if (!(std::abs(denom) > 0.0)) {
    // Degenerate triangle: fall back to the best edge.
    Simplex e1{{a, b}, 2}, e2{{a, c}, 2}, e3{{b, c}, 2};
    const Vec3 p1 = closest_on_segment(e1), p2 = closest_on_segment(e2), p3 = closest_on_segment(e3);
    if (p1.squaredNorm() <= p2.squaredNorm() && p1.squaredNorm() <= p3.squaredNorm()) {
      s = e1;
      return p1;
    }
    if (p2.squaredNorm() <= p3.squaredNorm()) {
      s = e2;
      return p2;
    }
    s = e3;
    return p3;
  }
  const double v = vb / denom, w = vc / denom;
  return a + ab * v + ac * w;
}

// Closest point on tetrahedron abcd; returns zero with size 4 if the origin is inside.
inline Vec3 closest_on_tetrahedron(Simplex& s) {
  const Vec3 a = s.pts[0], b = s.pts[1], c = s.pts[2], d = s.pts[3];
  const std::array<std::array<Vec3, 4>, 4> faces = {{{a, b, c, d}, {a, c, d, b}, {a, d, b, c}, {b, d, c, a}}};
  const double vol = (b - a).dot((c - a).cross(d - a));
  const double scale = (b - a).norm() * (c - a).norm() * (d - a).norm();
  const bool flat = !(std::abs(vol) > 1e-12 * scale);
  bool inside = !flat;
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_pt = Vec3::Zero();
  Simplex best_s;
  for (const auto& f : faces) {
    const Vec3 n = (f[1] - f[0]).cross(f[2] - f[0]);
    // Origin on the opposite side of this face from the fourth vertex.
    const bool outside = n.dot(-f[0]) * n.dot(f[3] - f[0]) < 0.0;
    if (!flat && !outside) continue;
    inside = false;
    Simplex fs{{f[0], f[1], f[2], Vec3::Zero()}, 3};
    const Vec3 p = closest_on_triangle(fs);
    if (p.squaredNorm() < best) {
      best = p.squaredNorm();
      best_pt = p;
      best_s = fs;
    }
  }
  if (inside) {
    s.size = 4;
    return Vec3::Zero();
  }
  s = best_s;
  return best_pt;
}

/// Euclidean distance between two cores (0 when they overlap).
inline double gjk_distance(const Core& A, const Core& B) {
  Vec3 v = A.center - B.center;
  if (v.squaredNorm() == 0.0) v = Vec3::UnitX();
  v = A.support(-v) - B.support(v);
  Simplex s;
  s.pts[0] = v;
  s.size = 1;
  for (int iter = 0; iter < 128; ++iter) {
    const double vv = v.squaredNorm();
    if (vv <= 1e-28) return 0.0;
    const Vec3 w = A.support(-v) - B.support(v);
    // |v|^2 - v.w bounds |v| * (|v| - dist): stop once the gap is at rounding level.
    if (vv - v.dot(w) <= 1e-13 * vv) return std::sqrt(vv);
    bool repeated = false;
    for (int i = 0; i < s.size; ++i) repeated = repeated || (s.pts[i] - w).squaredNorm() <= 1e-30;
    if (repeated) return std::sqrt(vv);
    s.pts[s.size++] = w;
    Vec3 next;
    switch (s.size) {
      case 2: next = closest_on_segment(s); break;
      case 3: next = closest_on_triangle(s); break;
      default: next = closest_on_tetrahedron(s); break;
    }
    if (s.size == 4) return 0.0;
    if (next.squaredNorm() >= vv) return std::sqrt(vv);  // no progress: v is optimal to rounding
    v = next;
  }
  return v.norm();
}

}  // namespace detail

/// Signed separation between two shapes in world poses: core distance minus radii.
inline double primitive_distance(const Shape& a, const Pose& pa, const Shape& b, const Pose& pb) {
  const detail::Core ca = detail::make_core(a, pa);
  const detail::Core cb = detail::make_core(b, pb);
  return detail::gjk_distance(ca, cb) - ca.radius - cb.radius;
}

inline bool primitives_intersect(const Shape& a, const Pose& pa, const Shape& b, const Pose& pb) {
  return primitive_distance(a, pa, b, pb) <= 0.0;
}

inline Aabb bounding_box(const Shape& shape, const Pose& world_pose) {
  const detail::Core c = detail::make_core(shape, world_pose);
  Aabb box;
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    box.hi[i] = c.support(e)[i] + c.radius;
    box.lo[i] = c.support(-e)[i] - c.radius;
  }
  return box;
}

/// World-frame pose of a world-attached primitive.
inline Pose world_pose_of(const CollisionPrimitive& p) { return p.local_pose; }

}  // namespace isru
