#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

namespace fare::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
inline Vec2 left_normal(Vec2 t) { return {-t.y, t.x}; }

inline Vec2 normalized(Vec2 a) {
  double n = norm(a);
  return n > 0 ? a * (1.0 / n) : Vec2{1.0, 0.0};
}

inline double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2 * std::numbers::pi;
  return a;
}

struct Segment {
  Vec2 a;
  Vec2 b;
  bool operator==(const Segment&) const = default;
};

inline Vec2 closest_point(const Segment& s, Vec2 p) {
  Vec2 d = s.b - s.a;
  double len2 = dot(d, d);
  double t = len2 > 0 ? std::clamp(dot(p - s.a, d) / len2, 0.0, 1.0) : 0.0;
  return s.a + d * t;
}

inline double distance(const Segment& s, Vec2 p) { return norm(p - closest_point(s, p)); }

struct RayHit {
  double distance;
  double along;  // distance from the segment start to the hit point
};

/// First intersection of the ray origin + t·dir (t ≥ 0, |dir| = 1) with a segment.
inline std::optional<RayHit> intersect(Vec2 origin, Vec2 dir, const Segment& s) {
  Vec2 e = s.b - s.a;
  double denom = cross(dir, e);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  Vec2 w = s.a - origin;
  double t = cross(w, e) / denom;
  double u = cross(w, dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return RayHit{t, u * norm(e)};
}

/// First intersection of a ray with a circle; nullopt when missed or when the origin is inside.
inline std::optional<double> intersect_circle(Vec2 origin, Vec2 dir, Vec2 center, double radius) {
  Vec2 oc = origin - center;
  double b = dot(oc, dir);
  double c = dot(oc, oc) - radius * radius;
  if (c < 0.0) return 0.0;
  double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  double t = -b - std::sqrt(disc);
  if (t < 0.0) return std::nullopt;
  return t;
}

}  // namespace fare::sim
