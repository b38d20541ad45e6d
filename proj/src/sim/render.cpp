#include <cmath>
#include <limits>
#include <numbers>

#include "sim/world.hpp"

namespace fare::sim {

namespace {

constexpr double kHeightScale = 0.8;
constexpr double kShadeScale = 0.7;
constexpr double kHaze = 0.06;        // open space beyond sensor range
constexpr double kFloorShade = 0.30;  // floor brightness at the bottom row
constexpr double kCeilingShade = 0.16;
constexpr double kRightWallTone = 0.6;

// Floor and ceiling darken toward the horizon, so a working camera never
// produces an all-black region.
double background(std::size_t row, std::size_t height) {
  double half = 0.5 * static_cast<double>(height);
  double rc = static_cast<double>(row) + 0.5;
  double f = std::abs(rc - half) / half;
  return kHaze + (rc > half ? kFloorShade : kCeilingShade) * f;
}

bool is_injected(const WorldState& w, int wall) {
  for (auto i : w.injected_walls)
    if (static_cast<int>(i) == wall) return true;
  return false;
}

}  // namespace

double column_bearing(const SimConfig& config, std::size_t col) {
  double fov = config.fov_deg * std::numbers::pi / 180.0;
  double wcols = static_cast<double>(config.image_width);
  return fov / 2 - fov * (static_cast<double>(col) + 0.5) / wcols;
}

std::vector<ColumnHit> cast_columns(const WorldState& w) {
  const SimConfig& cfg = w.config;
  std::vector<ColumnHit> hits(cfg.image_width);
  Vec2 origin = w.robot.position();
  for (std::size_t c = 0; c < cfg.image_width; ++c) {
    Vec2 dir = unit(w.robot.theta + column_bearing(cfg, c));
    ColumnHit best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w.walls.size(); ++i) {
      auto h = intersect(origin, dir, w.walls[i]);
      if (h && h->distance < best.distance && h->distance <= cfg.max_range) {
        best.distance = h->distance;
        best.wall = static_cast<int>(i);
        best.obstacle = -1;
      }
    }
    for (std::size_t i = 0; i < w.obstacles.size(); ++i) {
      auto h = intersect_circle(origin, dir, w.obstacles[i].position, w.obstacles[i].radius);
      if (h && *h < best.distance && *h <= cfg.max_range) {
        best.distance = *h;
        best.wall = -1;
        best.obstacle = static_cast<int>(i);
      }
    }
    hits[c] = best;
  }
  return hits;
}

Image render(const WorldState& w) {
  const SimConfig& cfg = w.config;
  Image img;
  img.channels = 1;
  img.height = cfg.image_height;
  img.width = cfg.image_width;
  img.pixels.assign(img.height * img.width, 0.0f);
  if (w.blackout_active) return img;
  for (std::size_t r = 0; r < img.height; ++r) {
    const float bg = static_cast<float>(background(r, img.height));
    for (std::size_t c = 0; c < img.width; ++c) img.pixels[r * img.width + c] = bg;
  }

  const double half_rows = 0.5 * static_cast<double>(img.height);
  auto hits = cast_columns(w);
  for (std::size_t c = 0; c < img.width; ++c) {
    const ColumnHit& h = hits[c];
    if (!std::isfinite(h.distance)) continue;
    double perp = std::max(1e-3, h.distance * std::cos(column_bearing(cfg, c)));
    double half = half_rows * std::min(1.0, kHeightScale / perp);
    double shade = std::min(1.0, kShadeScale / h.distance);
    const bool obstacle = h.obstacle >= 0;
    if (obstacle) shade = std::max(shade, 0.9);  // obstacles are brightly lit
    if (h.wall >= 0 && !is_injected(w, h.wall)) {
      // Faint stripes along walls give the encoder some motion cues.
      const Segment& s = w.walls[static_cast<std::size_t>(h.wall)];
      Vec2 p = w.robot.position() + unit(w.robot.theta + column_bearing(cfg, c)) * h.distance;
      double along = norm(p - s.a);
      shade *= 0.85 + 0.15 * (std::fmod(along, 1.0) < 0.5 ? 1.0 : 0.0);
      // Walls right of the route are darker, so the scene is not mirror
      // symmetric and facing back along the route looks different.
      if (w.path.lateral_offset(p) < 0.0) shade *= kRightWallTone;
    }
    double top = half_rows - half;
    double bottom = half_rows + half;
    for (std::size_t r = 0; r < img.height; ++r) {
      double rc = static_cast<double>(r) + 0.5;
      if (rc < top || rc >= bottom) continue;
      double v = shade;
      // Obstacles carry horizontal bands, a pattern walls never show.
      if (obstacle && (r / 3) % 2 == 1) v *= 0.45;
      img.pixels[r * img.width + c] = static_cast<float>(v);
    }
  }
  return img;
}

std::array<bool, 3> failure_bins(const WorldState& w) {
  if (w.blackout_active) return {true, true, true};
  std::array<bool, 3> bins{false, false, false};
  auto hits = cast_columns(w);
  const std::size_t W = w.config.image_width;
  for (std::size_t c = 0; c < W; ++c) {
    const ColumnHit& h = hits[c];
    bool failure = h.obstacle >= 0 || (h.wall >= 0 && is_injected(w, h.wall));
    if (failure) bins[std::min<std::size_t>(2, c * 3 / W)] = true;
  }
  return bins;
}

}  // namespace fare::sim
