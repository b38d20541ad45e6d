#include "sim/world.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace fare::sim {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct LayoutParams {
  double half_width;
  double max_turn_deg;
  double min_segment, max_segment;
  int clutter_shape;  // 0 none, 4 square pillars, 8 octagonal trees
  double clutter_spacing;
  double clutter_radius;
};

LayoutParams params_for(Layout layout) {
  switch (layout) {
    case Layout::corridor: return {1.6, 35.0, 4.0, 7.0, 0, 0.0, 0.0};
    case Layout::plaza: return {2.6, 25.0, 5.0, 8.0, 4, 3.5, 0.28};
    case Layout::park: return {2.2, 40.0, 4.0, 7.0, 8, 3.0, 0.3};
  }
  return {1.6, 35.0, 4.0, 7.0, 0, 0.0, 0.0};
}

std::vector<Vec2> offset_polyline(const std::vector<Vec2>& pts, double offset) {
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Vec2 n;
    if (i == 0) {
      n = left_normal(normalized(pts[1] - pts[0]));
    } else if (i + 1 == pts.size()) {
      n = left_normal(normalized(pts[i] - pts[i - 1]));
    } else {
      Vec2 n0 = left_normal(normalized(pts[i] - pts[i - 1]));
      Vec2 n1 = left_normal(normalized(pts[i + 1] - pts[i]));
      Vec2 m = normalized(n0 + n1);
      n = m * (1.0 / std::max(0.3, dot(m, n0)));  // miter join
    }
    out.push_back(pts[i] + n * offset);
  }
  return out;
}

void add_polyline(std::vector<Segment>& walls, const std::vector<Vec2>& pts) {
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) walls.push_back({pts[i], pts[i + 1]});
}

void add_polygon(std::vector<Segment>& walls, Vec2 center, double radius, int sides, double phase) {
  for (int k = 0; k < sides; ++k) {
    Vec2 a = center + unit(phase + 2 * std::numbers::pi * k / sides) * radius;
    Vec2 b = center + unit(phase + 2 * std::numbers::pi * (k + 1) / sides) * radius;
    walls.push_back({a, b});
  }
}

double path_distance(const Path& path, Vec2 p) { return norm(p - path.point_at(path.project(p))); }

std::size_t add_injected(WorldState& w, Segment s) {
  w.walls.push_back(s);
  w.injected_walls.push_back(w.walls.size() - 1);
  return w.walls.size() - 1;
}

void validate(const FailureSpec& spec) {
  if (spec.trigger_step < 0) throw Error(Errc::invalid_argument, "failure trigger_step must be >= 0");
  if (!(spec.barrier_distance > 0.0) || !(spec.gap_width > 0.0) || !(spec.pocket_half_width > 0.0) ||
      !(spec.obstacle_distance > 0.0) || !(spec.obstacle_radius > 0.0) || spec.obstacle_move_steps < 1 ||
      spec.obstacle_pause_steps < 0) {
    throw Error(Errc::invalid_argument, "invalid failure parameters");
  }
}

void apply_failure(WorldState& w, const FailureSpec& spec) {
  const SimConfig& cfg = w.config;
  Vec2 pos = w.robot.position();
  double s_robot = w.path.project(pos);
  switch (spec.kind) {
    case FailureKind::blackout:
      w.blackout_active = true;
      break;

    case FailureKind::blocked_local_minima:
    case FailureKind::blocked_dead_end: {
      double s_bar = std::min(s_robot + spec.barrier_distance, w.path.length());
      Vec2 p = w.path.point_at(s_bar);
      Vec2 n = left_normal(w.path.tangent_at(s_bar));
      double reach = w.half_width + 0.6;
      if (spec.kind == FailureKind::blocked_dead_end) {
        add_injected(w, {p - n * reach, p + n * reach});
        Vec2 t = w.path.tangent_at(s_robot);
        Vec2 nr = left_normal(t);
        Vec2 base = w.path.point_at(s_robot);
        double lat = dot(pos - base, nr);
        double back = -spec.pocket_depth;
        double front = dot(p - base, t) + 0.3;
        for (double sign : {1.0, -1.0}) {
          Vec2 off = nr * (lat + sign * spec.pocket_half_width);
          add_injected(w, {base + t * back + off, base + t * front + off});
        }
      } else {
        // Attached to the `side` wall, leaving gap_width free at the other wall.
        double g = spec.side == Side::right ? 1.0 : -1.0;  // direction of the gap
        if (spec.side == Side::front) g = 1.0;
        add_injected(w, {p - n * (g * reach), p + n * (g * (w.half_width - spec.gap_width))});
      }
      break;
    }

    case FailureKind::dynamic_obstacle: {
      double bearing = spec.side == Side::left    ? spec.obstacle_bearing_deg * kDeg
                       : spec.side == Side::right ? -spec.obstacle_bearing_deg * kDeg
                                                  : 0.0;
      // A pedestrian steps into the robot's way from the approach side and
      // then stands there, partly blocking the lane.
      const double lateral = spec.side == Side::left ? 1.0 : spec.side == Side::right ? -1.0 : 0.0;
      const Vec2 heading = unit(w.robot.theta);
      const Vec2 stand = pos + heading * spec.obstacle_ahead + left_normal(heading) * (lateral * spec.obstacle_offset);
      DynamicObstacle ob;
      ob.radius = spec.obstacle_radius;
      ob.position = pos + unit(w.robot.theta + bearing) * spec.obstacle_distance;
      const double walk = static_cast<double>(spec.obstacle_move_steps) * cfg.dt;
      ob.velocity = (stand - ob.position) * (1.0 / walk);
      ob.move_steps = spec.obstacle_move_steps;
      ob.pause_steps = spec.obstacle_pause_steps;
      w.obstacles.push_back(ob);
      break;
    }
  }
  w.applied_failures.push_back(spec);
}

void apply_due_failures(WorldState& w) {
  for (auto it = w.pending_failures.begin(); it != w.pending_failures.end();) {
    if (it->trigger_step <= w.step_index) {
      FailureSpec spec = *it;
      it = w.pending_failures.erase(it);
      apply_failure(w, spec);
    } else {
      ++it;
    }
  }
}

double obstacle_clearance(const WorldState& w, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& ob : w.obstacles) best = std::min(best, norm(p - ob.position) - ob.radius);
  return best;
}

double clearance(const WorldState& w, Vec2 p) { return std::min(wall_clearance(w, p), obstacle_clearance(w, p)); }

// Largest fraction of `delta` that keeps the robot free, by bisection.
double free_fraction(const WorldState& w, Vec2 from, Vec2 delta) {
  if (position_free(w, from + delta)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 30; ++it) {
    double mid = 0.5 * (lo + hi);
    if (position_free(w, from + delta * mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

Vec2 contact_normal(const WorldState& w, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 normal{0, 0};
  for (const auto& s : w.walls) {
    Vec2 c = closest_point(s, p);
    double d = norm(p - c);
    if (d < best) {
      best = d;
      normal = normalized(p - c);
    }
  }
  for (const auto& ob : w.obstacles) {
    double d = norm(p - ob.position) - ob.radius;
    if (d < best) {
      best = d;
      normal = normalized(p - ob.position);
    }
  }
  return normal;
}

Vec2 move_robot(const WorldState& w, Vec2 from, Vec2 delta) {
  if (norm(delta) == 0.0) return from;
  if (!position_free(w, from)) {
    // Already in contact (e.g. an obstacle stepped into the robot): only accept moves that back off.
    return clearance(w, from + delta) >= clearance(w, from) ? from + delta : from;
  }
  double f = free_fraction(w, from, delta);
  Vec2 p = from + delta * f;
  if (f >= 1.0) return p;
  Vec2 rest = delta * (1.0 - f);
  Vec2 n = contact_normal(w, p);
  double into = dot(rest, n);
  if (into < 0.0) {
    Vec2 slide = rest - n * into;
    p = p + slide * free_fraction(w, p, slide);
  }
  return p;
}

}  // namespace

const char* layout_name(Layout layout) {
  switch (layout) {
    case Layout::corridor: return "corridor";
    case Layout::plaza: return "plaza";
    case Layout::park: return "park";
  }
  return "?";
}

Layout parse_layout(const std::string& name) {
  if (name == "corridor") return Layout::corridor;
  if (name == "plaza") return Layout::plaza;
  if (name == "park") return Layout::park;
  throw Error(Errc::invalid_argument, "unknown layout '" + name + "'");
}

const char* failure_name(FailureKind kind) {
  switch (kind) {
    case FailureKind::blackout: return "blackout";
    case FailureKind::blocked_local_minima: return "blocked_local_minima";
    case FailureKind::blocked_dead_end: return "blocked_dead_end";
    case FailureKind::dynamic_obstacle: return "dynamic_obstacle";
  }
  return "?";
}

FailureKind parse_failure(const std::string& name) {
  for (auto k : {FailureKind::blackout, FailureKind::blocked_local_minima, FailureKind::blocked_dead_end,
                 FailureKind::dynamic_obstacle}) {
    if (name == failure_name(k)) return k;
  }
  throw Error(Errc::invalid_argument, "unknown failure kind '" + name + "'");
}

const char* side_name(Side side) {
  switch (side) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::front: return "front";
  }
  return "?";
}

// ---------------------------------------------------------------- Path

Path::Path(std::vector<Vec2> waypoints) : points_(std::move(waypoints)) {
  if (points_.size() < 2) throw Error(Errc::invalid_argument, "path needs at least two waypoints");
  cum_.assign(points_.size(), 0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) cum_[i] = cum_[i - 1] + norm(points_[i] - points_[i - 1]);
}

std::size_t Path::segment_at(double s) const {
  std::size_t i = 0;
  while (i + 2 < points_.size() && s > cum_[i + 1]) ++i;
  return i;
}

Vec2 Path::point_at(double s) const {
  s = std::clamp(s, 0.0, length());
  std::size_t i = segment_at(s);
  double seg = cum_[i + 1] - cum_[i];
  double t = seg > 0 ? (s - cum_[i]) / seg : 0.0;
  return points_[i] + (points_[i + 1] - points_[i]) * t;
}

Vec2 Path::tangent_at(double s) const {
  std::size_t i = segment_at(std::clamp(s, 0.0, length()));
  return normalized(points_[i + 1] - points_[i]);
}

double Path::project(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    Segment seg{points_[i], points_[i + 1]};
    Vec2 c = closest_point(seg, p);
    double d = norm(p - c);
    if (d < best - 1e-12) {
      best = d;
      best_s = cum_[i] + norm(c - points_[i]);
    }
  }
  return best_s;
}

double Path::lateral_offset(Vec2 p) const {
  double s = project(p);
  return dot(p - point_at(s), left_normal(tangent_at(s)));
}

// ---------------------------------------------------------------- world

WorldState build_world(Layout layout, std::uint64_t seed, const SimConfig& config) {
  LayoutParams lp = params_for(layout);
  Rng rng(derive_seed(seed, 0x5157));
  WorldState w;
  w.config = config;
  w.layout = layout;
  w.seed = seed;
  w.half_width = lp.half_width;

  std::vector<Vec2> pts{{0.0, 0.0}};
  double heading = uniform(rng, -0.3, 0.3);
  double length = 0.0;
  bool first = true;
  while (length < 62.0) {
    if (!first) heading = std::clamp(heading + uniform(rng, -lp.max_turn_deg, lp.max_turn_deg) * kDeg, -0.9, 0.9);
    first = false;
    double seg = uniform(rng, lp.min_segment, lp.max_segment);
    pts.push_back(pts.back() + unit(heading) * seg);
    length += seg;
  }
  w.path = Path(pts);

  // Corridor walls follow the path extended by a short stub at each end, then capped.
  std::vector<Vec2> ext = pts;
  ext.front() = pts.front() - normalized(pts[1] - pts[0]) * 2.0;
  ext.insert(ext.begin() + 1, pts.front());
  ext.back() = pts.back();
  ext.push_back(pts.back() + normalized(pts.back() - pts[pts.size() - 2]) * 2.0);
  auto left = offset_polyline(ext, lp.half_width);
  auto right = offset_polyline(ext, -lp.half_width);
  add_polyline(w.walls, left);
  add_polyline(w.walls, right);
  w.walls.push_back({left.front(), right.front()});
  w.walls.push_back({left.back(), right.back()});

  if (lp.clutter_shape > 0) {
    std::vector<Vec2> placed;
    for (double s = 3.0; s < w.path.length() - 2.0; s += lp.clutter_spacing * uniform(rng, 0.8, 1.2)) {
      double side = uniform(rng, 0.0, 1.0) < 0.5 ? 1.0 : -1.0;
      double lat = uniform(rng, 1.3, lp.half_width - 0.45);
      Vec2 c = w.path.point_at(s) + left_normal(w.path.tangent_at(s)) * (side * lat);
      if (path_distance(w.path, c) < 1.2) continue;
      bool clash = false;
      for (auto q : placed) clash = clash || norm(q - c) < 1.2;
      if (clash) continue;
      placed.push_back(c);
      add_polygon(w.walls, c, lp.clutter_radius, lp.clutter_shape, uniform(rng, 0.0, 1.0));
    }
  }

  place_robot(w, 0.0);
  return w;
}

void place_robot(WorldState& w, double s) {
  Vec2 p = w.path.point_at(s);
  Vec2 t = w.path.tangent_at(s);
  w.robot = Pose{p.x, p.y, std::atan2(t.y, t.x)};
  if (!position_free(w, p)) throw Error(Errc::runtime, "robot placed inside a wall");
}

double wall_clearance(const WorldState& w, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : w.walls) best = std::min(best, distance(s, p));
  return best;
}

bool position_free(const WorldState& w, Vec2 p) {
  const double r = w.config.robot_radius;
  for (const auto& s : w.walls)
    if (distance(s, p) < r - 1e-9) return false;
  for (const auto& ob : w.obstacles)
    if (norm(p - ob.position) < r + ob.radius - 1e-9) return false;
  return true;
}

void step(WorldState& w, const ActionCmd& action) {
  const SimConfig& cfg = w.config;
  ActionCmd a = action.clamped();
  double v = a.v * cfg.v_max;
  double om = a.omega * cfg.omega_max;
  Vec2 delta{v * std::cos(w.robot.theta) * cfg.dt, v * std::sin(w.robot.theta) * cfg.dt};
  Vec2 p = move_robot(w, w.robot.position(), delta);
  w.robot.x = p.x;
  w.robot.y = p.y;
  w.robot.theta = wrap_angle(w.robot.theta + om * cfg.dt);

  Vec2 rp = w.robot.position();
  for (auto& ob : w.obstacles) {
    const bool in = ob.age < ob.move_steps;
    const bool out = ob.age >= ob.move_steps + ob.pause_steps;
    if (in || out) {
      Vec2 next = ob.position + ob.velocity * (in ? cfg.dt : -cfg.dt);
      if (norm(next - rp) >= cfg.robot_radius + ob.radius) ob.position = next;
    }
    ++ob.age;
  }
  std::erase_if(w.obstacles, [](const DynamicObstacle& ob) { return ob.age >= ob.life_steps(); });

  ++w.step_index;
  apply_due_failures(w);
}

void inject_failure(WorldState& w, const FailureSpec& spec) {
  validate(spec);
  if (spec.trigger_step < w.step_index) {
    throw Error(Errc::invalid_argument, "failure trigger step " + std::to_string(spec.trigger_step) +
                                            " already passed (world at step " + std::to_string(w.step_index) + ")");
  }
  w.pending_failures.push_back(spec);
  apply_due_failures(w);
}

bool at_path_end(const WorldState& w) { return w.path.project(w.robot.position()) >= w.path.length() - 0.25; }

ActionCmd expert_action(const WorldState& w) {
  if (at_path_end(w)) return kStop;
  constexpr double kLookahead = 1.2;
  Vec2 pos = w.robot.position();
  double s = w.path.project(pos);
  Vec2 target = w.path.point_at(std::min(s + kLookahead, w.path.length()));
  Vec2 to = target - pos;
  double err = wrap_angle(std::atan2(to.y, to.x) - w.robot.theta);
  double omega = std::clamp(1.8 * err, -1.0, 1.0);
  double v = 0.9 * std::clamp(1.0 - std::abs(err) / 0.9, 0.0, 1.0);
  return {v, omega};
}

bool forward_path_exists(const WorldState& w, double ahead, double cell) {
  const double window = 6.0;
  const int n = static_cast<int>(2 * window / cell) + 1;
  Vec2 origin = w.robot.position() - Vec2{window, window};
  auto center = [&](int i, int j) { return origin + Vec2{i * cell, j * cell}; };
  double s0 = w.path.project(w.robot.position());
  std::vector<char> seen(static_cast<std::size_t>(n) * n, 0);
  std::queue<std::pair<int, int>> q;
  int si = static_cast<int>(std::lround(window / cell));
  q.push({si, si});
  seen[si * n + si] = 1;
  while (!q.empty()) {
    auto [i, j] = q.front();
    q.pop();
    Vec2 c = center(i, j);
    if (w.path.project(c) >= s0 + ahead && path_distance(w.path, c) < w.half_width) return true;
    const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      int a = i + di[k], b = j + dj[k];
      if (a < 0 || b < 0 || a >= n || b >= n || seen[a * n + b]) continue;
      seen[a * n + b] = 1;
      Vec2 p = center(a, b);
      // Moving between neighbouring cells must not pass through a thin wall.
      bool crosses = false;
      for (const auto& s : w.walls) {
        Vec2 d = p - c;
        auto hit = intersect(c, normalized(d), s);
        if (hit && hit->distance <= norm(d)) {
          crosses = true;
          break;
        }
      }
      if (!crosses && position_free(w, p)) q.push({a, b});
    }
  }
  return false;
}

}  // namespace fare::sim
