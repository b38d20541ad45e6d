#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "common/types.hpp"
#include "sim/geometry.hpp"

namespace fare::sim {

enum class Layout { corridor, plaza, park };

const char* layout_name(Layout layout);
Layout parse_layout(const std::string& name);

/// Units: world-units and seconds. Control runs at 1/dt steps per second.
struct SimConfig {
  double dt = 0.1;
  double v_max = 1.0;
  double omega_max = 1.5;
  double robot_radius = 0.3;
  double max_range = 8.0;
  double fov_deg = 140.0;
  std::size_t image_height = 48;
  std::size_t image_width = 64;

  bool operator==(const SimConfig&) const = default;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Vec2 position() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

/// Polyline with arc-length parameterization.
class Path {
 public:
  Path() = default;
  explicit Path(std::vector<Vec2> waypoints);

  const std::vector<Vec2>& waypoints() const noexcept { return points_; }
  double length() const noexcept { return cum_.empty() ? 0.0 : cum_.back(); }
  Vec2 point_at(double s) const;
  Vec2 tangent_at(double s) const;
  /// Arc length of the point on the path closest to p.
  double project(Vec2 p) const;
  /// Signed lateral offset of p from the path (positive to the left).
  double lateral_offset(Vec2 p) const;

  bool operator==(const Path&) const = default;

 private:
  std::size_t segment_at(double s) const;

  std::vector<Vec2> points_;
  std::vector<double> cum_;
};

/// Circle that walks with `velocity` for `move_steps`, stands for
/// `pause_steps`, walks back the same way and then leaves the scene.
struct DynamicObstacle {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.25;
  int move_steps = 8;
  int pause_steps = 10;
  int age = 0;

  int life_steps() const { return 2 * move_steps + pause_steps; }
  bool operator==(const DynamicObstacle&) const = default;
};

enum class FailureKind { blackout, blocked_local_minima, blocked_dead_end, dynamic_obstacle };
enum class Side { left, right, front };

const char* failure_name(FailureKind kind);
FailureKind parse_failure(const std::string& name);
const char* side_name(Side side);

/// Failures only recoverable by the robot itself are local minima and dynamic obstacles.
inline bool is_recoverable(FailureKind kind) {
  return kind == FailureKind::blocked_local_minima || kind == FailureKind::dynamic_obstacle;
}

/// `side` is where the failure geometry sits: the approach side of a dynamic
/// obstacle, or the wall a local-minimum barrier is attached to (the gap is
/// left open on the other side).
struct FailureSpec {
  FailureKind kind = FailureKind::blackout;
  long trigger_step = 80;
  Side side = Side::left;
  double barrier_distance = 1.2;  // ahead of the robot along the path
  double gap_width = 1.4;         // free width left by a local-minimum barrier
  double pocket_half_width = 0.75;
  double pocket_depth = 5.0;      // beyond what a full backtrack cache can retrace
  double obstacle_distance = 0.9;     // spawn range from the robot
  double obstacle_bearing_deg = 40.0;
  double obstacle_ahead = 1.0;        // standing point: this far ahead of the robot ...
  double obstacle_offset = 0.3;       // ... and this far toward the approach side
  double obstacle_radius = 0.25;
  int obstacle_move_steps = 8;        // steps to walk from spawn to the standing point
  int obstacle_pause_steps = 10;      // then stands this long before walking back out

  bool operator==(const FailureSpec&) const = default;
};

struct WorldState {
  SimConfig config;
  Layout layout = Layout::corridor;
  std::uint64_t seed = 0;
  double half_width = 1.6;
  Path path;
  std::vector<Segment> walls;
  /// Geometry added by failure injection; also present in `walls`.
  std::vector<std::size_t> injected_walls;
  std::vector<DynamicObstacle> obstacles;
  Pose robot;
  bool blackout_active = false;
  long step_index = 0;
  std::vector<FailureSpec> pending_failures;
  std::vector<FailureSpec> applied_failures;

  bool operator==(const WorldState&) const = default;
};

WorldState build_world(Layout layout, std::uint64_t seed, const SimConfig& config = {});

/// Places the robot on the path at arc length s, facing along it.
void place_robot(WorldState& world, double s);

/// Smallest distance from p to any wall segment; +inf without walls.
double wall_clearance(const WorldState& world, Vec2 p);
bool position_free(const WorldState& world, Vec2 p);

struct ColumnHit {
  double distance = 0.0;  // +inf on a miss
  int wall = -1;          // index into walls, or -1
  int obstacle = -1;      // index into obstacles, or -1
};

/// Casts one ray per image column, left (+fov/2) to right (-fov/2).
std::vector<ColumnHit> cast_columns(const WorldState& world);
/// Bearing of column `col` relative to the robot heading, radians.
double column_bearing(const SimConfig& config, std::size_t col);

Image render(const WorldState& world);

/// Which thirds of the image show injected failure geometry (all three during a blackout).
std::array<bool, 3> failure_bins(const WorldState& world);

/// Advances one control step (unicycle kinematics with wall collision) and
/// applies any failure whose trigger step is reached.
void step(WorldState& world, const ActionCmd& action);

/// Pure-pursuit demonstrator. Stops once the robot reaches the path end.
ActionCmd expert_action(const WorldState& world);
bool at_path_end(const WorldState& world);

/// Schedules a failure; it is applied when the world reaches `trigger_step`
/// (immediately if that is the current step).
void inject_failure(WorldState& world, const FailureSpec& spec);

/// Grid flood fill from the robot position over cells the robot disc fits in;
/// true when any reachable cell lies at least `ahead` further along the path.
bool forward_path_exists(const WorldState& world, double ahead, double cell = 0.1);

}  // namespace fare::sim
