#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eval/detectors.hpp"
#include "eval/roc.hpp"
#include "sim/world.hpp"

namespace fare::eval {

/// One expert-driven test run; a failure, when present, is injected at
/// `trigger_step` and every frame from then on is out of distribution.
struct TestTrajectory {
  std::size_t id = 0;
  std::uint64_t seed = 0;
  sim::Layout layout = sim::Layout::corridor;
  double start_s = 0.0;
  std::optional<sim::FailureSpec> failure;
};

struct TestSetConfig {
  std::size_t n_fail = 90;
  std::size_t n_normal = 90;
  std::size_t length = 100;  // frames per trajectory (10 s)
  long trigger_step = 80;    // the 8 s mark
  std::uint64_t seed = 7;
  sim::SimConfig sim;
};

/// Failure trajectories cycle blackout, blocked path, dynamic obstacle; blocked
/// paths alternate local minimum and dead end; sides alternate left/right
/// within each kind. Clean trajectories follow. Layouts cycle through all three.
std::vector<TestTrajectory> build_test_set(const TestSetConfig& cfg);

/// "blackout", "blocked_path" or "dynamic_obstacle"; "clean" without a failure.
std::string failure_group(const std::optional<sim::FailureSpec>& f);
const std::vector<std::string>& failure_groups();

/// Replays a test trajectory, calling fn(t, world, frame, expert action)
/// before each step.
void replay(const TestTrajectory& tt, const TestSetConfig& cfg,
            const std::function<void(std::size_t, const sim::WorldState&, const Image&, const ActionCmd&)>& fn);

struct FrameRecord {
  std::size_t traj = 0;
  std::size_t t = 0;
  bool ood = false;
  std::array<bool, 3> gt_bins{false, false, false};
  // Per method, in DetectionRun::methods order.
  std::vector<double> score;
  std::vector<char> flagged;
  std::vector<std::array<double, 3>> bin_score;
};

struct Snapshot {
  std::string method;
  std::size_t traj = 0;
  std::size_t t = 0;
  model::Heatmap heatmap;
};

struct DetectionRun {
  TestSetConfig config;
  std::vector<std::string> methods;
  std::vector<TestTrajectory> trajectories;
  std::vector<FrameRecord> frames;  // trajectory-major
  std::vector<Snapshot> snapshots;  // first flagged failure frame per trajectory and heatmap method
};

/// Scores every test frame with every method against its band. Trajectories
/// run on up to `workers` threads with private detectors; results do not
/// depend on the worker count.
DetectionRun run_detection(const TestSetConfig& cfg, const std::vector<std::string>& methods,
                           const Artifacts& artifacts, const std::map<std::string, conformal::PredictionBand>& bands,
                           std::size_t workers = 1);

struct MethodSummary {
  std::string method;
  RocCurve roc;                                 // frame-level, OOD label vs raw score
  std::map<std::string, double> det_sr;         // per failure group, percent of trajectories
  std::map<std::string, std::size_t> n;         // trajectories per group
  double fp_frame_rate = 0.0;                   // flagged share of clean-trajectory frames
  double fp_traj_rate = 0.0;                    // clean trajectories with any flagged frame
  bool has_heatmap = false;
  std::array<std::optional<RocCurve>, 3> bins;  // per-bin ROC over all frames (label: gt bin)
  // Dynamic-obstacle recognition: among flagged failure frames showing the
  // obstacle in the injected side's bin, the share where that bin scores highest,
  // and the ROC of that bin within dynamic-obstacle trajectories.
  double side_top_rate = 0.0;
  std::size_t side_frames = 0;
  std::optional<RocCurve> side_bin_roc;
};

MethodSummary summarize(const DetectionRun& run, std::size_t method_index);

}  // namespace fare::eval
