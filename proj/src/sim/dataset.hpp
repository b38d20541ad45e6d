#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "common/types.hpp"
#include "sim/world.hpp"

namespace fare::sim {

/// One recorded demonstration. Frames are stored back to back, C*H*W floats each.
struct Trajectory {
  std::uint64_t seed = 0;
  Layout layout = Layout::corridor;
  std::uint32_t stride = 1;  // simulation steps between recorded frames
  std::vector<float> frames;
  std::vector<ActionCmd> actions;

  std::size_t length() const noexcept { return actions.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct Dataset {
  std::size_t channels = 1;
  std::size_t height = 48;
  std::size_t width = 64;
  std::vector<Trajectory> trajectories;

  std::size_t frame_size() const noexcept { return channels * height * width; }
  std::size_t pair_count() const noexcept;
  std::span<const float> frame(std::size_t traj, std::size_t t) const;
  bool operator==(const Dataset&) const = default;
};

struct CollectConfig {
  std::size_t n_traj = 200;
  std::vector<Layout> layouts{Layout::corridor, Layout::plaza, Layout::park};
  std::uint64_t seed = 1;
  double calib_fraction = 0.2;
  std::size_t episode_steps = 150;
  std::uint32_t train_stride = 2;
  // Perturbations on the executed (not the recorded) action so that the
  // demonstrations include recoveries from off-path states.
  double omega_noise = 0.25;
  double noise_correlation = 0.9;
  double burst_probability = 0.02;
  double burst_omega = 0.8;
  std::uint32_t burst_min_steps = 3;
  std::uint32_t burst_max_steps = 25;
  SimConfig sim;
};

struct CollectedData {
  Dataset train;
  Dataset calib;
};

/// Runs the expert on failure-free worlds; calibration trajectories are kept
/// at full frame rate, training trajectories are subsampled by train_stride.
CollectedData collect_dataset(const CollectConfig& config);

/// Indices of the trajectories held out for calibration (seeded shuffle).
std::vector<std::size_t> calibration_indices(std::size_t n_traj, double fraction, std::uint64_t seed);

void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace fare::sim
