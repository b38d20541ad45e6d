#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace fare {

/// Policy observation: C×H×W values in [0,1], row-major.
struct Image {
  std::size_t channels = 1;
  std::size_t height = 48;
  std::size_t width = 64;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  std::size_t size() const noexcept { return pixels.size(); }
  float& at(std::size_t c, std::size_t r, std::size_t col) { return pixels[(c * height + r) * width + col]; }
  float at(std::size_t c, std::size_t r, std::size_t col) const { return pixels[(c * height + r) * width + col]; }
};

/// Normalized velocity command. Learned policies emit v in [0,1]; recovery
/// maneuvers may drive in reverse, so the simulator accepts v in [-1,1].
struct ActionCmd {
  double v = 0.0;
  double omega = 0.0;

  ActionCmd clamped() const { return {std::clamp(v, -1.0, 1.0), std::clamp(omega, -1.0, 1.0)}; }
  bool operator==(const ActionCmd&) const = default;
};

inline constexpr ActionCmd kStop{0.0, 0.0};

}  // namespace fare
