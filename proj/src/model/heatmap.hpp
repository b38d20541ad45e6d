#pragma once

#include <cstddef>
#include <vector>

namespace fare::model {

/// Saliency map: the raw map at feature resolution and its upsampled version
/// at image resolution. Both are row-major.
struct Heatmap {
  std::size_t raw_height = 0;
  std::size_t raw_width = 0;
  std::vector<double> raw;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
};

/// Bilinear resize with half-pixel centers and edge clamping. Every output is
/// a convex combination of inputs, so the input range is preserved.
std::vector<double> upsample_bilinear(const std::vector<double>& src, std::size_t in_h, std::size_t in_w,
                                      std::size_t out_h, std::size_t out_w);

}  // namespace fare::model
