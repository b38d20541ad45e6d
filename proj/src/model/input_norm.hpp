#pragma once

#include <span>
#include <vector>

#include "model/model_file.hpp"

namespace fare::model {

/// Per-pixel standardization fitted on training frames: x' = (x - mean) / scale
/// with one global scale. A constant frame such as a dead camera then lands far
/// from every training input instead of at the origin. An empty mean is the
/// identity.
struct InputNorm {
  std::vector<double> mean;
  double scale = 1.0;

  bool identity() const noexcept { return mean.empty(); }
  /// Standardizes n back-to-back frames into out.
  void apply(std::span<const float> frames, std::size_t n, double* out) const;

  bool operator==(const InputNorm&) const = default;
};

/// Fits the mean and scale over frames given as blocks of whole frames. Values
/// are rounded to float32 so a saved model reproduces them exactly.
InputNorm fit_input_norm(const std::vector<std::span<const float>>& blocks, std::size_t frame_size);

/// Stored as the parameters "input.mean" and "input.scale".
void write_input_norm(ModelFile& file, const InputNorm& norm);
/// Removes the stored normalization from file.params (identity if absent).
InputNorm take_input_norm(ModelFile& file, std::size_t frame_size);

}  // namespace fare::model
