#include "model/input_norm.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace fare::model {

namespace {

constexpr const char* kMean = "input.mean";
constexpr const char* kScale = "input.scale";
constexpr double kMinScale = 1e-3;

double round_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

}  // namespace

void InputNorm::apply(std::span<const float> frames, std::size_t n, double* out) const {
  if (identity()) {
    std::copy(frames.begin(), frames.end(), out);
    return;
  }
  const std::size_t fs = mean.size();
  if (frames.size() != n * fs) throw Error(Errc::shape_mismatch, "frame size does not match the input normalization");
  const double inv = 1.0 / scale;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < fs; ++k) out[i * fs + k] = (frames[i * fs + k] - mean[k]) * inv;
}

InputNorm fit_input_norm(const std::vector<std::span<const float>>& blocks, std::size_t frame_size) {
  if (frame_size == 0) throw Error(Errc::invalid_argument, "frame size must be positive");
  InputNorm norm;
  norm.mean.assign(frame_size, 0.0);
  std::size_t frames = 0;
  for (auto b : blocks) {
    if (b.size() % frame_size != 0) throw Error(Errc::shape_mismatch, "block does not hold whole frames");
    for (std::size_t k = 0; k < b.size(); ++k) norm.mean[k % frame_size] += b[k];
    frames += b.size() / frame_size;
  }
  if (frames == 0) throw Error(Errc::insufficient_data, "no frames to fit the input normalization");
  for (auto& m : norm.mean) m = round_f32(m / static_cast<double>(frames));
  double ss = 0.0;
  for (auto b : blocks)
    for (std::size_t k = 0; k < b.size(); ++k) {
      double d = b[k] - norm.mean[k % frame_size];
      ss += d * d;
    }
  norm.scale = round_f32(std::max(kMinScale, std::sqrt(ss / static_cast<double>(frames * frame_size))));
  return norm;
}

void write_input_norm(ModelFile& file, const InputNorm& norm) {
  if (norm.identity()) return;
  file.params.add(kMean, Tensor({norm.mean.size()}, norm.mean));
  file.params.add(kScale, Tensor({1}, std::vector<double>{norm.scale}));
}

InputNorm take_input_norm(ModelFile& file, std::size_t frame_size) {
  InputNorm norm;
  if (!file.params.contains(kMean) && !file.params.contains(kScale)) return norm;
  if (!file.params.contains(kMean) || !file.params.contains(kScale))
    throw Error(Errc::format, "input normalization is incomplete");
  const Tensor& m = file.params.at(kMean);
  const Tensor& s = file.params.at(kScale);
  if (m.size() != frame_size || s.size() != 1) throw Error(Errc::format, "input normalization has the wrong size");
  if (!(s[0] > 0.0)) throw Error(Errc::format, "input normalization scale must be positive");
  norm.mean.assign(m.values().begin(), m.values().end());
  norm.scale = s[0];
  ParamSet rest;
  for (std::size_t i = 0; i < file.params.size(); ++i) {
    const auto& name = file.params.names()[i];
    if (name != kMean && name != kScale) rest.add(name, file.params.values()[i]);
  }
  file.params = std::move(rest);
  return norm;
}

}  // namespace fare::model
