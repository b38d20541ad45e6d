#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "model/heatmap.hpp"
#include "model/input_norm.hpp"
#include "model/model_file.hpp"
#include "model/params.hpp"

namespace fare::model {

struct ConvLayerSpec {
  std::size_t channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 2;

  bool operator==(const ConvLayerSpec&) const = default;
};

/// Convolutional encoder (same padding, ReLU) followed by linear mean and
/// log-variance heads on the flattened last feature maps.
struct EncoderSpec {
  std::size_t channels = 1;
  std::size_t height = 48;
  std::size_t width = 64;
  std::vector<ConvLayerSpec> convs{{8, 3, 2}, {16, 3, 2}, {32, 3, 2}};
  std::size_t latent = 32;
  bool bias = true;

  /// (maps, rows, cols) of the last convolution's output.
  std::array<std::size_t, 3> feature_shape() const;
  std::size_t flat_size() const;
  std::size_t frame_size() const { return channels * height * width; }
  void validate() const;

  bool operator==(const EncoderSpec&) const = default;
};

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Conv stack only (He init, zero bias).
void add_conv_params(ParamSet& params, const EncoderSpec& spec, Rng& rng, const std::string& prefix);
/// Conv stack plus the mean head and, unless `logvar_head` is false, the
/// log-variance head.
void add_encoder_params(ParamSet& params, const EncoderSpec& spec, Rng& rng, const std::string& prefix,
                        bool logvar_head = true);

/// ReLU conv layers applied to x; returns the last feature maps.
NodeId build_conv_stack(Graph& g, const ParamLeaves& p, const EncoderSpec& spec, const std::string& prefix, NodeId x);

struct EncoderGraph {
  NodeId input;
  NodeId features;  // last conv layer activations A^k, [N,K,h,w]
  NodeId mean;
  NodeId logvar;  // clamped to [kLogVarMin, kLogVarMax]; unset without a log-variance head
  bool has_logvar = false;
};

EncoderGraph build_encoder(Graph& g, const ParamLeaves& p, const EncoderSpec& spec, const std::string& prefix);

/// Sum over batch and latent dimensions of KL(N(mean, exp(logvar)) || N(0, I)).
NodeId build_kl(Graph& g, NodeId mean, NodeId logvar);

void write_encoder_spec(ModelFile& file, const EncoderSpec& spec);
EncoderSpec read_encoder_spec(const ModelFile& file);

struct Posterior {
  std::vector<double> mean;
  std::vector<double> logvar;
};

/// 0.5 * sum_i (mean_i^2 + exp(logvar_i) - logvar_i - 1).
double kl_unit_gaussian(const Posterior& g);

enum class SampleMode { train, infer };

/// Train mode: mean + exp(logvar/2) * eps with eps ~ N(0, I); infer mode: the mean.
std::vector<double> sample_latent(const Posterior& g, Rng& rng, SampleMode mode);

/// Stacks n frames into an [n,C,H,W] tensor, standardized by `norm` when given.
Tensor frames_to_tensor(std::span<const float> frames, std::size_t n, const EncoderSpec& spec,
                        const InputNorm* norm = nullptr);

/// Grad-CAM on an already evaluated graph: backpropagates `score` (a
/// single-frame scalar) to `features`, averages gradients per map and
/// combines ReLU(sum_k alpha_k A^k), then upsamples to out_h x out_w.
Heatmap grad_cam_on(Graph& g, NodeId features, NodeId score, std::size_t out_h, std::size_t out_w);

/// Inference-only encoder with frozen weights: KL scores and Grad-CAM.
class KlEncoder {
 public:
  KlEncoder(const EncoderSpec& spec, const ParamSet& params, const std::string& prefix, InputNorm norm = {});

  Posterior encode(std::span<const float> frame);
  double score(std::span<const float> frame);
  /// KL score of each of n frames.
  std::vector<double> scores(std::span<const float> frames, std::size_t n);
  Heatmap grad_cam(std::span<const float> frame);
  const EncoderSpec& spec() const noexcept { return spec_; }

 private:
  EncoderSpec spec_;
  InputNorm norm_;
  Graph g_;
  EncoderGraph enc_;
  NodeId kl_;
};

}  // namespace fare::model
