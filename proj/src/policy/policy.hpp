#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "common/types.hpp"
#include "conformal/band.hpp"
#include "model/encoder.hpp"
#include "model/trainer.hpp"
#include "sim/dataset.hpp"

namespace fare::policy {

using model::Heatmap;
using model::Posterior;

struct PolicySpec {
  model::EncoderSpec encoder;
  std::size_t hidden = 64;
  double beta = 1e-3;

  bool operator==(const PolicySpec&) const = default;
};

struct PolicyModel {
  PolicySpec spec;
  std::uint64_t seed = 0;
  model::ParamSet params;
  model::InputNorm norm;  // identity until trained
};

PolicyModel init_policy(const PolicySpec& spec, std::uint64_t seed);
void save_policy(const PolicyModel& m, const std::string& path);
PolicyModel load_policy(const std::string& path);

struct PolicyGraph {
  model::EncoderGraph enc;
  tensor::NodeId eps;  // only meaningful when built with sampling
  tensor::NodeId z;
  tensor::NodeId action;  // [N,2]: sigmoid(v), tanh(omega)
  tensor::NodeId kl;      // summed over the batch
};

/// Encoder and action decoder. With `sampled` the latent is mean +
/// exp(logvar/2) * eps with eps bound by the caller; otherwise z = mean.
PolicyGraph build_policy_graph(tensor::Graph& g, const model::ParamLeaves& p, const PolicySpec& spec, bool sampled);

struct VibGraph {
  PolicyGraph net;
  tensor::NodeId target;  // [N,2] expert actions
  tensor::NodeId loss;    // sum over the batch of ||a - a_hat||^2 + beta * KL
};

VibGraph build_vib_graph(tensor::Graph& g, const model::ParamLeaves& p, const PolicySpec& spec, double beta);

ActionCmd decode_action(const PolicyModel& m, std::span<const double> z);

/// Batch mean of ||a - decode(z)||^2 + beta * KL with z sampled from the posterior.
double vib_loss(const PolicyModel& m, std::span<const float> frames, std::span<const ActionCmd> actions, double beta,
                Rng& rng);

struct TrainResult {
  PolicyModel model;
  std::vector<double> loss_curve;  // mean loss per epoch
};

/// Fits the input normalization on the dataset, then trains on every
/// (frame, action) pair.
TrainResult train_policy(const sim::Dataset& data, const PolicySpec& spec, const model::TrainOptions& opts,
                         std::size_t threads = 1);

/// Inference with frozen weights (z = mean).
class PolicyRunner {
 public:
  explicit PolicyRunner(const PolicyModel& m);

  struct Output {
    ActionCmd action;
    double score = 0.0;  // KL to the unit Gaussian
    Posterior posterior;
  };

  Output run(std::span<const float> frame);
  std::vector<Output> run_batch(std::span<const float> frames, std::size_t n);
  Heatmap grad_cam(std::span<const float> frame);
  const PolicySpec& spec() const noexcept { return spec_; }

 private:
  PolicySpec spec_;
  model::InputNorm norm_;
  tensor::Graph g_;
  PolicyGraph net_;
};

struct StepResult {
  ActionCmd action;
  double score = 0.0;
  bool band_available = false;
  bool ood = false;
  std::optional<Heatmap> heatmap;  // computed only for out-of-distribution frames
};

/// One control step: action and score from a single forward pass, the OOD
/// decision from the band at frame index t and, when OOD, the Grad-CAM map.
StepResult policy_step(PolicyRunner& runner, std::span<const float> frame, const conformal::PredictionBand* band,
                       std::size_t t);

}  // namespace fare::policy
