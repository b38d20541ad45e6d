#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "model/encoder.hpp"
#include "model/trainer.hpp"
#include "sim/dataset.hpp"

namespace fare::baselines {

using model::Heatmap;

/// Conv encoder shared with the policy, a linear bottleneck and a decoder of
/// transposed convolutions mirroring the encoder. The decoder reproduces the
/// standardized frame with a linear output. The variational form adds a
/// log-variance head and a beta-weighted KL term.
struct AeSpec {
  model::EncoderSpec encoder;
  bool variational = false;
  double beta = 1.0;

  bool operator==(const AeSpec&) const = default;
};

struct AeModel {
  AeSpec spec;
  std::uint64_t seed = 0;
  model::ParamSet params;
  model::InputNorm norm;
};

AeModel init_ae(const AeSpec& spec, std::uint64_t seed);
/// Model kind "ae" or "vae" in the weights file.
void save_ae(const AeModel& m, const std::string& path);
AeModel load_ae(const std::string& path);

struct AeGraph {
  model::EncoderGraph enc;
  tensor::NodeId eps;    // bound by the caller when sampled
  tensor::NodeId z;
  tensor::NodeId recon;   // [N,C,H,W], standardized units
  tensor::NodeId target;  // the standardized input frames
  tensor::NodeId loss;   // summed squared error (+ beta * KL when variational)
};

AeGraph build_ae_graph(tensor::Graph& g, const model::ParamLeaves& p, const AeSpec& spec, bool sampled);

struct AeTrainResult {
  AeModel model;
  std::vector<double> loss_curve;
};

/// Fits the input normalization, then minimizes reconstruction error on
/// every frame of the dataset.
AeTrainResult train_ae(const sim::Dataset& data, const AeSpec& spec, const model::TrainOptions& opts,
                       std::size_t threads = 1);

struct ReconScore {
  double score = 0.0;  // mean squared reconstruction error
  Heatmap heatmap;     // per-pixel squared error at image resolution
};

/// Reconstruction scoring with z = posterior mean (AE and VAE-R).
class AeScorer {
 public:
  explicit AeScorer(const AeModel& m);

  std::vector<double> reconstruct(std::span<const float> frame);
  ReconScore score(std::span<const float> frame);
  std::vector<ReconScore> scores(std::span<const float> frames, std::size_t n);

 private:
  AeSpec spec_;
  model::InputNorm norm_;
  tensor::Graph g_;
  AeGraph net_;
};

/// KL score and Grad-CAM from the encoder of a variational model (VAE-KL).
/// Throws for a plain autoencoder.
model::KlEncoder vae_kl_encoder(const AeModel& m);

}  // namespace fare::baselines
