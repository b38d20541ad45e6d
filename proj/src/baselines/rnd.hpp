#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "common/types.hpp"
#include "model/encoder.hpp"
#include "model/trainer.hpp"
#include "sim/dataset.hpp"

namespace fare::baselines {

/// Random network distillation on (observation, action) pairs. Target and
/// predictor share one architecture: conv stack, flatten, append the action,
/// a hidden ReLU layer and a linear output of `outputs` values. Only the
/// predictor is trained.
struct RndSpec {
  model::EncoderSpec encoder;  // conv stack and input shape; the heads are unused
  std::size_t hidden = 64;
  std::size_t outputs = 32;

  bool operator==(const RndSpec&) const = default;
};

struct RndModel {
  RndSpec spec;
  std::uint64_t seed = 0;
  model::ParamSet params;  // "target.*" then "pred.*"
  model::InputNorm norm;
};

struct RndGraph {
  tensor::NodeId obs, act;
  tensor::NodeId target, pred;  // [N, outputs]
  tensor::NodeId loss;          // summed squared error
};

RndGraph build_rnd_graph(tensor::Graph& g, const model::ParamLeaves& p, const RndSpec& spec);

RndModel init_rnd(const RndSpec& spec, std::uint64_t seed);
void save_rnd(const RndModel& m, const std::string& path);
RndModel load_rnd(const std::string& path);

struct RndTrainResult {
  RndModel model;
  std::vector<double> loss_curve;
};

/// Trains the predictor on every (frame, expert action) pair; the target
/// parameters are left exactly as initialized.
RndTrainResult train_rnd(const sim::Dataset& data, const RndSpec& spec, const model::TrainOptions& opts,
                         std::size_t threads = 1);

class RndScorer {
 public:
  explicit RndScorer(const RndModel& m);

  /// Squared error between predictor and target outputs.
  double score(std::span<const float> frame, const ActionCmd& action);
  std::vector<double> scores(std::span<const float> frames, std::span<const ActionCmd> actions);
  std::vector<double> target_output(std::span<const float> frame, const ActionCmd& action);

 private:
  void bind(std::span<const float> frames, std::span<const ActionCmd> actions);

  RndSpec spec_;
  model::InputNorm norm_;
  tensor::Graph g_;
  tensor::NodeId obs_, act_, target_, pred_;
};

}  // namespace fare::baselines
