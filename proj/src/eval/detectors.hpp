#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "baselines/autoencoder.hpp"
#include "baselines/rnd.hpp"
#include "common/types.hpp"
#include "conformal/band.hpp"
#include "policy/policy.hpp"
#include "sim/dataset.hpp"

namespace fare::eval {

/// Scoring methods: "fare" (policy KL), "ae", "vae-r", "vae-kl", "rnd".
const std::vector<std::string>& method_names();
bool is_method(const std::string& name);

/// A per-frame OOD score, higher meaning more novel, and for methods that
/// have one a recognition heatmap.
class Detector {
 public:
  virtual ~Detector() = default;
  /// `action` is the command executed at this frame (only RND reads it).
  virtual double score(std::span<const float> frame, const ActionCmd& action) = 0;
  virtual bool has_heatmap() const = 0;
  virtual model::Heatmap heatmap(std::span<const float> frame) = 0;
};

/// Trained models available to the evaluation; vae-r and vae-kl share `vae`.
struct Artifacts {
  std::optional<policy::PolicyModel> policy;
  std::optional<baselines::AeModel> ae;
  std::optional<baselines::AeModel> vae;
  std::optional<baselines::RndModel> rnd;
};

/// Throws Errc::invalid_argument for an unknown method and Errc::state when the
/// model it needs is missing.
std::unique_ptr<Detector> make_detector(const std::string& method, const Artifacts& artifacts);

/// Scores every frame of every trajectory, one list per trajectory.
std::vector<std::vector<double>> score_dataset(Detector& d, const sim::Dataset& data);

/// Chunks the calibration scores into segments of T+1 and fits the band.
conformal::PredictionBand calibrate(Detector& d, const sim::Dataset& calib, std::size_t T, double alpha,
                                    double split_fraction = 0.5);

}  // namespace fare::eval
