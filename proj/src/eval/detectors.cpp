#include "eval/detectors.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace fare::eval {

namespace {

class PolicyDetector : public Detector {
 public:
  explicit PolicyDetector(const policy::PolicyModel& m) : runner_(m) {}
  double score(std::span<const float> frame, const ActionCmd&) override { return runner_.run(frame).score; }
  bool has_heatmap() const override { return true; }
  model::Heatmap heatmap(std::span<const float> frame) override { return runner_.grad_cam(frame); }

 private:
  policy::PolicyRunner runner_;
};

class ReconDetector : public Detector {
 public:
  explicit ReconDetector(const baselines::AeModel& m) : scorer_(m) {}
  double score(std::span<const float> frame, const ActionCmd&) override { return scorer_.score(frame).score; }
  bool has_heatmap() const override { return true; }
  model::Heatmap heatmap(std::span<const float> frame) override { return scorer_.score(frame).heatmap; }

 private:
  baselines::AeScorer scorer_;
};

class VaeKlDetector : public Detector {
 public:
  explicit VaeKlDetector(const baselines::AeModel& m) : enc_(baselines::vae_kl_encoder(m)) {}
  double score(std::span<const float> frame, const ActionCmd&) override { return enc_.score(frame); }
  bool has_heatmap() const override { return true; }
  model::Heatmap heatmap(std::span<const float> frame) override { return enc_.grad_cam(frame); }

 private:
  model::KlEncoder enc_;
};

class RndDetector : public Detector {
 public:
  explicit RndDetector(const baselines::RndModel& m) : scorer_(m) {}
  double score(std::span<const float> frame, const ActionCmd& action) override { return scorer_.score(frame, action); }
  bool has_heatmap() const override { return false; }
  model::Heatmap heatmap(std::span<const float>) override {
    throw Error(Errc::invalid_argument, "rnd has no recognition heatmap");
  }

 private:
  baselines::RndScorer scorer_;
};

template <class T>
const T& need(const std::optional<T>& m, const std::string& method, const char* what) {
  if (!m) throw Error(Errc::state, "method '" + method + "' needs " + what + " weights");
  return *m;
}

}  // namespace

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"fare", "ae", "vae-r", "vae-kl", "rnd"};
  return names;
}

bool is_method(const std::string& name) {
  const auto& n = method_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

std::unique_ptr<Detector> make_detector(const std::string& method, const Artifacts& a) {
  if (method == "fare") return std::make_unique<PolicyDetector>(need(a.policy, method, "policy"));
  if (method == "ae") {
    const auto& m = need(a.ae, method, "ae");
    if (m.spec.variational) throw Error(Errc::invalid_argument, "method 'ae' needs non-variational weights");
    return std::make_unique<ReconDetector>(m);
  }
  if (method == "vae-r") return std::make_unique<ReconDetector>(need(a.vae, method, "vae"));
  if (method == "vae-kl") return std::make_unique<VaeKlDetector>(need(a.vae, method, "vae"));
  if (method == "rnd") return std::make_unique<RndDetector>(need(a.rnd, method, "rnd"));
  throw Error(Errc::invalid_argument, "unknown method '" + method + "'");
}

std::vector<std::vector<double>> score_dataset(Detector& d, const sim::Dataset& data) {
  std::vector<std::vector<double>> out(data.trajectories.size());
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& tr = data.trajectories[i];
    out[i].reserve(tr.length());
    for (std::size_t t = 0; t < tr.length(); ++t) out[i].push_back(d.score(data.frame(i, t), tr.actions[t]));
  }
  return out;
}

conformal::PredictionBand calibrate(Detector& d, const sim::Dataset& calib, std::size_t T, double alpha,
                                    double split_fraction) {
  return conformal::fit_band(conformal::chunk(score_dataset(d, calib), T), alpha, split_fraction);
}

}  // namespace fare::eval
