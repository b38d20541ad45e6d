// Runs every acceptance criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exit status is nonzero when any fails.
//
// usage: acceptance [work_dir]   (default: ./acceptance_out)

#include <fare/fare.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "conformal/band.hpp"
#include "model/encoder.hpp"
#include "support/gradcheck.hpp"
#include "support/recovery_props.hpp"
#include "support/vibcheck.hpp"

namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

int n_failed = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++n_failed;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1: autodiff against central differences ----

void gradients() {
  auto t0 = clk::now();
  std::mt19937_64 rng(2024);
  const auto& ops = fare::testing::differentiable_ops();
  double worst = 0.0;
  std::string worst_op;
  const int n_op_cases = 90, n_vib_cases = 10;
  for (int i = 0; i < n_op_cases; ++i) {
    auto r = fare::testing::check_op(ops[static_cast<std::size_t>(i) % ops.size()], rng);
    if (r.max_rel_error > worst) worst = r.max_rel_error, worst_op = r.op;
  }
  for (int i = 0; i < n_vib_cases; ++i) {
    double e = fare::testing::vib_grad_error(rng);
    if (e > worst) worst = e, worst_op = "vib_loss";
  }
  double secs = seconds_since(t0);
  report(1, worst < 1e-4 && secs < 30.0,
         std::to_string(n_op_cases + n_vib_cases) + " cases, max rel err " + fmt("%.2e", worst) + " (" + worst_op +
             "), " + fmt("%.1f s", secs));
}

// ---- 2: closed-form KL against Monte Carlo ----

void kl_monte_carlo() {
  fare::Rng rng(77);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    fare::model::Posterior q;
    for (int k = 0; k < 8; ++k) {
      q.mean.push_back(fare::uniform(rng, -1.5, 1.5));
      q.logvar.push_back(fare::uniform(rng, -1.5, 1.5));
    }
    double exact = fare::model::kl_unit_gaussian(q);
    // E_q[log q(z) - log p(z)] with z = mean + sd * eps.
    double acc = 0.0;
    const std::size_t samples = 1000000;
    for (std::size_t s = 0; s < samples; ++s)
      for (std::size_t d = 0; d < q.mean.size(); ++d) {
        double eps = fare::normal(rng);
        double z = q.mean[d] + std::exp(0.5 * q.logvar[d]) * eps;
        acc += -0.5 * eps * eps - 0.5 * q.logvar[d] + 0.5 * z * z;
      }
    double mc = acc / static_cast<double>(samples);
    worst = std::max(worst, std::abs(mc - exact) / exact);
  }
  report(2, worst < 0.01, "20 posteriors, 1e6 samples each, max rel gap " + fmt("%.4f", worst));
}

// ---- 3: conformal band coverage on synthetic in-distribution scores ----

void conformal_coverage() {
  const std::size_t T = 49;
  const double alpha = 0.1;
  fare::Rng rng(5);
  // Smooth mean curve plus AR(1) noise with a per-segment offset.
  auto segment = [&] {
    fare::conformal::ScoreSegment s(T + 1);
    double offset = 0.3 * fare::normal(rng), e = 0.0;
    for (std::size_t t = 0; t <= T; ++t) {
      e = 0.8 * e + 0.2 * fare::normal(rng);
      s[t] = 2.0 + std::sin(0.15 * static_cast<double>(t)) + offset + e;
    }
    return s;
  };
  auto rejected = [&](const fare::conformal::ScoreSegment& s, const fare::conformal::PredictionBand& b) {
    for (std::size_t t = 0; t <= T; ++t)
      if (fare::conformal::is_ood(s[t], t, b)) return true;
    return false;
  };
  std::vector<fare::conformal::ScoreSegment> calib(200);
  for (auto& s : calib) s = segment();
  auto band = fare::conformal::fit_band(calib, alpha);
  std::size_t covered = 0, self_rejected = 0;
  for (int i = 0; i < 500; ++i) covered += !rejected(segment(), band);
  for (const auto& s : calib) self_rejected += rejected(s, band);
  double coverage = static_cast<double>(covered) / 500.0;
  double self_rate = static_cast<double>(self_rejected) / 200.0;
  report(3, coverage >= 1.0 - alpha - 0.03 && self_rate <= 0.15,
         "coverage " + fmt("%.3f", coverage) + " on 500 fresh segments, self-rejection " + fmt("%.3f", self_rate));
}

// ---- 4-8: the full pipeline through the C API ----

void check(fare_status s, const char* what) {
  if (s != FARE_OK) {
    std::fprintf(stderr, "%s failed: %s (%s)\n", what, fare_status_name(s), fare_last_error());
    std::exit(2);
  }
}

const char* const kMethods[] = {"fare", "ae", "vae-r", "vae-kl", "rnd"};
constexpr std::size_t kNumMethods = 5;

struct PipelineResult {
  double fare_seconds = 0.0;  // gen-data, train, calibrate, eval
  fare_detection_summary det[kNumMethods];
  fare_trial_summary informed[4], blind[4];
  double pooled_informed = 0.0, pooled_blind = 0.0;
};

PipelineResult run_pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  PipelineResult r;
  double fare_secs = 0.0;
  auto timed = [&](bool counts, const std::function<void()>& fn) {
    auto t0 = clk::now();
    fn();
    if (counts) fare_secs += seconds_since(t0);
  };

  fare_dataset *train = nullptr, *calib = nullptr;
  timed(true, [&] {
    fare_collect_options co;
    fare_collect_options_default(&co);
    co.n_traj = 200;
    co.seed = 1;
    check(fare_collect(&co, &train, &calib), "collect");
  });

  fare_train_options to;
  fare_train_options_default(&to);
  to.epochs = 20;
  fare_model* models[4] = {};
  const fare_model_kind kinds[4] = {FARE_MODEL_POLICY, FARE_MODEL_AE, FARE_MODEL_VAE, FARE_MODEL_RND};
  for (int k = 0; k < 4; ++k) {
    timed(k == 0, [&] { check(fare_train(kinds[k], train, &to, &models[k], nullptr), "train"); });
    std::printf("  %s: trained model %d\n", dir.filename().c_str(), k);
    std::fflush(stdout);
  }

  fare_band* bands[kNumMethods] = {};
  for (std::size_t m = 0; m < kNumMethods; ++m)
    timed(m == 0, [&] { check(fare_calibrate(models, 4, kMethods[m], calib, 49, 0.05, &bands[m]), "calibrate"); });

  fare_eval_options eo;
  fare_eval_options_default(&eo);
  eo.n_fail = 90;
  eo.n_normal = 30;
  timed(true, [&] {
    check(fare_eval_detection(models, 4, kMethods, bands, kNumMethods, &eo, dir.c_str(), r.det), "eval");
  });
  r.fare_seconds = fare_secs;

  fare_trial_options tro;
  fare_trial_options_default(&tro);
  check(fare_run_trials(models[0], bands[0], FARE_RECOVERY_INFORMED, &tro, dir.c_str(), r.informed, &r.pooled_informed),
        "informed trials");
  check(fare_run_trials(models[0], bands[0], FARE_RECOVERY_BLIND, &tro, dir.c_str(), r.blind, &r.pooled_blind),
        "blind trials");

  for (auto* b : bands) fare_band_free(b);
  for (auto* m : models) fare_model_free(m);
  fare_dataset_free(train);
  fare_dataset_free(calib);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void detection(const PipelineResult& r) {
  const auto& f = r.det[0];
  std::ostringstream d;
  d << "Det SR blackout " << f.det_blackout << " blocked " << f.det_blocked << " dynamic " << f.det_dynamic
    << ", clean FP " << fmt("%.3f", f.fp_frame_rate) << " of frames, pipeline " << fmt("%.0f s", r.fare_seconds);
  report(4, f.det_blackout >= 95 && f.det_blocked >= 80 && f.det_dynamic >= 80 && f.fp_frame_rate <= 0.10 &&
                r.fare_seconds < 1800,
         d.str());
}

void ranking(const PipelineResult& r) {
  double fare = r.det[0].auc, ae = r.det[1].auc, vae_r = r.det[2].auc, vae_kl = r.det[3].auc;
  std::ostringstream d;
  d << "AUC fare " << fmt("%.3f", fare) << " ae " << fmt("%.3f", ae) << " vae-r " << fmt("%.3f", vae_r) << " vae-kl "
    << fmt("%.3f", vae_kl) << " rnd " << fmt("%.3f", r.det[4].auc);
  report(5, fare >= ae + 0.03 && vae_kl >= vae_r + 0.03, d.str());
}

void recognition(const PipelineResult& r) {
  const auto& f = r.det[0];
  bool ok = f.has_heatmap && f.side_top_rate >= 0.70 && f.side_bin_auc >= 0.75;
  report(6, ok, "side bin highest in " + fmt("%.3f", f.side_top_rate) + " of detected frames, side-bin AUC " +
                    fmt("%.3f", f.side_bin_auc));
}

void recovery(const PipelineResult& r) {
  static const char* names[4] = {"blackout", "local_minima", "dead_end", "dynamic"};
  bool ok = true;
  std::ostringstream d;
  d << "Han informed/blind";
  for (int k = 0; k < 4; ++k) {
    ok = ok && r.informed[k].han_sr >= r.blind[k].han_sr;
    d << " " << names[k] << " " << r.informed[k].han_sr << "/" << r.blind[k].han_sr;
  }
  // Blackout and dead end are irrecoverable: handled means asked for help.
  for (int k : {0, 2}) {
    double rate = r.informed[k].det_sr > 0 ? r.informed[k].han_sr / r.informed[k].det_sr : 0.0;
    ok = ok && rate >= 0.90;
    d << ", " << names[k] << " get_help " << fmt("%.2f", rate);
  }
  ok = ok && !std::isnan(r.pooled_informed) && (std::isnan(r.pooled_blind) || r.pooled_informed <= r.pooled_blind);
  d << ", pooled time " << fmt("%.2f", r.pooled_informed) << " vs " << fmt("%.2f", r.pooled_blind) << " s";
  report(7, ok, d.str());
}

void determinism(const fs::path& a, const fs::path& b) {
  std::size_t compared = 0;
  std::string diff;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    ++compared;
    fs::path other = b / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) diff += " " + e.path().filename().string();
  }
  for (const auto& e : fs::directory_iterator(b))
    if (e.path().extension() == ".csv" && !fs::exists(a / e.path().filename()))
      diff += " " + e.path().filename().string();
  report(8, compared > 0 && diff.empty(),
         std::to_string(compared) + " CSVs compared" + (diff.empty() ? ", all byte-identical" : ", differ:" + diff));
}

// ---- 9: recovery state machine ----

void state_machine() {
  auto rep = fare::testing::check_recovery_properties(10000, 99);
  report(9, rep.ok(),
         std::to_string(rep.sequences) + " sequences, " + std::to_string(rep.decisions) + " decisions" +
             (rep.ok() ? "" : ", first violation: " + rep.first_failure));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = argc > 1 ? argv[1] : "acceptance_out";
  gradients();
  kl_monte_carlo();
  conformal_coverage();

  auto first = run_pipeline(work / "run_a");
  run_pipeline(work / "run_b");
  detection(first);
  ranking(first);
  recognition(first);
  recovery(first);
  determinism(work / "run_a", work / "run_b");
  state_machine();

  std::printf("%d criteria failed\n", n_failed);
  return n_failed == 0 ? 0 : 1;
}
