#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "common/error.hpp"
#include "eval/detection.hpp"
#include "eval/report.hpp"
#include "eval/roc.hpp"
#include "eval/trials.hpp"
#include "policy/policy.hpp"

using namespace fare;
using namespace fare::eval;

namespace {

// Probability that a random positive outscores a random negative, ties
// counting one half. Equals the trapezoid ROC area.
double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!y[i] || y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

model::Heatmap filled(std::size_t h, std::size_t w, double v) {
  model::Heatmap m;
  m.height = h;
  m.width = w;
  m.values.assign(h * w, v);
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("fare_test_eval_" + name);
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST_CASE("roc of the four-point hand case is 0.75") {
  auto c = roc_auc({0.1, 0.4, 0.35, 0.8}, {false, false, true, true});
  CHECK(c.auc == doctest::Approx(0.75).epsilon(1e-12));
  REQUIRE(c.points.size() >= 2);
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);
}

TEST_CASE("roc extremes: separated scores give 1, identical scores give 0.5") {
  CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}).auc == 1.0);
  CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, {false, false, true, true}).auc == 0.0);
  auto tied = roc_auc({0.3, 0.3, 0.3, 0.3, 0.3}, {true, false, true, false, false});
  CHECK(tied.auc == doctest::Approx(0.5));
  // All tied scores move as one threshold: origin plus one point at (1,1).
  CHECK(tied.points.size() == 2);
}

TEST_CASE("roc needs both labels") {
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {true, true}), Error);
  CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {false, false}), Error);
  CHECK_THROWS_AS(roc_auc({0.1}, {true, false}), Error);
}

TEST_CASE("roc area matches pairwise counting and flips under negation") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> level(0, 9);  // coarse levels force ties
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 5 + static_cast<std::size_t>(trial);
    std::vector<double> s(n), neg(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = coin(rng);
      s[i] = level(rng) + (y[i] ? 2.0 : 0.0);
      neg[i] = -s[i];
    }
    y[0] = true;
    y[1] = false;
    double a = roc_auc(s, y).auc;
    CHECK(a == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-12));
    CHECK(a + roc_auc(neg, y).auc == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("roc points are monotone") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> s;
  std::vector<bool> y;
  for (int i = 0; i < 200; ++i) {
    y.push_back(i % 3 == 0);
    s.push_back(g(rng) + (y.back() ? 1.0 : 0.0));
  }
  auto c = roc_auc(s, y);
  CHECK(c.auc > 0.5);
  CHECK(c.auc <= 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
    CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    CHECK(c.points[i].threshold < c.points[i - 1].threshold);
  }
}

TEST_CASE("per-bin score") {
  auto ones = filled(48, 64, 1.0);
  CHECK(per_bin_score(false, ones, 0) == 0.0);
  CHECK(per_bin_score(false, ones, 2) == 0.0);
  CHECK(per_bin_score(true, ones, 0) == 1056.0);
  CHECK(per_bin_score(true, ones, 1) == 48.0 * 21.0);
  CHECK(per_bin_score(true, ones, 2) == 48.0 * 21.0);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto m = filled(12, 40, 0.0);
  double total = 0.0;
  for (auto& v : m.values) total += (v = u(rng));
  double sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) sum += per_bin_score(true, m, k);
  CHECK(sum == doctest::Approx(total).epsilon(1e-12));
  CHECK_THROWS_AS(per_bin_score(true, m, 3), Error);
}

TEST_CASE("test set splits failures evenly and alternates sides") {
  TestSetConfig cfg;
  cfg.n_fail = 90;
  cfg.n_normal = 12;
  auto ts = build_test_set(cfg);
  REQUIRE(ts.size() == 102);
  std::map<std::string, int> groups, left;
  int lm = 0, de = 0;
  for (const auto& t : ts) {
    auto g = failure_group(t.failure);
    ++groups[g];
    if (!t.failure) continue;
    CHECK(t.failure->trigger_step == 80);
    if (t.failure->side == sim::Side::left) ++left[g];
    lm += t.failure->kind == sim::FailureKind::blocked_local_minima;
    de += t.failure->kind == sim::FailureKind::blocked_dead_end;
  }
  CHECK(groups["blackout"] == 30);
  CHECK(groups["blocked_path"] == 30);
  CHECK(groups["dynamic_obstacle"] == 30);
  CHECK(groups["clean"] == 12);
  CHECK(left["dynamic_obstacle"] == 15);
  CHECK(lm == 15);
  CHECK(de == 15);
  CHECK(build_test_set(cfg)[40].seed == ts[40].seed);

  cfg.trigger_step = 100;
  CHECK_THROWS_AS(build_test_set(cfg), Error);
}

TEST_CASE("replayed blackout frames carry all three ground-truth bins") {
  TestSetConfig cfg;
  cfg.n_fail = 1;
  cfg.n_normal = 0;
  auto ts = build_test_set(cfg);
  REQUIRE(ts[0].failure->kind == sim::FailureKind::blackout);
  std::size_t frames = 0, black = 0;
  replay(ts[0], cfg, [&](std::size_t t, const sim::WorldState& w, const Image& img, const ActionCmd&) {
    ++frames;
    auto bins = sim::failure_bins(w);
    bool all = bins[0] && bins[1] && bins[2];
    bool none = !bins[0] && !bins[1] && !bins[2];
    CHECK((static_cast<long>(t) >= cfg.trigger_step ? all : none));
    if (all) {
      bool zero = true;
      for (float v : img.pixels) zero &= v == 0.0f;
      black += zero;
    }
  });
  CHECK(frames == cfg.length);
  CHECK(black == cfg.length - static_cast<std::size_t>(cfg.trigger_step));
}

TEST_CASE("summary of a hand-built run") {
  DetectionRun run;
  run.methods = {"fare"};
  TestTrajectory dyn;
  dyn.id = 0;
  sim::FailureSpec f;
  f.kind = sim::FailureKind::dynamic_obstacle;
  f.side = sim::Side::left;
  dyn.failure = f;
  TestTrajectory clean;
  clean.id = 1;
  run.trajectories = {dyn, clean};

  auto frame = [](std::size_t traj, std::size_t t, bool ood, std::array<bool, 3> gt, double score, bool flagged,
                  std::array<double, 3> bins) {
    FrameRecord r;
    r.traj = traj;
    r.t = t;
    r.ood = ood;
    r.gt_bins = gt;
    r.score = {score};
    r.flagged = {static_cast<char>(flagged)};
    r.bin_score = {bins};
    return r;
  };
  // Failure trajectory: one clean frame, three OOD frames with the obstacle in
  // the left bin; two are flagged and the left bin wins in one of them.
  run.frames.push_back(frame(0, 0, false, {false, false, false}, 1.0, false, {0, 0, 0}));
  run.frames.push_back(frame(0, 1, true, {true, false, false}, 5.0, true, {9, 1, 1}));
  run.frames.push_back(frame(0, 2, true, {true, false, false}, 6.0, true, {2, 4, 1}));
  run.frames.push_back(frame(0, 3, true, {true, false, false}, 2.5, false, {0, 0, 0}));
  // Clean trajectory: four frames, one false alarm.
  run.frames.push_back(frame(1, 0, false, {false, false, false}, 0.5, false, {0, 0, 0}));
  run.frames.push_back(frame(1, 1, false, {false, false, false}, 3.0, true, {1, 1, 1}));
  run.frames.push_back(frame(1, 2, false, {false, false, false}, 0.2, false, {0, 0, 0}));
  run.frames.push_back(frame(1, 3, false, {false, false, false}, 0.1, false, {0, 0, 0}));

  auto s = summarize(run, 0);
  // OOD scores {5, 6, 2.5} against clean {1, 0.5, 3, 0.2, 0.1}: 14 of 15 pairs won.
  CHECK(s.roc.auc == doctest::Approx(14.0 / 15.0));
  CHECK(s.det_sr.at("dynamic_obstacle") == 100.0);
  CHECK(s.det_sr.at("blackout") == 0.0);
  CHECK(s.n.at("dynamic_obstacle") == 1);
  CHECK(s.fp_frame_rate == doctest::Approx(0.25));
  CHECK(s.fp_traj_rate == 1.0);
  CHECK(s.side_frames == 2);
  CHECK(s.side_top_rate == doctest::Approx(0.5));
  REQUIRE(s.side_bin_roc);
  // Left-bin scores in the failure trajectory: positives {9, 2, 0}, negative {0}.
  CHECK(s.side_bin_roc->auc == doctest::Approx(2.5 / 3.0));
  CHECK_THROWS_AS(summarize(run, 1), Error);
}

TEST_CASE("trials with a band that never fires detect nothing and match across modes") {
  auto pm = policy::init_policy({}, 4);
  conformal::PredictionBand band;
  band.T = 9;
  band.mu.assign(10, 0.0);
  band.w = std::numeric_limits<double>::infinity();
  TrialConfig cfg;
  cfg.n_per_failure = 1;
  cfg.budget = 20;
  auto a = run_trials(pm, band, recovery::Selection::informed, cfg);
  auto b = run_trials(pm, band, recovery::Selection::blind, cfg);
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].kind == cfg.kinds[i]);
    CHECK_FALSE(a[i].detected);
    CHECK_FALSE(a[i].handled);
    CHECK(a[i].macros == 0);
    CHECK(a[i].seed == b[i].seed);
    CHECK(a[i].progress == b[i].progress);
  }
  CHECK(a[0].recoverable == false);
  CHECK(a[1].recoverable == true);
  CHECK(a[2].recoverable == false);
  CHECK(a[3].recoverable == true);
  for (const auto& row : summarize_trials(a, cfg)) {
    CHECK(row.det_sr == 0.0);
    CHECK(row.han_sr == 0.0);
    CHECK(std::isnan(row.mean_time_s));
  }
  CHECK(std::isnan(pooled_recovery_time(a)));
}

TEST_CASE("trial metrics from hand-built results") {
  TrialConfig cfg;
  cfg.kinds = {sim::FailureKind::blackout, sim::FailureKind::dynamic_obstacle};
  std::vector<TrialResult> rs(4);
  rs[0].kind = sim::FailureKind::blackout;
  rs[0].detected = rs[0].handled = rs[0].got_help = true;
  rs[1].kind = sim::FailureKind::blackout;
  rs[2].kind = sim::FailureKind::dynamic_obstacle;
  rs[2].recoverable = rs[2].detected = rs[2].handled = true;
  rs[2].recovery_time_s = 1.5;
  rs[3].kind = sim::FailureKind::dynamic_obstacle;
  rs[3].recoverable = rs[3].detected = true;
  auto rows = summarize_trials(rs, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].kind == "blackout");
  CHECK(rows[0].det_sr == 50.0);
  CHECK(rows[0].han_sr == 50.0);
  CHECK(rows[1].det_sr == 100.0);
  CHECK(rows[1].han_sr == 50.0);
  CHECK(rows[1].mean_time_s == 1.5);
  CHECK(pooled_recovery_time(rs) == 1.5);
}

TEST_CASE("reports: header-only CSV, byte-identical rewrite, PGM") {
  auto dir = scratch_dir("report");
  TrialConfig cfg;
  write_trial_report({}, cfg, "informed", dir.string());
  CHECK(slurp(dir / "metrics_informed.csv") == std::string(kMetricsHeader) + "\n");

  std::vector<TrialResult> rs(1);
  rs[0].kind = sim::FailureKind::dynamic_obstacle;
  rs[0].recoverable = rs[0].detected = rs[0].handled = true;
  rs[0].recovery_time_s = 0.1 + 0.2;
  write_trial_report(rs, cfg, "blind", dir.string());
  auto first = slurp(dir / "metrics_blind.csv");
  auto first_raw = slurp(dir / "trials_blind.csv");
  write_trial_report(rs, cfg, "blind", dir.string());
  CHECK(slurp(dir / "metrics_blind.csv") == first);
  CHECK(slurp(dir / "trials_blind.csv") == first_raw);
  CHECK(first.rfind(kMetricsHeader, 0) == 0);

  model::Heatmap m = filled(2, 3, 0.0);
  m.values = {0.0, 1.0, 2.0, 3.0, 4.0, 4.0};
  write_pgm(m, (dir / "m.pgm").string());
  auto pgm = slurp(dir / "m.pgm");
  const std::string head = "P5\n3 2\n255\n";
  REQUIRE(pgm.size() == head.size() + 6);
  CHECK(pgm.substr(0, head.size()) == head);
  CHECK(static_cast<unsigned char>(pgm[head.size()]) == 0);
  CHECK(static_cast<unsigned char>(pgm[head.size() + 5]) == 255);
  CHECK(static_cast<unsigned char>(pgm[head.size() + 4]) == 255);

  CHECK(fmt(std::nan("")) == "nan");
  CHECK(fmt(0.5) == fmt(0.25 + 0.25));
  std::filesystem::remove_all(dir);
}
