#include "eval/detection.hpp"

#include <algorithm>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"

namespace fare::eval {

namespace {

constexpr sim::Layout kLayouts[] = {sim::Layout::corridor, sim::Layout::plaza, sim::Layout::park};

std::size_t side_bin(sim::Side s) { return s == sim::Side::left ? 0 : s == sim::Side::right ? 2 : 1; }

}  // namespace

std::string failure_group(const std::optional<sim::FailureSpec>& f) {
  if (!f) return "clean";
  switch (f->kind) {
    case sim::FailureKind::blackout: return "blackout";
    case sim::FailureKind::blocked_local_minima:
    case sim::FailureKind::blocked_dead_end: return "blocked_path";
    case sim::FailureKind::dynamic_obstacle: return "dynamic_obstacle";
  }
  return "clean";
}

const std::vector<std::string>& failure_groups() {
  static const std::vector<std::string> g{"blackout", "blocked_path", "dynamic_obstacle"};
  return g;
}

std::vector<TestTrajectory> build_test_set(const TestSetConfig& cfg) {
  if (cfg.trigger_step < 1 || static_cast<std::size_t>(cfg.trigger_step) >= cfg.length)
    throw Error(Errc::invalid_argument, "failure trigger must fall inside the trajectory");
  std::vector<TestTrajectory> out;
  std::size_t per_kind[3] = {0, 0, 0};
  std::size_t blocked = 0;
  const std::size_t total = cfg.n_fail + cfg.n_normal;
  for (std::size_t i = 0; i < total; ++i) {
    TestTrajectory t;
    t.id = i;
    t.seed = derive_seed(cfg.seed, i);
    t.layout = kLayouts[i % 3];
    auto world = sim::build_world(t.layout, t.seed, cfg.sim);
    Rng rng(derive_seed(t.seed, 0x57A7));
    const double travel = static_cast<double>(cfg.length) * cfg.sim.dt * cfg.sim.v_max;
    t.start_s = uniform(rng, 1.0, std::max(1.5, world.path.length() - travel - 3.0));
    if (i < cfg.n_fail) {
      const std::size_t g = i % 3;
      sim::FailureSpec f;
      f.trigger_step = cfg.trigger_step;
      f.side = per_kind[g] % 2 == 0 ? sim::Side::left : sim::Side::right;
      if (g == 0) f.kind = sim::FailureKind::blackout;
      if (g == 1) f.kind = blocked++ % 2 == 0 ? sim::FailureKind::blocked_local_minima : sim::FailureKind::blocked_dead_end;
      if (g == 2) f.kind = sim::FailureKind::dynamic_obstacle;
      ++per_kind[g];
      t.failure = f;
    }
    out.push_back(t);
  }
  return out;
}

void replay(const TestTrajectory& tt, const TestSetConfig& cfg,
            const std::function<void(std::size_t, const sim::WorldState&, const Image&, const ActionCmd&)>& fn) {
  auto w = sim::build_world(tt.layout, tt.seed, cfg.sim);
  sim::place_robot(w, tt.start_s);
  if (tt.failure) sim::inject_failure(w, *tt.failure);
  for (std::size_t t = 0; t < cfg.length; ++t) {
    Image img = sim::render(w);
    ActionCmd a = sim::expert_action(w);
    fn(t, w, img, a);
    sim::step(w, a);
  }
}

DetectionRun run_detection(const TestSetConfig& cfg, const std::vector<std::string>& methods,
                           const Artifacts& artifacts, const std::map<std::string, conformal::PredictionBand>& bands,
                           std::size_t workers) {
  if (methods.empty()) throw Error(Errc::invalid_argument, "no methods to evaluate");
  for (const auto& m : methods)
    if (!bands.count(m)) throw Error(Errc::state, "no band for method '" + m + "'");
  DetectionRun run;
  run.config = cfg;
  run.methods = methods;
  run.trajectories = build_test_set(cfg);
  const std::size_t n_traj = run.trajectories.size(), M = methods.size();
  workers = std::max<std::size_t>(1, std::min(workers, n_traj));

  std::vector<std::vector<std::unique_ptr<Detector>>> detectors(workers);
  for (auto& set : detectors)
    for (const auto& m : methods) set.push_back(make_detector(m, artifacts));
  std::vector<const conformal::PredictionBand*> band_of;
  for (const auto& m : methods) band_of.push_back(&bands.at(m));

  std::vector<std::vector<FrameRecord>> per_traj(n_traj);
  std::vector<std::vector<Snapshot>> snaps(n_traj);
  parallel_for(n_traj, workers, [&](std::size_t i, std::size_t worker) {
    const auto& tt = run.trajectories[i];
    auto& dets = detectors[worker];
    std::vector<char> snapped(M, 0);
    replay(tt, cfg, [&](std::size_t t, const sim::WorldState& w, const Image& img, const ActionCmd& a) {
      FrameRecord r;
      r.traj = tt.id;
      r.t = t;
      r.ood = tt.failure && static_cast<long>(t) >= tt.failure->trigger_step;
      if (r.ood) r.gt_bins = sim::failure_bins(w);
      r.score.resize(M);
      r.flagged.resize(M);
      r.bin_score.resize(M);
      for (std::size_t m = 0; m < M; ++m) {
        const double s = dets[m]->score(img.pixels, a);
        const bool flag = conformal::is_ood(s, t, *band_of[m]);
        r.score[m] = s;
        r.flagged[m] = flag;
        r.bin_score[m] = {0.0, 0.0, 0.0};
        if (!flag || !dets[m]->has_heatmap()) continue;
        auto hm = dets[m]->heatmap(img.pixels);
        for (std::size_t k = 0; k < 3; ++k) r.bin_score[m][k] = per_bin_score(true, hm, k);
        if (r.ood && !snapped[m]) {
          snapped[m] = 1;
          snaps[i].push_back({methods[m], tt.id, t, std::move(hm)});
        }
      }
      per_traj[i].push_back(std::move(r));
    });
  });
  for (std::size_t i = 0; i < n_traj; ++i) {
    for (auto& r : per_traj[i]) run.frames.push_back(std::move(r));
    for (auto& s : snaps[i]) run.snapshots.push_back(std::move(s));
  }
  return run;
}

MethodSummary summarize(const DetectionRun& run, std::size_t mi) {
  if (mi >= run.methods.size()) throw Error(Errc::invalid_argument, "method index out of range");
  MethodSummary s;
  s.method = run.methods[mi];
  s.has_heatmap = s.method != "rnd";

  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& f : run.frames) {
    scores.push_back(f.score[mi]);
    labels.push_back(f.ood);
  }
  s.roc = roc_auc(scores, labels);

  std::map<std::string, std::size_t> detected;
  std::size_t clean_frames = 0, clean_flagged = 0, clean_traj = 0, clean_traj_flagged = 0;
  std::size_t fi = 0;
  for (const auto& tt : run.trajectories) {
    const std::string g = failure_group(tt.failure);
    bool any_after = false, any = false;
    for (; fi < run.frames.size() && run.frames[fi].traj == tt.id; ++fi) {
      const auto& f = run.frames[fi];
      any |= f.flagged[mi] != 0;
      if (f.ood && f.flagged[mi]) any_after = true;
      if (!tt.failure) {
        ++clean_frames;
        clean_flagged += f.flagged[mi] ? 1 : 0;
      }
    }
    if (tt.failure) {
      ++s.n[g];
      detected[g] += any_after ? 1 : 0;
    } else {
      ++clean_traj;
      clean_traj_flagged += any ? 1 : 0;
    }
  }
  for (const auto& g : failure_groups())
    s.det_sr[g] = s.n[g] ? 100.0 * double(detected[g]) / double(s.n[g]) : 0.0;
  if (clean_frames) s.fp_frame_rate = double(clean_flagged) / double(clean_frames);
  if (clean_traj) s.fp_traj_rate = double(clean_traj_flagged) / double(clean_traj);
  if (!s.has_heatmap) return s;

  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> bs;
    std::vector<bool> bl;
    for (const auto& f : run.frames) {
      bs.push_back(f.bin_score[mi][k]);
      bl.push_back(f.gt_bins[k]);
    }
    if (std::count(bl.begin(), bl.end(), true) > 0 && std::count(bl.begin(), bl.end(), false) > 0)
      s.bins[k] = roc_auc(bs, bl);
  }

  std::vector<double> ss;
  std::vector<bool> sl;
  std::size_t top = 0;
  fi = 0;
  for (const auto& tt : run.trajectories) {
    const bool dyn = tt.failure && tt.failure->kind == sim::FailureKind::dynamic_obstacle;
    const std::size_t k = dyn ? side_bin(tt.failure->side) : 0;
    for (; fi < run.frames.size() && run.frames[fi].traj == tt.id; ++fi) {
      if (!dyn) continue;
      const auto& f = run.frames[fi];
      ss.push_back(f.bin_score[mi][k]);
      sl.push_back(f.gt_bins[k]);
      if (!(f.ood && f.flagged[mi] && f.gt_bins[k])) continue;
      ++s.side_frames;
      const auto& b = f.bin_score[mi];
      if (b[k] > b[(k + 1) % 3] && b[k] > b[(k + 2) % 3]) ++top;
    }
  }
  if (s.side_frames) s.side_top_rate = double(top) / double(s.side_frames);
  if (std::count(sl.begin(), sl.end(), true) > 0 && std::count(sl.begin(), sl.end(), false) > 0)
    s.side_bin_roc = roc_auc(ss, sl);
  return s;
}

}  // namespace fare::eval
