#include "eval/trials.hpp"

#include <cmath>
#include <limits>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"

namespace fare::eval {

namespace {

constexpr sim::Layout kLayouts[] = {sim::Layout::corridor, sim::Layout::plaza, sim::Layout::park};

TrialResult run_one(policy::PolicyRunner& runner, const conformal::PredictionBand& band, recovery::Selection mode,
                    const TrialConfig& cfg, sim::FailureKind kind, std::size_t i, std::size_t kind_index) {
  TrialResult r;
  r.kind = kind;
  r.index = i;
  r.side = i % 2 == 0 ? sim::Side::left : sim::Side::right;
  r.recoverable = sim::is_recoverable(kind);
  r.seed = derive_seed(cfg.seed, (kind_index << 20) + i);

  auto w = sim::build_world(kLayouts[i % 3], r.seed, cfg.sim);
  Rng rng(derive_seed(r.seed, 0x57A7));
  const double travel = static_cast<double>(cfg.trigger_step + cfg.budget) * cfg.sim.dt * cfg.sim.v_max;
  sim::place_robot(w, uniform(rng, 1.0, std::max(1.5, w.path.length() - travel - 2.0)));
  sim::FailureSpec f;
  f.kind = kind;
  f.side = r.side;
  f.trigger_step = cfg.trigger_step;
  sim::inject_failure(w, f);

  recovery::RecoveryController ctl(cfg.recovery, mode, derive_seed(r.seed, 0xB1D));
  double s_trigger = 0.0;
  long last_recover = -1;
  const long end = cfg.trigger_step + cfg.budget;
  for (long t = 0; t < end; ++t) {
    if (t == cfg.trigger_step) s_trigger = w.path.project(w.robot.position());
    Image img = sim::render(w);
    auto out = runner.run(img.pixels);
    const bool b_t = conformal::is_ood(out.score, static_cast<std::size_t>(t), band);
    std::optional<model::Heatmap> hm;
    if (b_t && !ctl.busy() && mode == recovery::Selection::informed) hm = runner.grad_cam(img.pixels);
    auto tick = ctl.tick(t, b_t, hm ? &*hm : nullptr, out.action);
    if (tick.issued) ++r.macros;
    if (t >= cfg.trigger_step && b_t && r.detect_frame < 0) r.detect_frame = t;
    if (tick.recovered && r.detect_frame >= 0) last_recover = t;
    if (tick.issued == recovery::MacroKind::get_help) {
      r.got_help = true;
      if (r.detect_frame >= 0) r.recover_frame = t;
      break;
    }
    sim::step(w, tick.action);
    if (t >= cfg.trigger_step && r.recoverable && last_recover >= 0 &&
        w.path.project(w.robot.position()) >= s_trigger + cfg.progress_goal) {
      r.handled = true;
      r.recover_frame = last_recover;
      break;
    }
  }
  r.progress = w.path.project(w.robot.position()) - s_trigger;
  r.detected = r.detect_frame >= 0;
  if (!r.recoverable) r.handled = r.detected && r.got_help;
  if (!r.handled) r.recover_frame = -1;
  r.recovery_time_s = r.handled ? static_cast<double>(r.recover_frame - r.detect_frame) * cfg.sim.dt
                                : std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace

std::vector<TrialResult> run_trials(const policy::PolicyModel& policy, const conformal::PredictionBand& band,
                                    recovery::Selection mode, const TrialConfig& cfg, std::size_t workers) {
  if (band.mu.empty()) throw Error(Errc::state, "trials need a calibrated band");
  if (cfg.trigger_step < 0 || cfg.budget < 1) throw Error(Errc::invalid_argument, "trial trigger and budget must be positive");
  cfg.recovery.validate();
  const std::size_t n = cfg.kinds.size() * cfg.n_per_failure;
  std::vector<TrialResult> out(n);
  workers = std::max<std::size_t>(1, std::min(workers, std::max<std::size_t>(1, n)));
  std::vector<std::unique_ptr<policy::PolicyRunner>> runners(workers);
  parallel_for(n, workers, [&](std::size_t task, std::size_t worker) {
    if (!runners[worker]) runners[worker] = std::make_unique<policy::PolicyRunner>(policy);
    const std::size_t k = task / cfg.n_per_failure, i = task % cfg.n_per_failure;
    out[task] = run_one(*runners[worker], band, mode, cfg, cfg.kinds[k], i, static_cast<std::size_t>(cfg.kinds[k]));
  });
  return out;
}

std::vector<TrialSummary> summarize_trials(const std::vector<TrialResult>& results, const TrialConfig& cfg) {
  std::vector<TrialSummary> out;
  for (auto kind : cfg.kinds) {
    TrialSummary s;
    s.kind = sim::failure_name(kind);
    std::size_t det = 0, han = 0;
    double time = 0.0;
    for (const auto& r : results) {
      if (r.kind != kind) continue;
      ++s.n;
      det += r.detected ? 1 : 0;
      if (r.handled) {
        ++han;
        time += r.recovery_time_s;
      }
    }
    if (s.n == 0) continue;
    s.det_sr = 100.0 * double(det) / double(s.n);
    s.han_sr = 100.0 * double(han) / double(s.n);
    s.mean_time_s = han ? time / double(han) : std::numeric_limits<double>::quiet_NaN();
    out.push_back(s);
  }
  return out;
}

double pooled_recovery_time(const std::vector<TrialResult>& results) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : results)
    if (r.recoverable && r.handled) {
      sum += r.recovery_time_s;
      ++n;
    }
  return n ? sum / double(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace fare::eval
