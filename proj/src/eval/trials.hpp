#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conformal/band.hpp"
#include "policy/policy.hpp"
#include "recovery/recovery.hpp"
#include "sim/world.hpp"

namespace fare::eval {

struct TrialConfig {
  std::size_t n_per_failure = 10;
  std::uint64_t seed = 11;
  long trigger_step = 80;
  long budget = 300;            // steps allowed after the trigger
  double progress_goal = 2.0;   // path progress past the trigger position that counts as resumed
  recovery::RecoveryConfig recovery;
  sim::SimConfig sim;
  std::vector<sim::FailureKind> kinds{sim::FailureKind::blackout, sim::FailureKind::blocked_local_minima,
                                      sim::FailureKind::blocked_dead_end, sim::FailureKind::dynamic_obstacle};
};

struct TrialResult {
  sim::FailureKind kind = sim::FailureKind::blackout;
  sim::Side side = sim::Side::left;
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool recoverable = false;
  bool detected = false;  // some frame from the trigger on was flagged
  bool handled = false;   // recoverable: recovered and resumed progress; otherwise: asked for help
  bool got_help = false;
  long detect_frame = -1;
  long recover_frame = -1;  // last recovery before progress resumed, or the help request
  double recovery_time_s = 0.0;
  int macros = 0;
  double progress = 0.0;  // path progress at the end relative to the trigger position
};

/// The policy drives, the band flags frames, and the recovery controller
/// (informed or blind) overrides actions. World seeds depend only on the
/// config, so informed and blind runs see identical worlds.
std::vector<TrialResult> run_trials(const policy::PolicyModel& policy, const conformal::PredictionBand& band,
                                    recovery::Selection mode, const TrialConfig& cfg, std::size_t workers = 1);

struct TrialSummary {
  std::string kind;
  std::size_t n = 0;
  double det_sr = 0.0;       // percent of all trials
  double han_sr = 0.0;       // percent of all trials
  double mean_time_s = 0.0;  // over handled trials; NaN when none
};

/// One row per configured kind that has results.
std::vector<TrialSummary> summarize_trials(const std::vector<TrialResult>& results, const TrialConfig& cfg);

/// Mean recovery time over handled trials of recoverable kinds; NaN when none.
double pooled_recovery_time(const std::vector<TrialResult>& results);

}  // namespace fare::eval
