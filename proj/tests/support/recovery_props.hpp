#pragma once

#include <string>

#include "common/rng.hpp"
#include "recovery/recovery.hpp"

namespace fare::testing {

struct RecoveryPropertyReport {
  long sequences = 0;
  long decisions = 0;
  long rotate_toward_flag = 0;   // rotate_left with the left bin flagged, or the mirror case
  long too_many_macros = 0;      // episodes with more than t_max_tries + 1 macros
  long help_mismatch = 0;        // get_help issued iff tries >= t_max_tries failed
  long not_absorbing = 0;        // a terminated state accepted another decision
  std::string first_failure;

  bool ok() const { return rotate_toward_flag + too_many_macros + help_mismatch + not_absorbing == 0; }
};

/// Drives select_action with random b_t and flag sequences, in both informed
/// and blind mode, and checks the state-machine invariants on every step.
inline RecoveryPropertyReport check_recovery_properties(long n_sequences, std::uint64_t seed) {
  using namespace recovery;
  RecoveryPropertyReport rep;
  Rng rng(seed);
  for (long i = 0; i < n_sequences; ++i) {
    RecoveryConfig cfg;
    cfg.t_max_tries = static_cast<int>(rng() % 8);
    cfg.k_clear = 1 + static_cast<int>(rng() % 4);
    const Selection sel = (rng() & 1) ? Selection::informed : Selection::blind;
    const double p_ood = uniform(rng, 0.1, 0.95);
    const int len = 20 + static_cast<int>(rng() % 200);
    RecoveryState s;
    for (int k = 0; k < 1 + static_cast<int>(rng() % 30); ++k)
      record_action(s, ActionCmd{uniform(rng, 0, 1), uniform(rng, -1, 1)}, cfg);
    int episode_macros = 0;
    auto fail = [&](long& counter, const char* what) {
      ++counter;
      if (rep.first_failure.empty()) rep.first_failure = std::string(what) + " in sequence " + std::to_string(i);
    };
    for (int t = 0; t < len; ++t) {
      bool b_t = uniform(rng, 0, 1) < p_ood;
      BinFlags f;
      for (auto& x : f.flags) x = (rng() & 1) != 0;
      if (s.mode == Mode::terminated) {
        bool threw = false;
        try {
          select_action(b_t, f, s, cfg, sel, &rng);
        } catch (const std::exception&) {
          threw = true;
        }
        if (!threw) fail(rep.not_absorbing, "decision after termination");
        break;
      }
      const int tries_before = s.tries;
      const Mode mode_before = s.mode;
      Decision d = select_action(b_t, f, s, cfg, sel, &rng);
      ++rep.decisions;
      if (mode_before == Mode::normal) episode_macros = 0;
      if (d.recovered) episode_macros = 0;
      if (!d.macro) continue;
      ++episode_macros;
      if (episode_macros > cfg.t_max_tries + 1) fail(rep.too_many_macros, "macro budget exceeded");
      const bool help = d.macro->kind == MacroKind::get_help;
      if (help != (tries_before >= cfg.t_max_tries)) fail(rep.help_mismatch, "get_help rule broken");
      if (sel == Selection::informed) {
        if (d.macro->kind == MacroKind::rotate_left && f.left()) fail(rep.rotate_toward_flag, "rotated left into flag");
        if (d.macro->kind == MacroKind::rotate_right && f.right())
          fail(rep.rotate_toward_flag, "rotated right into flag");
      }
    }
    ++rep.sequences;
  }
  return rep;
}

}  // namespace fare::testing
