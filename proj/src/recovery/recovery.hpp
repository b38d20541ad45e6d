#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "common/rng.hpp"
#include "common/types.hpp"
#include "model/heatmap.hpp"

namespace fare::recovery {

struct RecoveryConfig {
  double tau_pix = 0.5;             // fraction of the per-frame maximum
  double tau_cnt_fraction = 0.05;   // fraction of a bin's pixel count
  int t_max_tries = 6;
  int k_clear = 3;
  std::size_t cache_size = 40;
  std::size_t backtrack_steps = 10;
  double rotate_omega = 0.6;
  int rotate_steps = 8;

  void validate() const;
};

/// Column range [begin, end) of bin k (0 left, 1 middle, 2 right).
std::pair<std::size_t, std::size_t> bin_columns(std::size_t width, std::size_t k);
std::size_t bin_of_column(std::size_t col, std::size_t width);

struct BinFlags {
  std::array<bool, 3> flags{false, false, false};
  std::array<std::size_t, 3> counts{0, 0, 0};

  bool left() const { return flags[0]; }
  bool middle() const { return flags[1]; }
  bool right() const { return flags[2]; }
};

/// Normalizes the map by its maximum, counts pixels above tau_pix per bin and
/// flags bins whose count exceeds tau_cnt[k].
BinFlags bin_heatmap(const model::Heatmap& m, double tau_pix, const std::array<double, 3>& tau_cnt);
BinFlags bin_heatmap(const model::Heatmap& m, double tau_pix, double tau_cnt);
/// Thresholds from the config; tau_cnt is a fraction of each bin's size.
BinFlags bin_heatmap(const model::Heatmap& m, const RecoveryConfig& cfg);

enum class MacroKind { backtrack, rotate_left, rotate_right, get_help };
const char* macro_name(MacroKind k);

struct MacroAction {
  MacroKind kind = MacroKind::backtrack;
  std::vector<ActionCmd> steps;  // open-loop commands; empty only for get_help
};

enum class Mode { normal, recovering, terminated };
const char* mode_name(Mode m);

struct RecoveryState {
  Mode mode = Mode::normal;
  int tries = 0;
  int consecutive_clear = 0;
  std::deque<ActionCmd> cache;  // most recent policy actions, newest at the back
};

enum class Selection { informed, blind };

struct Decision {
  bool pass_through = true;
  std::optional<MacroAction> macro;
  bool recovered = false;  // this clear frame completed a recovery
};

/// Appends an executed policy action to the backtrack cache.
void record_action(RecoveryState& s, const ActionCmd& a, const RecoveryConfig& cfg);

/// Up to backtrack_steps most recent cached actions, newest first, with v and
/// omega negated; a single stop command when the cache is empty.
std::vector<ActionCmd> backtrack_sequence(const RecoveryState& s, const RecoveryConfig& cfg);

/// Clear-frame bookkeeping while recovering: true once b_t has been 0 for
/// k_clear consecutive frames, which also resets tries and the mode.
bool recovery_success(RecoveryState& s, bool b_t, const RecoveryConfig& cfg);

/// One decision. Throws Errc::state once terminated. `rng` drives the blind
/// selection and may be null in informed mode.
Decision select_action(bool b_t, const BinFlags& flags, RecoveryState& s, const RecoveryConfig& cfg,
                       Selection selection = Selection::informed, Rng* rng = nullptr);

/// Closed-loop wrapper: runs macros open-loop to completion, passes policy
/// actions through otherwise and keeps an event log.
class RecoveryController {
 public:
  RecoveryController(const RecoveryConfig& cfg, Selection selection, std::uint64_t seed);

  struct Tick {
    ActionCmd action;
    bool in_macro = false;
    std::optional<MacroKind> issued;
    bool recovered = false;
    BinFlags flags;
  };

  /// frame is the control step index; heatmap is required when b_t is true
  /// and a decision is due.
  Tick tick(long frame, bool b_t, const model::Heatmap* heatmap, const ActionCmd& policy_action);

  const RecoveryState& state() const noexcept { return state_; }
  bool terminated() const noexcept { return state_.mode == Mode::terminated; }
  bool busy() const noexcept { return !queue_.empty(); }
  /// CSV with header frame,b_t,left,middle,right,action,tries,mode.
  std::string event_log() const;

 private:
  RecoveryConfig cfg_;
  Selection selection_;
  Rng rng_;
  RecoveryState state_;
  std::deque<ActionCmd> queue_;
  std::string log_;
};

}  // namespace fare::recovery
