#include "recovery/recovery.hpp"

#include <algorithm>
#include <cstdio>

#include "common/error.hpp"

namespace fare::recovery {

void RecoveryConfig::validate() const {
  if (!(tau_pix >= 0.0 && tau_pix < 1.0)) throw Error(Errc::invalid_argument, "tau_pix must be in [0, 1)");
  if (!(tau_cnt_fraction >= 0.0 && tau_cnt_fraction < 1.0))
    throw Error(Errc::invalid_argument, "tau_cnt fraction must be in [0, 1)");
  if (t_max_tries < 0 || k_clear < 1 || cache_size < 1 || backtrack_steps < 1 || rotate_steps < 1)
    throw Error(Errc::invalid_argument, "recovery counts must be positive");
}

std::pair<std::size_t, std::size_t> bin_columns(std::size_t width, std::size_t k) {
  if (k > 2) throw Error(Errc::invalid_argument, "bin index must be 0, 1 or 2");
  auto start = [width](std::size_t j) { return (j * width + 2) / 3; };
  return {start(k), start(k + 1)};
}

std::size_t bin_of_column(std::size_t col, std::size_t width) { return std::min<std::size_t>(2, col * 3 / width); }

BinFlags bin_heatmap(const model::Heatmap& m, double tau_pix, const std::array<double, 3>& tau_cnt) {
  if (m.values.size() != m.height * m.width) throw Error(Errc::shape_mismatch, "heatmap size does not match its shape");
  BinFlags out;
  double mx = 0.0;
  for (double v : m.values) {
    if (v < 0.0) throw Error(Errc::invalid_argument, "heatmap values must be non-negative");
    mx = std::max(mx, v);
  }
  if (mx <= 0.0) return out;
  for (std::size_t r = 0; r < m.height; ++r)
    for (std::size_t c = 0; c < m.width; ++c)
      if (m.values[r * m.width + c] / mx > tau_pix) ++out.counts[bin_of_column(c, m.width)];
  for (std::size_t k = 0; k < 3; ++k) out.flags[k] = static_cast<double>(out.counts[k]) > tau_cnt[k];
  return out;
}

BinFlags bin_heatmap(const model::Heatmap& m, double tau_pix, double tau_cnt) {
  return bin_heatmap(m, tau_pix, {tau_cnt, tau_cnt, tau_cnt});
}

BinFlags bin_heatmap(const model::Heatmap& m, const RecoveryConfig& cfg) {
  std::array<double, 3> t{};
  for (std::size_t k = 0; k < 3; ++k) {
    auto [b, e] = bin_columns(m.width, k);
    t[k] = cfg.tau_cnt_fraction * static_cast<double>((e - b) * m.height);
  }
  return bin_heatmap(m, cfg.tau_pix, t);
}

const char* macro_name(MacroKind k) {
  switch (k) {
    case MacroKind::backtrack: return "backtrack";
    case MacroKind::rotate_left: return "rotate_left";
    case MacroKind::rotate_right: return "rotate_right";
    case MacroKind::get_help: return "get_help";
  }
  return "?";
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::normal: return "normal";
    case Mode::recovering: return "recovering";
    case Mode::terminated: return "terminated";
  }
  return "?";
}

void record_action(RecoveryState& s, const ActionCmd& a, const RecoveryConfig& cfg) {
  s.cache.push_back(a);
  while (s.cache.size() > cfg.cache_size) s.cache.pop_front();
}

std::vector<ActionCmd> backtrack_sequence(const RecoveryState& s, const RecoveryConfig& cfg) {
  if (s.cache.empty()) return {kStop};
  std::vector<ActionCmd> out;
  for (auto it = s.cache.rbegin(); it != s.cache.rend() && out.size() < cfg.backtrack_steps; ++it)
    out.push_back(ActionCmd{-it->v, -it->omega}.clamped());
  return out;
}

bool recovery_success(RecoveryState& s, bool b_t, const RecoveryConfig& cfg) {
  if (s.mode != Mode::recovering) return false;
  if (b_t) {
    s.consecutive_clear = 0;
    return false;
  }
  if (++s.consecutive_clear < cfg.k_clear) return false;
  s.mode = Mode::normal;
  s.tries = 0;
  s.consecutive_clear = 0;
  return true;
}

Decision select_action(bool b_t, const BinFlags& flags, RecoveryState& s, const RecoveryConfig& cfg,
                       Selection selection, Rng* rng) {
  if (s.mode == Mode::terminated) throw Error(Errc::state, "recovery has terminated; no further actions");
  Decision d;
  if (!b_t) {
    d.recovered = recovery_success(s, false, cfg);
    return d;
  }
  recovery_success(s, true, cfg);
  d.pass_through = false;
  MacroAction m;
  if (s.tries >= cfg.t_max_tries) {
    m.kind = MacroKind::get_help;
    s.mode = Mode::terminated;
    d.macro = m;
    return d;
  }
  if (selection == Selection::blind) {
    if (!rng) throw Error(Errc::invalid_argument, "blind selection needs a random generator");
    static constexpr MacroKind kinds[] = {MacroKind::backtrack, MacroKind::rotate_left, MacroKind::rotate_right};
    m.kind = kinds[std::uniform_int_distribution<int>(0, 2)(*rng)];
  } else if (flags.right() && !flags.left()) {
    m.kind = MacroKind::rotate_left;
  } else if (flags.left() && !flags.right()) {
    m.kind = MacroKind::rotate_right;
  } else {
    m.kind = MacroKind::backtrack;
  }
  switch (m.kind) {
    case MacroKind::rotate_left:
    case MacroKind::rotate_right: {
      double om = m.kind == MacroKind::rotate_left ? cfg.rotate_omega : -cfg.rotate_omega;
      m.steps.assign(static_cast<std::size_t>(cfg.rotate_steps), ActionCmd{0.0, om});
      break;
    }
    default: {
      m.steps = backtrack_sequence(s, cfg);
      // The replayed actions are consumed so that a repeated backtrack reaches further back.
      std::size_t used = std::min(s.cache.size(), cfg.backtrack_steps);
      s.cache.erase(s.cache.end() - static_cast<long>(used), s.cache.end());
      break;
    }
  }
  ++s.tries;
  s.mode = Mode::recovering;
  d.macro = std::move(m);
  return d;
}

RecoveryController::RecoveryController(const RecoveryConfig& cfg, Selection selection, std::uint64_t seed)
    : cfg_(cfg), selection_(selection), rng_(derive_seed(seed, 0xB11D)) {
  cfg_.validate();
  log_ = "frame,b_t,left,middle,right,action,tries,mode\n";
}

RecoveryController::Tick RecoveryController::tick(long frame, bool b_t, const model::Heatmap* heatmap,
                                                  const ActionCmd& policy_action) {
  if (terminated()) throw Error(Errc::state, "recovery has terminated; no further actions");
  Tick t;
  std::string label;
  if (!queue_.empty()) {
    t.action = queue_.front();
    queue_.pop_front();
    t.in_macro = true;
    label = "macro";
  } else {
    if (b_t && selection_ == Selection::informed) {
      if (!heatmap) throw Error(Errc::invalid_argument, "informed recovery needs a heatmap for OOD frames");
      t.flags = bin_heatmap(*heatmap, cfg_);
    }
    Decision d = select_action(b_t, t.flags, state_, cfg_, selection_, &rng_);
    t.recovered = d.recovered;
    if (d.macro) {
      t.issued = d.macro->kind;
      label = macro_name(d.macro->kind);
      if (d.macro->kind == MacroKind::get_help) {
        t.action = kStop;
      } else {
        queue_.assign(d.macro->steps.begin(), d.macro->steps.end());
        t.action = queue_.front();
        queue_.pop_front();
        t.in_macro = true;
      }
    } else {
      t.action = policy_action;
      record_action(state_, policy_action, cfg_);
      label = "pass";
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%ld,%d,%d,%d,%d,%s,%d,%s\n", frame, b_t ? 1 : 0, t.flags.flags[0] ? 1 : 0,
                t.flags.flags[1] ? 1 : 0, t.flags.flags[2] ? 1 : 0, label.c_str(), state_.tries,
                mode_name(state_.mode));
  log_ += buf;
  return t;
}

std::string RecoveryController::event_log() const { return log_; }

}  // namespace fare::recovery
