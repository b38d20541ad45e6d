#include "sim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/io.hpp"
#include "common/rng.hpp"

namespace fare::sim {

namespace {

constexpr const char* kMagic = "FTRAJ";

// Goes through memory on purpose: g++ 11 at -O3 folds an inline float round trip away.
ActionCmd to_f32(const ActionCmd& a) {
  volatile float v = static_cast<float>(a.v);
  volatile float omega = static_cast<float>(a.omega);
  return {v, omega};
}

Trajectory run_expert(const CollectConfig& cfg, Layout layout, std::uint64_t seed, std::uint32_t stride) {
  WorldState w = build_world(layout, seed, cfg.sim);
  Rng rng(derive_seed(seed, 0xDA7A));
  double travel = static_cast<double>(cfg.episode_steps) * cfg.sim.dt * cfg.sim.v_max * 0.9;
  double s_max = std::max(0.0, w.path.length() - travel - 1.0);
  place_robot(w, uniform(rng, 0.0, s_max));

  Trajectory traj;
  traj.seed = seed;
  traj.layout = layout;
  traj.stride = stride;
  double noise = 0.0;
  int burst = 0;
  double burst_omega = 0.0;
  for (std::size_t t = 0; t < cfg.episode_steps; ++t) {
    ActionCmd label = expert_action(w);
    if (t % stride == 0) {
      Image img = render(w);
      traj.frames.insert(traj.frames.end(), img.pixels.begin(), img.pixels.end());
      // Stored as float32 on disk; round now so that save/load is lossless.
      traj.actions.push_back(to_f32(label));
    }
    if (at_path_end(w)) break;
    noise = cfg.noise_correlation * noise +
            std::sqrt(1.0 - cfg.noise_correlation * cfg.noise_correlation) * cfg.omega_noise * normal(rng);
    if (burst == 0 && uniform(rng, 0.0, 1.0) < cfg.burst_probability) {
      burst = std::uniform_int_distribution<int>(static_cast<int>(cfg.burst_min_steps),
                                                 static_cast<int>(cfg.burst_max_steps))(rng);
      burst_omega = uniform(rng, 0.0, 1.0) < 0.5 ? -cfg.burst_omega : cfg.burst_omega;
    }
    ActionCmd exec{label.v, label.omega + noise};
    if (burst > 0) {
      exec.omega += burst_omega;
      --burst;
    }
    step(w, exec.clamped());
  }
  return traj;
}

}  // namespace

std::size_t Dataset::pair_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

std::span<const float> Dataset::frame(std::size_t traj, std::size_t t) const {
  const auto& tr = trajectories.at(traj);
  if (t >= tr.length()) throw Error(Errc::invalid_argument, "frame index out of range");
  return std::span<const float>(tr.frames).subspan(t * frame_size(), frame_size());
}

std::vector<std::size_t> calibration_indices(std::size_t n_traj, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n_traj);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, 0xCA11B));
  for (std::size_t i = n_traj; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  auto n_calib = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n_traj)));
  idx.resize(std::min(n_calib, n_traj));
  std::sort(idx.begin(), idx.end());
  return idx;
}

CollectedData collect_dataset(const CollectConfig& cfg) {
  if (cfg.n_traj < 10) throw Error(Errc::invalid_argument, "n_traj must be at least 10");
  if (cfg.layouts.empty()) throw Error(Errc::invalid_argument, "layout mix is empty");
  if (!(cfg.calib_fraction > 0.0 && cfg.calib_fraction < 1.0))
    throw Error(Errc::invalid_argument, "calibration fraction must be in (0, 1)");
  if (cfg.train_stride == 0 || cfg.episode_steps == 0)
    throw Error(Errc::invalid_argument, "episode_steps and train_stride must be positive");
  if (cfg.burst_min_steps < 1 || cfg.burst_max_steps < cfg.burst_min_steps)
    throw Error(Errc::invalid_argument, "invalid burst length range");

  auto calib = calibration_indices(cfg.n_traj, cfg.calib_fraction, cfg.seed);
  CollectedData out;
  for (Dataset* d : {&out.train, &out.calib}) {
    d->channels = 1;
    d->height = cfg.sim.image_height;
    d->width = cfg.sim.image_width;
  }
  for (std::size_t i = 0; i < cfg.n_traj; ++i) {
    bool is_calib = std::binary_search(calib.begin(), calib.end(), i);
    Layout layout = cfg.layouts[i % cfg.layouts.size()];
    std::uint64_t seed = derive_seed(cfg.seed, i);
    auto traj = run_expert(cfg, layout, seed, is_calib ? 1 : cfg.train_stride);
    (is_calib ? out.calib : out.train).trajectories.push_back(std::move(traj));
  }
  return out;
}

void save_dataset(const Dataset& data, const std::string& path) {
  auto out = io::open_out(path);
  out << kMagic << "\n";
  out << "version 1\n";
  out << "channels " << data.channels << "\nheight " << data.height << "\nwidth " << data.width << "\n";
  out << "n_traj " << data.trajectories.size() << "\n";
  for (const auto& t : data.trajectories)
    out << "traj " << t.seed << " " << layout_name(t.layout) << " " << t.stride << " " << t.length() << "\n";
  out << "end\n";
  std::vector<float> acts;
  for (const auto& t : data.trajectories) {
    if (t.frames.size() != t.length() * data.frame_size())
      throw Error(Errc::invalid_argument, "trajectory frame count does not match its action count");
    io::write_f32(out, t.frames.data(), t.frames.size());
    acts.clear();
    for (const auto& a : t.actions) {
      acts.push_back(static_cast<float>(a.v));
      acts.push_back(static_cast<float>(a.omega));
    }
    io::write_f32(out, acts.data(), acts.size());
  }
  if (!out) throw Error(Errc::io, "write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  auto in = io::open_in(path);
  const std::string what = "dataset '" + path + "'";
  auto rows = io::read_manifest(in, kMagic, what);
  Dataset d;
  std::size_t n_traj = 0;
  bool have_n = false;
  std::vector<std::size_t> lengths;
  for (const auto& r : rows) {
    const auto& key = r[0];
    if (key == "version") {
      if (r.size() != 2 || r[1] != "1") throw Error(Errc::format, what + ": unsupported version");
    } else if (key == "channels" && r.size() == 2) {
      d.channels = io::parse_uint(r[1], what);
    } else if (key == "height" && r.size() == 2) {
      d.height = io::parse_uint(r[1], what);
    } else if (key == "width" && r.size() == 2) {
      d.width = io::parse_uint(r[1], what);
    } else if (key == "n_traj" && r.size() == 2) {
      n_traj = io::parse_uint(r[1], what);
      have_n = true;
    } else if (key == "traj" && r.size() == 5) {
      Trajectory t;
      t.seed = io::parse_uint(r[1], what);
      try {
        t.layout = parse_layout(r[2]);
      } catch (const Error&) {
        throw Error(Errc::format, what + ": unknown layout '" + r[2] + "'");
      }
      t.stride = static_cast<std::uint32_t>(io::parse_uint(r[3], what));
      lengths.push_back(io::parse_uint(r[4], what));
      d.trajectories.push_back(std::move(t));
    } else {
      throw Error(Errc::format, what + ": unexpected manifest line '" + key + "'");
    }
  }
  if (!have_n || n_traj != d.trajectories.size())
    throw Error(Errc::format, what + ": n_traj does not match trajectory entries");
  if (d.frame_size() == 0 || d.frame_size() > (1u << 24)) throw Error(Errc::format, what + ": bad frame shape");
  for (std::size_t i = 0; i < n_traj; ++i) {
    auto& t = d.trajectories[i];
    std::size_t len = lengths[i];
    if (len > (1u << 24)) throw Error(Errc::format, what + ": trajectory too long");
    t.frames.resize(len * d.frame_size());
    io::read_f32(in, t.frames.data(), t.frames.size(), what);
    std::vector<float> acts(2 * len);
    io::read_f32(in, acts.data(), acts.size(), what);
    t.actions.resize(len);
    for (std::size_t k = 0; k < len; ++k) t.actions[k] = {acts[2 * k], acts[2 * k + 1]};
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::format, what + ": trailing bytes");
  return d;
}

}  // namespace fare::sim
