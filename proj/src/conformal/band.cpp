#include "conformal/band.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "common/error.hpp"
#include "common/io.hpp"

namespace fare::conformal {

std::vector<ScoreSegment> chunk(const std::vector<std::vector<double>>& trajectories, std::size_t T) {
  if (T < 1) throw Error(Errc::invalid_argument, "segment length T must be at least 1");
  std::vector<ScoreSegment> out;
  const std::size_t len = T + 1;
  for (const auto& traj : trajectories) {
    for (std::size_t start = 0; start + len <= traj.size(); start += len)
      out.emplace_back(traj.begin() + static_cast<long>(start), traj.begin() + static_cast<long>(start + len));
  }
  return out;
}

std::size_t quantile_index(std::size_t n_w, double alpha) {
  double k = std::ceil(static_cast<double>(n_w + 1) * (1.0 - alpha) - 1e-12);
  return static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(n_w)));
}

PredictionBand fit_band(const std::vector<ScoreSegment>& mu_split, const std::vector<ScoreSegment>& w_split,
                        double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::invalid_argument, "alpha must be in (0, 1)");
  if (mu_split.size() < 2 || w_split.size() < 2)
    throw Error(Errc::insufficient_data, "insufficient segments: need at least 2 in each calibration split, got " +
                                             std::to_string(mu_split.size()) + " and " +
                                             std::to_string(w_split.size()));
  const std::size_t len = mu_split.front().size();
  if (len < 2) throw Error(Errc::invalid_argument, "segments must hold at least two scores");
  for (const auto* split : {&mu_split, &w_split}) {
    for (const auto& s : *split) {
      if (s.size() != len) throw Error(Errc::shape_mismatch, "segments differ in length");
      for (double v : s)
        if (!std::isfinite(v)) throw Error(Errc::invalid_argument, "calibration scores must be finite");
    }
  }

  PredictionBand band;
  band.alpha = alpha;
  band.T = len - 1;
  band.n_mu = mu_split.size();
  band.n_w = w_split.size();
  band.mu.assign(len, 0.0);
  // Sum in sorted order per timestep so that the result does not depend on segment order.
  std::vector<double> column(mu_split.size());
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t j = 0; j < mu_split.size(); ++j) column[j] = mu_split[j][t];
    std::sort(column.begin(), column.end());
    double s = 0.0;
    for (double v : column) s += v;
    band.mu[t] = s / static_cast<double>(mu_split.size());
  }

  std::vector<double> dev;
  dev.reserve(w_split.size());
  for (const auto& seg : w_split) {
    double d = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) d = std::max(d, seg[t] - band.mu[t]);
    dev.push_back(d);
  }
  std::sort(dev.begin(), dev.end());
  band.w = std::max(0.0, dev[quantile_index(dev.size(), alpha) - 1]);
  return band;
}

PredictionBand fit_band(const std::vector<ScoreSegment>& segments, double alpha, double split_fraction) {
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw Error(Errc::invalid_argument, "split fraction must be in (0, 1)");
  auto n_mu = static_cast<std::size_t>(std::floor(split_fraction * static_cast<double>(segments.size())));
  std::vector<ScoreSegment> a(segments.begin(), segments.begin() + static_cast<long>(n_mu));
  std::vector<ScoreSegment> b(segments.begin() + static_cast<long>(n_mu), segments.end());
  return fit_band(a, b, alpha);
}

bool is_ood(double score, std::size_t t, const PredictionBand& band) {
  if (band.mu.empty()) throw Error(Errc::state, "prediction band is not fitted");
  double bound = band.mu[t % band.mu.size()] + band.w;
  return !(score <= bound);
}

void save_band(const PredictionBand& band, const std::string& path) {
  if (band.mu.size() != band.T + 1) throw Error(Errc::invalid_argument, "band mean curve length must be T+1");
  auto out = io::open_out(path, false);
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "FBAND\nversion 1\nalpha " << num(band.alpha) << "\nT " << band.T << "\nw " << num(band.w) << "\nn_mu "
      << band.n_mu << "\nn_w " << band.n_w << "\nend\n";
  for (double m : band.mu) out << num(m) << "\n";
  if (!out) throw Error(Errc::io, "write failed for '" + path + "'");
}

PredictionBand load_band(const std::string& path) {
  auto in = io::open_in(path, false);
  const std::string what = "band '" + path + "'";
  auto rows = io::read_manifest(in, "FBAND", what);
  PredictionBand b;
  bool seen[6] = {};
  for (const auto& r : rows) {
    if (r.size() != 2) throw Error(Errc::format, what + ": malformed manifest line");
    const auto& k = r[0];
    if (k == "version") {
      if (r[1] != "1") throw Error(Errc::format, what + ": unsupported version");
      seen[0] = true;
    } else if (k == "alpha") {
      b.alpha = io::parse_double(r[1], what);
      seen[1] = true;
    } else if (k == "T") {
      b.T = io::parse_uint(r[1], what);
      seen[2] = true;
    } else if (k == "w") {
      b.w = io::parse_double(r[1], what);
      seen[3] = true;
    } else if (k == "n_mu") {
      b.n_mu = io::parse_uint(r[1], what);
      seen[4] = true;
    } else if (k == "n_w") {
      b.n_w = io::parse_uint(r[1], what);
      seen[5] = true;
    } else {
      throw Error(Errc::format, what + ": unexpected key '" + k + "'");
    }
  }
  if (!std::all_of(std::begin(seen), std::end(seen), [](bool s) { return s; }))
    throw Error(Errc::format, what + ": manifest incomplete");
  if (b.T < 1 || b.T > (1u << 20) || !(b.alpha > 0 && b.alpha < 1) || !(b.w >= 0) || !std::isfinite(b.w))
    throw Error(Errc::format, what + ": invalid band parameters");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    b.mu.push_back(io::parse_double(line, what));
  }
  if (b.mu.size() != b.T + 1) throw Error(Errc::format, what + ": expected T+1 mean values");
  return b;
}

}  // namespace fare::conformal
