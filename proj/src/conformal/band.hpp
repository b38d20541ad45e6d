#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fare::conformal {

/// T+1 consecutive scores s_0..s_T.
using ScoreSegment = std::vector<double>;

/// Cuts each trajectory into non-overlapping windows of T+1 scores; a
/// trailing remainder shorter than T+1 is dropped.
std::vector<ScoreSegment> chunk(const std::vector<std::vector<double>>& trajectories, std::size_t T);

/// One-sided band: scores up to mu[t] + w are in-distribution.
struct PredictionBand {
  std::vector<double> mu;
  double w = 0.0;
  double alpha = 0.05;
  std::size_t T = 0;
  std::size_t n_mu = 0;
  std::size_t n_w = 0;

  bool operator==(const PredictionBand&) const = default;
};

/// Index (1-based) of the order statistic used as band width.
std::size_t quantile_index(std::size_t n_w, double alpha);

/// The first floor(n * split_fraction) segments estimate the mean curve, the
/// rest the width.
PredictionBand fit_band(const std::vector<ScoreSegment>& segments, double alpha, double split_fraction = 0.5);
PredictionBand fit_band(const std::vector<ScoreSegment>& mu_split, const std::vector<ScoreSegment>& w_split,
                        double alpha);

/// True when score lies strictly above mu[t mod (T+1)] + w. Non-finite scores count as out of distribution.
bool is_ood(double score, std::size_t t, const PredictionBand& band);

void save_band(const PredictionBand& band, const std::string& path);
PredictionBand load_band(const std::string& path);

}  // namespace fare::conformal
