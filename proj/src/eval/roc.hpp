#pragma once

#include <cstddef>
#include <vector>

#include "model/heatmap.hpp"

namespace fare::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // frames with score >= threshold are called positive
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) at +inf to (1,1)
  double auc = 0.0;
};

/// Sweeps a threshold over the distinct scores (tied scores move together)
/// and integrates with the trapezoid rule. Throws unless both labels occur.
RocCurve roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

/// Sum of the heatmap over bin k's columns when b_t is set, else 0.
double per_bin_score(bool b_t, const model::Heatmap& m, std::size_t k);

}  // namespace fare::eval
