#include "eval/roc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "common/error.hpp"
#include "recovery/recovery.hpp"

namespace fare::eval {

RocCurve roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw Error(Errc::shape_mismatch, "scores and labels differ in length");
  for (double s : scores)
    if (std::isnan(s)) throw Error(Errc::invalid_argument, "ROC scores must not be NaN");
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(Errc::insufficient_data, "ROC needs both positive and negative samples");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve c;
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) ++(labels[order[i]] ? tp : fp);
    c.points.push_back({double(fp) / double(neg), double(tp) / double(pos), s});
  }
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const auto& a = c.points[i - 1];
    const auto& b = c.points[i];
    c.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return c;
}

double per_bin_score(bool b_t, const model::Heatmap& m, std::size_t k) {
  if (k > 2) throw Error(Errc::invalid_argument, "bin index must be 0, 1 or 2");
  if (!b_t) return 0.0;
  if (m.values.size() != m.height * m.width) throw Error(Errc::shape_mismatch, "heatmap size does not match its shape");
  auto [begin, end] = recovery::bin_columns(m.width, k);
  double sum = 0.0;
  for (std::size_t r = 0; r < m.height; ++r)
    for (std::size_t c = begin; c < end; ++c) sum += m.values[r * m.width + c];
  return sum;
}

}  // namespace fare::eval
