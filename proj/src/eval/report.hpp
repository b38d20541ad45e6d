#pragma once

#include <string>
#include <vector>

#include "eval/detection.hpp"
#include "eval/trials.hpp"

namespace fare::eval {

inline constexpr const char* kMetricsHeader = "method,failure_kind,det_sr,han_sr,mean_time_s,n";

/// Fixed-precision number, "nan" for NaN, so reruns are byte-identical.
std::string fmt(double v);

/// 8-bit binary PGM of the map scaled by its maximum (all-zero stays black).
void write_pgm(const model::Heatmap& m, const std::string& path);

/// Writes metrics.csv (detection rows; han_sr and mean_time_s left empty),
/// detection.csv, roc_<method>.csv, bins_<method>_<k>.csv, heatmaps/*.pgm and
/// summary.txt into dir, which is created if needed.
void write_detection_report(const DetectionRun& run, const std::string& dir);

/// Writes trials_<tag>.csv (one row per trial), metrics_<tag>.csv and
/// summary_<tag>.txt; tag is "informed" or "blind".
void write_trial_report(const std::vector<TrialResult>& results, const TrialConfig& cfg, const std::string& tag,
                        const std::string& dir);

/// Table-II-shaped rows: one per (failure kind, method).
std::string trial_table(const std::vector<TrialSummary>& rows, const std::string& method);

}  // namespace fare::eval
