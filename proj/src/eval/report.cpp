#include "eval/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common/error.hpp"
#include "common/io.hpp"

namespace fare::eval {

namespace {

void make_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw Error(Errc::io, "cannot create output directory '" + dir + "'");
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  auto out = io::open_out(path);
  out << text;
  if (!out) throw Error(Errc::io, "failed writing '" + path + "'");
}

std::string roc_csv(const RocCurve& c) {
  std::string s = "fpr,tpr,threshold\n";
  for (const auto& p : c.points) s += fmt(p.fpr) + "," + fmt(p.tpr) + "," + (std::isinf(p.threshold) ? "inf" : fmt(p.threshold)) + "\n";
  return s;
}

std::string opt_auc(const std::optional<RocCurve>& c) { return c ? fmt(c->auc) : ""; }

std::string trial_method(const std::string& tag) { return tag == "blind" ? "fare-dec-blind" : "fare-dec"; }

}  // namespace

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_pgm(const model::Heatmap& m, const std::string& path) {
  if (m.values.size() != m.height * m.width) throw Error(Errc::shape_mismatch, "heatmap size does not match its shape");
  double mx = 0.0;
  for (double v : m.values) mx = std::max(mx, v);
  std::string px(m.values.size(), '\0');
  for (std::size_t i = 0; i < px.size(); ++i) {
    double v = mx > 0.0 ? std::clamp(m.values[i] / mx, 0.0, 1.0) : 0.0;
    px[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  auto out = io::open_out(path);
  out << "P5\n" << m.width << " " << m.height << "\n255\n";
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
  if (!out) throw Error(Errc::io, "failed writing '" + path + "'");
}

void write_detection_report(const DetectionRun& run, const std::string& dir) {
  make_dir(dir);
  std::string metrics = std::string(kMetricsHeader) + "\n";
  std::string detection =
      "method,auc,fp_frame_rate,fp_traj_rate,side_top_rate,side_frames,side_bin_auc,bin0_auc,bin1_auc,bin2_auc\n";
  std::ostringstream summary;
  summary << "test set: " << run.config.n_fail << " failure + " << run.config.n_normal << " clean trajectories, "
          << run.config.length << " frames, failure at frame " << run.config.trigger_step << "\n\n";
  summary << "method    AUC    blackout  blocked  dynamic  FP-frames  side-top  side-AUC\n";

  std::vector<MethodSummary> sums;
  for (std::size_t m = 0; m < run.methods.size(); ++m) sums.push_back(summarize(run, m));
  for (const auto& s : sums) {
    for (const auto& g : failure_groups())
      metrics += s.method + "," + g + "," + fmt(s.det_sr.at(g)) + ",,," + std::to_string(s.n.count(g) ? s.n.at(g) : 0) + "\n";
    detection += s.method + "," + fmt(s.roc.auc) + "," + fmt(s.fp_frame_rate) + "," + fmt(s.fp_traj_rate) + "," +
                 (s.has_heatmap ? fmt(s.side_top_rate) : "") + "," + (s.has_heatmap ? std::to_string(s.side_frames) : "") +
                 "," + opt_auc(s.side_bin_roc) + "," + opt_auc(s.bins[0]) + "," + opt_auc(s.bins[1]) + "," +
                 opt_auc(s.bins[2]) + "\n";
    write_text(join(dir, "roc_" + s.method + ".csv"), roc_csv(s.roc));
    for (std::size_t k = 0; k < 3; ++k)
      if (s.bins[k]) write_text(join(dir, "bins_" + s.method + "_" + std::to_string(k) + ".csv"), roc_csv(*s.bins[k]));
    char line[160];
    std::snprintf(line, sizeof line, "%-8s  %.3f  %6.1f    %6.1f   %6.1f   %7.3f    %s    %s\n", s.method.c_str(),
                  s.roc.auc, s.det_sr.at("blackout"), s.det_sr.at("blocked_path"), s.det_sr.at("dynamic_obstacle"),
                  s.fp_frame_rate, s.has_heatmap ? fmt(s.side_top_rate).substr(0, 5).c_str() : "  -  ",
                  s.side_bin_roc ? fmt(s.side_bin_roc->auc).substr(0, 5).c_str() : "  -  ");
    summary << line;
  }
  write_text(join(dir, "metrics.csv"), metrics);
  write_text(join(dir, "detection.csv"), detection);
  write_text(join(dir, "summary.txt"), summary.str());

  const std::string hdir = join(dir, "heatmaps");
  make_dir(hdir);
  for (const auto& s : run.snapshots) {
    char name[128];
    std::snprintf(name, sizeof name, "%s_traj%03zu_t%03zu.pgm", s.method.c_str(), s.traj, s.t);
    write_pgm(s.heatmap, join(hdir, name));
  }
}

std::string trial_table(const std::vector<TrialSummary>& rows, const std::string& method) {
  std::string s = "failure_kind          method          Det.SR  Han.SR  Time(s)  n\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-21s %-15s %6.1f  %6.1f  %7s  %zu\n", r.kind.c_str(), method.c_str(), r.det_sr,
                  r.han_sr, std::isnan(r.mean_time_s) ? "-" : fmt(r.mean_time_s).substr(0, 6).c_str(), r.n);
    s += line;
  }
  return s;
}

void write_trial_report(const std::vector<TrialResult>& results, const TrialConfig& cfg, const std::string& tag,
                        const std::string& dir) {
  make_dir(dir);
  const std::string method = trial_method(tag);
  std::string raw =
      "method,failure_kind,trial,seed,side,recoverable,detected,handled,got_help,detect_frame,recover_frame,"
      "recovery_time_s,macros,progress\n";
  for (const auto& r : results) {
    raw += method + "," + sim::failure_name(r.kind) + "," + std::to_string(r.index) + "," + std::to_string(r.seed) +
           "," + sim::side_name(r.side) + "," + (r.recoverable ? "1" : "0") + "," + (r.detected ? "1" : "0") + "," +
           (r.handled ? "1" : "0") + "," + (r.got_help ? "1" : "0") + "," + std::to_string(r.detect_frame) + "," +
           std::to_string(r.recover_frame) + "," + fmt(r.recovery_time_s) + "," + std::to_string(r.macros) + "," +
           fmt(r.progress) + "\n";
  }
  auto rows = summarize_trials(results, cfg);
  std::string metrics = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows)
    metrics += method + "," + r.kind + "," + fmt(r.det_sr) + "," + fmt(r.han_sr) + "," + fmt(r.mean_time_s) + "," +
               std::to_string(r.n) + "\n";
  write_text(join(dir, "trials_" + tag + ".csv"), raw);
  write_text(join(dir, "metrics_" + tag + ".csv"), metrics);
  std::string summary = trial_table(rows, method);
  summary += "pooled recovery time over recoverable kinds: " + fmt(pooled_recovery_time(results)) + " s\n";
  write_text(join(dir, "summary_" + tag + ".txt"), summary);
}

}  // namespace fare::eval
