#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fare/fare.h"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kRuntime = 4 };

struct Failure {
  int code;
  std::string message;
};

int exit_code(fare_status s) {
  switch (s) {
    case FARE_OK: return kOk;
    case FARE_E_INVALID_ARGUMENT: return kUsage;
    case FARE_E_IO:
    case FARE_E_FORMAT:
    case FARE_E_INSUFFICIENT_DATA: return kData;
    default: return kRuntime;
  }
}

void check(fare_status s, const std::string& what) {
  if (s != FARE_OK) throw Failure{exit_code(s), what + ": " + fare_last_error()};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<fare_dataset, Deleter<fare_dataset, fare_dataset_free>>;
using Model = std::unique_ptr<fare_model, Deleter<fare_model, fare_model_free>>;
using Band = std::unique_ptr<fare_band, Deleter<fare_band, fare_band_free>>;

Dataset load_data(const std::string& path) {
  fare_dataset* d = nullptr;
  check(fare_dataset_load(path.c_str(), &d), "cannot load data '" + path + "'");
  return Dataset(d);
}

Model load_model(const std::string& path) {
  fare_model* m = nullptr;
  check(fare_model_load(path.c_str(), &m), "cannot load weights '" + path + "'");
  return Model(m);
}

Band load_band(const std::string& path) {
  fare_band* b = nullptr;
  check(fare_band_load(path.c_str(), &b), "cannot load band '" + path + "'");
  return Band(b);
}

void ensure_parent(const std::string& file) {
  fs::path p = fs::path(file).parent_path();
  if (!p.empty()) fs::create_directories(p);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Resolved flags, one `key = value` per line, for reproducing a run.
class Echo {
 public:
  explicit Echo(std::string command) { text_ << "command = " << command << "\n"; }
  template <class T>
  Echo& add(const std::string& key, const T& v) {
    text_ << key << " = " << v << "\n";
    return *this;
  }
  void write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text_.str();
    if (!out) throw Failure{kData, "cannot write '" + path.string() + "'"};
  }

 private:
  std::ostringstream text_;
};

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct GenData {
  std::size_t n_traj = 200;
  std::string layouts = "corridor,plaza,park";
  std::uint64_t seed = 1;
  double calib_fraction = 0.2;
  std::string out = "data";
};

void run_gen_data(const GenData& a) {
  fare_collect_options o;
  fare_collect_options_default(&o);
  o.n_traj = a.n_traj;
  o.seed = a.seed;
  o.calib_fraction = a.calib_fraction;
  o.layouts = a.layouts.c_str();
  fare_dataset* tr = nullptr;
  fare_dataset* ca = nullptr;
  check(fare_collect(&o, &tr, &ca), "data generation failed");
  Dataset train(tr), calib(ca);
  fs::create_directories(a.out);
  const std::string tp = (fs::path(a.out) / "train.ftraj").string();
  const std::string cp = (fs::path(a.out) / "calib.ftraj").string();
  check(fare_dataset_save(train.get(), tp.c_str()), "cannot write '" + tp + "'");
  check(fare_dataset_save(calib.get(), cp.c_str()), "cannot write '" + cp + "'");
  Echo e("gen-data");
  e.add("n_traj", a.n_traj).add("layouts", a.layouts).add("seed", a.seed).add("calib_fraction", a.calib_fraction);
  e.add("train", tp).add("calib", cp);
  e.add("train_trajectories", fare_dataset_trajectories(train.get()));
  e.add("calib_trajectories", fare_dataset_trajectories(calib.get()));
  e.write(fs::path(a.out) / "gen-data.config.echo");
  std::printf("train: %zu trajectories, %zu pairs -> %s\n", fare_dataset_trajectories(train.get()),
              fare_dataset_pairs(train.get()), tp.c_str());
  std::printf("calib: %zu trajectories, %zu frames -> %s\n", fare_dataset_trajectories(calib.get()),
              fare_dataset_pairs(calib.get()), cp.c_str());
}

struct Train {
  std::string data = "data/train.ftraj";
  std::string kind = "policy";
  fare_train_options opts{};
  std::string out;
};

void run_train(const Train& a) {
  static const std::map<std::string, fare_model_kind> kinds{
      {"policy", FARE_MODEL_POLICY}, {"ae", FARE_MODEL_AE}, {"vae", FARE_MODEL_VAE}, {"rnd", FARE_MODEL_RND}};
  auto data = load_data(a.data);
  std::vector<double> losses(a.opts.epochs);
  fare_model* raw = nullptr;
  check(fare_train(kinds.at(a.kind), data.get(), &a.opts, &raw, losses.data()), "training failed");
  Model m(raw);
  ensure_parent(a.out);
  check(fare_model_save(m.get(), a.out.c_str()), "cannot write '" + a.out + "'");
  const std::string curve = a.out + ".loss.csv";
  std::ofstream lc(curve, std::ios::binary);
  lc << "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) lc << i + 1 << "," << fmt(losses[i]) << "\n";
  if (!lc) throw Failure{kData, "cannot write '" + curve + "'"};
  Echo e(a.kind == "policy" ? "train" : "train-baseline");
  e.add("kind", a.kind).add("data", a.data).add("epochs", a.opts.epochs).add("batch", a.opts.batch);
  e.add("lr", a.opts.lr).add("seed", a.opts.seed);
  if (a.kind == "policy") e.add("beta", a.opts.beta);
  if (a.kind == "vae") e.add("beta", a.opts.vae_beta);
  e.add("out", a.out).add("loss_curve", curve);
  e.write(a.out + ".config.echo");
  std::printf("%s: %zu epochs, final loss %s -> %s\n", a.kind.c_str(), losses.size(),
              losses.empty() ? "-" : fmt(losses.back()).c_str(), a.out.c_str());
}

struct Calibrate {
  std::vector<std::string> weights;
  std::string method = "fare";
  std::string calib = "data/calib.ftraj";
  std::size_t T = 49;
  double alpha = 0.05;
  std::string out = "fare.band";
};

Band fit_band(const std::vector<Model>& models, const std::string& method, const fare_dataset* calib, std::size_t T,
              double alpha) {
  std::vector<const fare_model*> ptrs;
  for (const auto& m : models) ptrs.push_back(m.get());
  fare_band* b = nullptr;
  check(fare_calibrate(ptrs.data(), ptrs.size(), method.c_str(), calib, T, alpha, &b),
        "calibration of '" + method + "' failed");
  return Band(b);
}

void run_calibrate(const Calibrate& a) {
  std::vector<Model> models;
  for (const auto& w : a.weights) models.push_back(load_model(w));
  auto calib = load_data(a.calib);
  auto band = fit_band(models, a.method, calib.get(), a.T, a.alpha);
  ensure_parent(a.out);
  check(fare_band_save(band.get(), a.out.c_str()), "cannot write '" + a.out + "'");
  Echo e("calibrate");
  e.add("weights", join(a.weights)).add("method", a.method).add("calib", a.calib).add("T", a.T);
  e.add("alpha", a.alpha).add("out", a.out).add("band_width", fmt(fare_band_width(band.get())));
  e.write(a.out + ".config.echo");
  std::printf("%s band: T=%zu alpha=%s width=%s -> %s\n", a.method.c_str(), a.T, fmt(a.alpha).c_str(),
              fmt(fare_band_width(band.get())).c_str(), a.out.c_str());
}

struct Eval {
  std::vector<std::string> weights;
  std::vector<std::string> bands;  // method=path, or a bare path for fare
  std::string methods = "fare";
  std::string calib;               // fits missing bands when given
  std::size_t T = 49;
  double alpha = 0.05;
  fare_eval_options opts{};
  std::string out = "results";
};

void run_eval(const Eval& a) {
  std::vector<Model> models;
  for (const auto& w : a.weights) models.push_back(load_model(w));
  std::map<std::string, std::string> band_paths;
  for (const auto& b : a.bands) {
    auto eq = b.find('=');
    if (eq == std::string::npos) band_paths["fare"] = b;
    else band_paths[b.substr(0, eq)] = b.substr(eq + 1);
  }
  auto names = split(a.methods);
  if (names.empty()) throw Failure{kUsage, "no methods requested"};
  Dataset calib;
  std::vector<Band> bands;
  Echo e("eval");
  e.add("weights", join(a.weights)).add("methods", a.methods).add("seed", a.opts.seed);
  e.add("n_fail", a.opts.n_fail).add("n_normal", a.opts.n_normal);
  for (const auto& m : names) {
    if (band_paths.count(m)) {
      bands.push_back(load_band(band_paths[m]));
      e.add("band." + m, band_paths[m]);
      continue;
    }
    if (a.calib.empty()) throw Failure{kData, "no band for method '" + m + "'; pass --band " + m + "=PATH or --calib"};
    if (!calib) calib = load_data(a.calib);
    bands.push_back(fit_band(models, m, calib.get(), a.T, a.alpha));
    e.add("band." + m, "fitted on " + a.calib + " (T=" + std::to_string(a.T) + ", alpha=" + fmt(a.alpha) + ")");
  }
  std::vector<const fare_model*> mp;
  for (const auto& m : models) mp.push_back(m.get());
  std::vector<const char*> np;
  for (const auto& n : names) np.push_back(n.c_str());
  std::vector<const fare_band*> bp;
  for (const auto& b : bands) bp.push_back(b.get());
  std::vector<fare_detection_summary> sums(names.size());
  check(fare_eval_detection(mp.data(), mp.size(), np.data(), bp.data(), names.size(), &a.opts, a.out.c_str(),
                            sums.data()),
        "evaluation failed");
  e.add("out", a.out);
  e.write(fs::path(a.out) / "eval.config.echo");
  std::printf("method    AUC    blackout  blocked  dynamic  FP-frames\n");
  for (std::size_t i = 0; i < names.size(); ++i)
    std::printf("%-8s  %.3f  %6.1f    %6.1f   %6.1f   %7.3f\n", names[i].c_str(), sums[i].auc, sums[i].det_blackout,
                sums[i].det_blocked, sums[i].det_dynamic, sums[i].fp_frame_rate);
  std::printf("report -> %s\n", a.out.c_str());
}

struct Trials {
  std::string weights = "fare.fwt";
  std::string band = "fare.band";
  std::string mode = "both";
  fare_trial_options opts{};
  std::string out = "results";
};

void run_trials(const Trials& a) {
  auto policy = load_model(a.weights);
  auto band = load_band(a.band);
  std::vector<std::string> modes = a.mode == "both" ? std::vector<std::string>{"informed", "blind"}
                                                    : std::vector<std::string>{a.mode};
  static const char* kinds[] = {"blackout", "blocked_local_minima", "blocked_dead_end", "dynamic_obstacle"};
  for (const auto& mode : modes) {
    fare_trial_summary rows[4]{};
    double pooled = 0.0;
    check(fare_run_trials(policy.get(), band.get(), mode == "informed" ? FARE_RECOVERY_INFORMED : FARE_RECOVERY_BLIND,
                          &a.opts, a.out.c_str(), rows, &pooled),
          "trials failed");
    std::printf("%s: pooled recovery time %s s\n", mode.c_str(), fmt(pooled).c_str());
    for (const auto& r : rows)
      std::printf("  %-21s Det %5.1f  Han %5.1f  time %s  n %zu\n", kinds[r.kind], r.det_sr, r.han_sr,
                  fmt(r.mean_time_s).c_str(), r.n);
  }
  Echo e("trials");
  e.add("weights", a.weights).add("band", a.band).add("mode", a.mode).add("n", a.opts.n_per_failure);
  e.add("seed", a.opts.seed).add("out", a.out);
  e.write(fs::path(a.out) / "trials.config.echo");
}

void add_train_flags(CLI::App* c, Train& t, bool baseline) {
  c->add_option("--data", t.data, "training data file")->capture_default_str();
  c->add_option("--epochs", t.opts.epochs, "passes over the data")->capture_default_str();
  c->add_option("--batch", t.opts.batch, "minibatch size")->capture_default_str();
  c->add_option("--lr", t.opts.lr, "Adam learning rate")->capture_default_str();
  c->add_option("--seed", t.opts.seed, "initialization and shuffling seed")->capture_default_str();
  if (baseline) {
    c->add_option("--kind", t.kind, "baseline model")->required()->check(CLI::IsMember({"ae", "vae", "rnd"}));
    c->add_option("--beta", t.opts.vae_beta, "KL weight of the VAE")->capture_default_str();
    c->add_option("--out", t.out, "weights file (default <kind>.fwt)");
  } else {
    c->add_option("--beta", t.opts.beta, "KL weight of the information bottleneck")->capture_default_str();
    c->add_option("--out", t.out, "weights file")->capture_default_str();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure-aware visual navigation: data, training, calibration, evaluation and recovery trials.\n"
               "FARE_THREADS caps worker threads (default: all cores)."};
  app.require_subcommand(1);

  GenData gd;
  auto* c_gen = app.add_subcommand("gen-data", "record expert demonstrations (train and calibration split)");
  c_gen->add_option("--n-traj", gd.n_traj, "demonstration trajectories")->capture_default_str();
  c_gen->add_option("--layouts", gd.layouts, "comma list of corridor, plaza, park")->capture_default_str();
  c_gen->add_option("--seed", gd.seed, "world and noise seed")->capture_default_str();
  c_gen->add_option("--calib-fraction", gd.calib_fraction, "share held out for calibration")->capture_default_str();
  c_gen->add_option("--out", gd.out, "output directory")->capture_default_str();

  Train tp;
  fare_train_options_default(&tp.opts);
  tp.out = "fare.fwt";
  auto* c_train = app.add_subcommand("train", "train the navigation policy with the information bottleneck");
  add_train_flags(c_train, tp, false);

  Train tb;
  fare_train_options_default(&tb.opts);
  auto* c_base = app.add_subcommand("train-baseline", "train an AE, VAE or RND detector");
  add_train_flags(c_base, tb, true);

  Calibrate ca;
  auto* c_cal = app.add_subcommand("calibrate", "fit the conformal band of a scoring method");
  c_cal->add_option("--weights", ca.weights, "weights file(s) the method needs")->required();
  c_cal->add_option("--method", ca.method, "fare, ae, vae-r, vae-kl or rnd")->capture_default_str();
  c_cal->add_option("--calib", ca.calib, "calibration data file")->capture_default_str();
  c_cal->add_option("--T", ca.T, "segment horizon (segments hold T+1 frames)")->capture_default_str();
  c_cal->add_option("--alpha", ca.alpha, "miscoverage level")->capture_default_str();
  c_cal->add_option("--out", ca.out, "band file")->capture_default_str();

  Eval ev;
  fare_eval_options_default(&ev.opts);
  auto* c_eval = app.add_subcommand("eval", "detection and recognition on the injected-failure test set");
  c_eval->add_option("--weights", ev.weights, "weights files of the evaluated models")->required();
  c_eval->add_option("--band", ev.bands, "METHOD=PATH band file (a bare path is the fare band)");
  c_eval->add_option("--methods", ev.methods, "comma list of fare, ae, vae-r, vae-kl, rnd")->capture_default_str();
  c_eval->add_option("--calib", ev.calib, "calibration data used to fit bands not given with --band");
  c_eval->add_option("--T", ev.T, "segment horizon for fitted bands")->capture_default_str();
  c_eval->add_option("--alpha", ev.alpha, "miscoverage level for fitted bands")->capture_default_str();
  c_eval->add_option("--n-fail", ev.opts.n_fail, "failure trajectories")->capture_default_str();
  c_eval->add_option("--n-normal", ev.opts.n_normal, "clean trajectories")->capture_default_str();
  c_eval->add_option("--seed", ev.opts.seed, "test set seed")->capture_default_str();
  c_eval->add_option("--out", ev.out, "report directory")->capture_default_str();

  Trials tr;
  fare_trial_options_default(&tr.opts);
  auto* c_trials = app.add_subcommand("trials", "closed-loop recovery trials, informed and/or blind");
  c_trials->add_option("--weights", tr.weights, "policy weights")->capture_default_str();
  c_trials->add_option("--band", tr.band, "fare band file")->capture_default_str();
  c_trials->add_option("--mode", tr.mode, "informed, blind or both")
      ->check(CLI::IsMember({"informed", "blind", "both"}))
      ->capture_default_str();
  c_trials->add_option("--n", tr.opts.n_per_failure, "trials per failure kind")->capture_default_str();
  c_trials->add_option("--seed", tr.opts.seed, "trial seed")->capture_default_str();
  c_trials->add_option("--out", tr.out, "report directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*c_gen) run_gen_data(gd);
    if (*c_train) run_train(tp);
    if (*c_base) {
      if (tb.out.empty()) tb.out = tb.kind + ".fwt";
      run_train(tb);
    }
    if (*c_cal) run_calibrate(ca);
    if (*c_eval) run_eval(ev);
    if (*c_trials) run_trials(tr);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
