#include "fare/fare.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "conformal/band.hpp"
#include "eval/detection.hpp"
#include "eval/report.hpp"
#include "eval/trials.hpp"
#include "model/model_file.hpp"
#include "policy/policy.hpp"
#include "sim/dataset.hpp"

using namespace fare;

struct fare_dataset {
  sim::Dataset data;
};

struct fare_model {
  std::variant<policy::PolicyModel, baselines::AeModel, baselines::RndModel> m;
  fare_model_kind kind = FARE_MODEL_POLICY;
};

struct fare_band {
  conformal::PredictionBand band;
};

struct fare_runner {
  policy::PolicyRunner runner;
  std::size_t frame_size;
};

namespace {

thread_local std::string g_last_error;

fare_status to_status(Errc c) {
  switch (c) {
    case Errc::invalid_argument: return FARE_E_INVALID_ARGUMENT;
    case Errc::shape_mismatch: return FARE_E_SHAPE;
    case Errc::io: return FARE_E_IO;
    case Errc::format: return FARE_E_FORMAT;
    case Errc::insufficient_data: return FARE_E_INSUFFICIENT_DATA;
    case Errc::state: return FARE_E_STATE;
    case Errc::runtime: return FARE_E_RUNTIME;
  }
  return FARE_E_RUNTIME;
}

// Runs fn and turns exceptions into status codes plus a thread-local message.
template <class F>
fare_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FARE_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FARE_E_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FARE_E_RUNTIME;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw Error(Errc::invalid_argument, std::string(what) + " must not be null");
}

std::size_t threads_or_default(std::size_t t) { return t ? t : thread_count(); }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

eval::Artifacts gather(const fare_model* const* models, std::size_t n) {
  if (n) need(models, "models");
  eval::Artifacts a;
  for (std::size_t i = 0; i < n; ++i) {
    need(models[i], "model");
    const auto& m = models[i]->m;
    switch (models[i]->kind) {
      case FARE_MODEL_POLICY: a.policy = std::get<policy::PolicyModel>(m); break;
      case FARE_MODEL_AE: a.ae = std::get<baselines::AeModel>(m); break;
      case FARE_MODEL_VAE: a.vae = std::get<baselines::AeModel>(m); break;
      case FARE_MODEL_RND: a.rnd = std::get<baselines::RndModel>(m); break;
    }
  }
  return a;
}

model::TrainOptions train_options(const fare_train_options& o) {
  model::TrainOptions t;
  t.epochs = o.epochs;
  t.batch = o.batch;
  t.lr = o.lr;
  t.seed = o.seed;
  return t;
}

const policy::PolicyModel& as_policy(const fare_model* m) {
  need(m, "policy");
  if (m->kind != FARE_MODEL_POLICY) throw Error(Errc::invalid_argument, "model is not a policy");
  return std::get<policy::PolicyModel>(m->m);
}

}  // namespace

extern "C" {

const char* fare_last_error(void) { return g_last_error.c_str(); }

const char* fare_status_name(fare_status s) {
  switch (s) {
    case FARE_OK: return "ok";
    case FARE_E_INVALID_ARGUMENT: return "invalid argument";
    case FARE_E_SHAPE: return "shape mismatch";
    case FARE_E_IO: return "i/o error";
    case FARE_E_FORMAT: return "format error";
    case FARE_E_INSUFFICIENT_DATA: return "insufficient data";
    case FARE_E_STATE: return "invalid state";
    case FARE_E_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

void fare_collect_options_default(fare_collect_options* o) {
  if (!o) return;
  sim::CollectConfig c;
  o->n_traj = c.n_traj;
  o->seed = c.seed;
  o->calib_fraction = c.calib_fraction;
  o->layouts = "corridor,plaza,park";
}

fare_status fare_collect(const fare_collect_options* o, fare_dataset** train, fare_dataset** calib) {
  return guarded([&] {
    need(o, "options");
    need(train, "train");
    need(calib, "calib");
    sim::CollectConfig c;
    c.n_traj = o->n_traj;
    c.seed = o->seed;
    c.calib_fraction = o->calib_fraction;
    if (o->layouts) {
      c.layouts.clear();
      for (const auto& name : split_list(o->layouts)) c.layouts.push_back(sim::parse_layout(name));
    }
    auto data = sim::collect_dataset(c);
    auto t = std::make_unique<fare_dataset>(fare_dataset{std::move(data.train)});
    auto k = std::make_unique<fare_dataset>(fare_dataset{std::move(data.calib)});
    *train = t.release();
    *calib = k.release();
  });
}

fare_status fare_dataset_load(const char* path, fare_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new fare_dataset{sim::load_dataset(path)};
  });
}

fare_status fare_dataset_save(const fare_dataset* d, const char* path) {
  return guarded([&] {
    need(d, "dataset");
    need(path, "path");
    sim::save_dataset(d->data, path);
  });
}

size_t fare_dataset_trajectories(const fare_dataset* d) { return d ? d->data.trajectories.size() : 0; }
size_t fare_dataset_pairs(const fare_dataset* d) { return d ? d->data.pair_count() : 0; }
void fare_dataset_free(fare_dataset* d) { delete d; }

void fare_train_options_default(fare_train_options* o) {
  if (!o) return;
  model::TrainOptions t;
  o->epochs = t.epochs;
  o->batch = t.batch;
  o->lr = t.lr;
  o->beta = policy::PolicySpec{}.beta;
  o->vae_beta = baselines::AeSpec{}.beta;
  o->seed = t.seed;
  o->threads = 0;
}

fare_status fare_train(fare_model_kind kind, const fare_dataset* data, const fare_train_options* o, fare_model** out,
                       double* losses) {
  return guarded([&] {
    need(data, "dataset");
    need(o, "options");
    need(out, "out");
    auto opts = train_options(*o);
    const std::size_t threads = threads_or_default(o->threads);
    auto m = std::make_unique<fare_model>();
    m->kind = kind;
    std::vector<double> curve;
    switch (kind) {
      case FARE_MODEL_POLICY: {
        policy::PolicySpec spec;
        spec.beta = o->beta;
        auto r = policy::train_policy(data->data, spec, opts, threads);
        m->m = std::move(r.model);
        curve = std::move(r.loss_curve);
        break;
      }
      case FARE_MODEL_AE:
      case FARE_MODEL_VAE: {
        baselines::AeSpec spec;
        spec.variational = kind == FARE_MODEL_VAE;
        if (spec.variational) spec.beta = o->vae_beta;
        auto r = baselines::train_ae(data->data, spec, opts, threads);
        m->m = std::move(r.model);
        curve = std::move(r.loss_curve);
        break;
      }
      case FARE_MODEL_RND: {
        auto r = baselines::train_rnd(data->data, {}, opts, threads);
        m->m = std::move(r.model);
        curve = std::move(r.loss_curve);
        break;
      }
      default:
        throw Error(Errc::invalid_argument, "unknown model kind");
    }
    if (losses) std::copy(curve.begin(), curve.end(), losses);
    *out = m.release();
  });
}

fare_status fare_model_load(const char* path, fare_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    const std::string kind = model::load_model_file(path).kind;
    auto m = std::make_unique<fare_model>();
    if (kind == "policy") {
      m->kind = FARE_MODEL_POLICY;
      m->m = policy::load_policy(path);
    } else if (kind == "ae" || kind == "vae") {
      m->kind = kind == "ae" ? FARE_MODEL_AE : FARE_MODEL_VAE;
      m->m = baselines::load_ae(path);
    } else if (kind == "rnd") {
      m->kind = FARE_MODEL_RND;
      m->m = baselines::load_rnd(path);
    } else {
      throw Error(Errc::format, "'" + std::string(path) + "' holds an unknown model kind '" + kind + "'");
    }
    *out = m.release();
  });
}

fare_status fare_model_save(const fare_model* m, const char* path) {
  return guarded([&] {
    need(m, "model");
    need(path, "path");
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, policy::PolicyModel>) policy::save_policy(x, path);
          else if constexpr (std::is_same_v<T, baselines::AeModel>) baselines::save_ae(x, path);
          else baselines::save_rnd(x, path);
        },
        m->m);
  });
}

fare_model_kind fare_model_get_kind(const fare_model* m) { return m ? m->kind : FARE_MODEL_POLICY; }
void fare_model_free(fare_model* m) { delete m; }

fare_status fare_calibrate(const fare_model* const* models, size_t n_models, const char* method,
                           const fare_dataset* calib, size_t T, double alpha, fare_band** out) {
  return guarded([&] {
    need(method, "method");
    need(calib, "calibration data");
    need(out, "out");
    auto det = eval::make_detector(method, gather(models, n_models));
    *out = new fare_band{eval::calibrate(*det, calib->data, T, alpha)};
  });
}

fare_status fare_band_load(const char* path, fare_band** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new fare_band{conformal::load_band(path)};
  });
}

fare_status fare_band_save(const fare_band* b, const char* path) {
  return guarded([&] {
    need(b, "band");
    need(path, "path");
    conformal::save_band(b->band, path);
  });
}

fare_status fare_band_is_ood(const fare_band* b, size_t t, double score, int* ood) {
  return guarded([&] {
    need(b, "band");
    need(ood, "ood");
    *ood = conformal::is_ood(score, t, b->band) ? 1 : 0;
  });
}

double fare_band_width(const fare_band* b) { return b ? b->band.w : std::numeric_limits<double>::quiet_NaN(); }
size_t fare_band_horizon(const fare_band* b) { return b ? b->band.T : 0; }
void fare_band_free(fare_band* b) { delete b; }

fare_status fare_runner_create(const fare_model* policy, fare_runner** out) {
  return guarded([&] {
    need(out, "out");
    const auto& p = as_policy(policy);
    const auto& in = p.spec.encoder;
    *out = new fare_runner{policy::PolicyRunner(p), in.channels * in.height * in.width};
  });
}

fare_status fare_runner_step(fare_runner* r, const float* frame, size_t n, const fare_band* band, size_t t,
                             fare_step* out) {
  return guarded([&] {
    need(r, "runner");
    need(frame, "frame");
    need(out, "out");
    if (n != r->frame_size) throw Error(Errc::shape_mismatch, "frame has the wrong number of pixels");
    auto s = policy::policy_step(r->runner, {frame, n}, band ? &band->band : nullptr, t);
    out->v = s.action.v;
    out->omega = s.action.omega;
    out->score = s.score;
    out->ood = band ? (s.ood ? 1 : 0) : -1;
  });
}

fare_status fare_runner_heatmap(fare_runner* r, const float* frame, size_t n, double* out, size_t n_out) {
  return guarded([&] {
    need(r, "runner");
    need(frame, "frame");
    need(out, "out");
    if (n != r->frame_size) throw Error(Errc::shape_mismatch, "frame has the wrong number of pixels");
    auto m = r->runner.grad_cam({frame, n});
    if (n_out < m.values.size()) throw Error(Errc::shape_mismatch, "heatmap buffer is too small");
    std::copy(m.values.begin(), m.values.end(), out);
  });
}

size_t fare_frame_height(void) { return sim::SimConfig{}.image_height; }
size_t fare_frame_width(void) { return sim::SimConfig{}.image_width; }
void fare_runner_free(fare_runner* r) { delete r; }

void fare_eval_options_default(fare_eval_options* o) {
  if (!o) return;
  eval::TestSetConfig c;
  o->n_fail = c.n_fail;
  o->n_normal = c.n_normal;
  o->seed = c.seed;
  o->threads = 0;
}

fare_status fare_eval_detection(const fare_model* const* models, size_t n_models, const char* const* methods,
                                const fare_band* const* bands, size_t n_methods, const fare_eval_options* o,
                                const char* out_dir, fare_detection_summary* summaries) {
  return guarded([&] {
    need(o, "options");
    need(out_dir, "output directory");
    if (n_methods == 0) throw Error(Errc::invalid_argument, "no methods requested");
    need(methods, "methods");
    need(bands, "bands");
    std::vector<std::string> names;
    std::map<std::string, conformal::PredictionBand> band_of;
    for (std::size_t i = 0; i < n_methods; ++i) {
      need(methods[i], "method");
      need(bands[i], "band");
      names.emplace_back(methods[i]);
      band_of[names.back()] = bands[i]->band;
    }
    eval::TestSetConfig cfg;
    cfg.n_fail = o->n_fail;
    cfg.n_normal = o->n_normal;
    cfg.seed = o->seed;
    auto run = eval::run_detection(cfg, names, gather(models, n_models), band_of, threads_or_default(o->threads));
    eval::write_detection_report(run, out_dir);
    if (!summaries) return;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < n_methods; ++i) {
      auto s = eval::summarize(run, i);
      fare_detection_summary& d = summaries[i];
      d.auc = s.roc.auc;
      d.det_blackout = s.det_sr.at("blackout");
      d.det_blocked = s.det_sr.at("blocked_path");
      d.det_dynamic = s.det_sr.at("dynamic_obstacle");
      d.fp_frame_rate = s.fp_frame_rate;
      d.fp_traj_rate = s.fp_traj_rate;
      d.has_heatmap = s.has_heatmap ? 1 : 0;
      d.side_top_rate = s.has_heatmap ? s.side_top_rate : nan;
      d.side_bin_auc = s.side_bin_roc ? s.side_bin_roc->auc : nan;
    }
  });
}

void fare_trial_options_default(fare_trial_options* o) {
  if (!o) return;
  eval::TrialConfig c;
  o->n_per_failure = c.n_per_failure;
  o->seed = c.seed;
  o->threads = 0;
}

fare_status fare_run_trials(const fare_model* policy, const fare_band* band, fare_recovery_mode mode,
                            const fare_trial_options* o, const char* out_dir, fare_trial_summary* summaries,
                            double* pooled_time) {
  return guarded([&] {
    need(band, "band");
    need(o, "options");
    need(out_dir, "output directory");
    if (mode != FARE_RECOVERY_INFORMED && mode != FARE_RECOVERY_BLIND)
      throw Error(Errc::invalid_argument, "unknown recovery mode");
    const auto& p = as_policy(policy);
    eval::TrialConfig cfg;
    cfg.n_per_failure = o->n_per_failure;
    cfg.seed = o->seed;
    const bool informed = mode == FARE_RECOVERY_INFORMED;
    auto results = eval::run_trials(p, band->band, informed ? recovery::Selection::informed : recovery::Selection::blind,
                                    cfg, threads_or_default(o->threads));
    eval::write_trial_report(results, cfg, informed ? "informed" : "blind", out_dir);
    if (pooled_time) *pooled_time = eval::pooled_recovery_time(results);
    if (!summaries) return;
    auto rows = eval::summarize_trials(results, cfg);
    for (std::size_t i = 0; i < rows.size() && i < 4; ++i) {
      summaries[i].kind = static_cast<int>(sim::parse_failure(rows[i].kind));
      summaries[i].n = rows[i].n;
      summaries[i].det_sr = rows[i].det_sr;
      summaries[i].han_sr = rows[i].han_sr;
      summaries[i].mean_time_s = rows[i].mean_time_s;
    }
  });
}

}  // extern "C"
