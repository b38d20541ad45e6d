#ifndef FARE_FARE_H
#define FARE_FARE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FARE_API __declspec(dllexport)
#else
#define FARE_API __attribute__((visibility("default")))
#endif

typedef enum fare_status {
  FARE_OK = 0,
  FARE_E_INVALID_ARGUMENT = 1,
  FARE_E_SHAPE = 2,
  FARE_E_IO = 3,
  FARE_E_FORMAT = 4,
  FARE_E_INSUFFICIENT_DATA = 5,
  FARE_E_STATE = 6,
  FARE_E_RUNTIME = 7
} fare_status;

/* Message of the last failed call on this thread; empty after a success. */
FARE_API const char* fare_last_error(void);
FARE_API const char* fare_status_name(fare_status s);

typedef struct fare_dataset fare_dataset;
typedef struct fare_model fare_model;
typedef struct fare_band fare_band;
typedef struct fare_runner fare_runner;

/* ---- data ---- */

typedef struct fare_collect_options {
  size_t n_traj;          /* demonstrations, split into train and calibration */
  uint64_t seed;
  double calib_fraction;
  const char* layouts;    /* comma list of corridor, plaza, park */
} fare_collect_options;

FARE_API void fare_collect_options_default(fare_collect_options* o);
/* Runs the expert and returns the training and calibration splits. */
FARE_API fare_status fare_collect(const fare_collect_options* o, fare_dataset** train, fare_dataset** calib);
FARE_API fare_status fare_dataset_load(const char* path, fare_dataset** out);
FARE_API fare_status fare_dataset_save(const fare_dataset* d, const char* path);
FARE_API size_t fare_dataset_trajectories(const fare_dataset* d);
FARE_API size_t fare_dataset_pairs(const fare_dataset* d);
FARE_API void fare_dataset_free(fare_dataset* d);

/* ---- models ---- */

typedef enum fare_model_kind {
  FARE_MODEL_POLICY = 0,
  FARE_MODEL_AE = 1,
  FARE_MODEL_VAE = 2,
  FARE_MODEL_RND = 3
} fare_model_kind;

typedef struct fare_train_options {
  size_t epochs;
  size_t batch;
  double lr;
  double beta;      /* KL weight of the policy bottleneck */
  double vae_beta;  /* KL weight of the VAE baseline */
  uint64_t seed;
  size_t threads; /* 0: FARE_THREADS or the machine's cores */
} fare_train_options;

FARE_API void fare_train_options_default(fare_train_options* o);
/* losses, when not null, receives one mean loss per epoch (o->epochs values). */
FARE_API fare_status fare_train(fare_model_kind kind, const fare_dataset* data, const fare_train_options* o,
                                fare_model** out, double* losses);
FARE_API fare_status fare_model_load(const char* path, fare_model** out);
FARE_API fare_status fare_model_save(const fare_model* m, const char* path);
FARE_API fare_model_kind fare_model_get_kind(const fare_model* m);
FARE_API void fare_model_free(fare_model* m);

/* ---- conformal band ---- */

/* Scores every calibration frame with `method` (fare, ae, vae-r, vae-kl, rnd),
   cuts segments of T+1 frames and fits the band at level alpha. `models` must
   contain the model the method needs. */
FARE_API fare_status fare_calibrate(const fare_model* const* models, size_t n_models, const char* method,
                                    const fare_dataset* calib, size_t T, double alpha, fare_band** out);
FARE_API fare_status fare_band_load(const char* path, fare_band** out);
FARE_API fare_status fare_band_save(const fare_band* b, const char* path);
FARE_API fare_status fare_band_is_ood(const fare_band* b, size_t t, double score, int* ood);
FARE_API double fare_band_width(const fare_band* b);
FARE_API size_t fare_band_horizon(const fare_band* b);
FARE_API void fare_band_free(fare_band* b);

/* ---- closed loop ---- */

typedef struct fare_step {
  double v;
  double omega;
  double score;
  int ood;  /* -1 when no band was given */
} fare_step;

FARE_API fare_status fare_runner_create(const fare_model* policy, fare_runner** out);
/* frame: height*width floats in [0,1]; band may be null. */
FARE_API fare_status fare_runner_step(fare_runner* r, const float* frame, size_t n, const fare_band* band, size_t t,
                                      fare_step* out);
/* Writes height*width heatmap values into out (capacity n_out). */
FARE_API fare_status fare_runner_heatmap(fare_runner* r, const float* frame, size_t n, double* out, size_t n_out);
FARE_API size_t fare_frame_height(void);
FARE_API size_t fare_frame_width(void);
FARE_API void fare_runner_free(fare_runner* r);

/* ---- evaluation ---- */

typedef struct fare_eval_options {
  size_t n_fail;    /* failure trajectories, split over the three groups */
  size_t n_normal;  /* clean trajectories */
  uint64_t seed;
  size_t threads;
} fare_eval_options;

typedef struct fare_detection_summary {
  double auc;
  double det_blackout;  /* percent of trajectories */
  double det_blocked;
  double det_dynamic;
  double fp_frame_rate;
  double fp_traj_rate;
  int has_heatmap;
  double side_top_rate;  /* NaN-free only when has_heatmap */
  double side_bin_auc;   /* NaN when undefined */
} fare_detection_summary;

FARE_API void fare_eval_options_default(fare_eval_options* o);
/* Scores the test set with each method against its band and writes the
   detection report into out_dir. summaries, when not null, has n_methods slots. */
FARE_API fare_status fare_eval_detection(const fare_model* const* models, size_t n_models, const char* const* methods,
                                         const fare_band* const* bands, size_t n_methods, const fare_eval_options* o,
                                         const char* out_dir, fare_detection_summary* summaries);

typedef enum fare_recovery_mode { FARE_RECOVERY_INFORMED = 0, FARE_RECOVERY_BLIND = 1 } fare_recovery_mode;

typedef struct fare_trial_options {
  size_t n_per_failure;
  uint64_t seed;
  size_t threads;
} fare_trial_options;

typedef struct fare_trial_summary {
  int kind;  /* 0 blackout, 1 local minimum, 2 dead end, 3 dynamic obstacle */
  size_t n;
  double det_sr;
  double han_sr;
  double mean_time_s;  /* NaN when nothing was handled */
} fare_trial_summary;

FARE_API void fare_trial_options_default(fare_trial_options* o);
/* Runs the paired-seed recovery trials and writes the trial report (tag
   "informed" or "blind") into out_dir. summaries has 4 slots; pooled_time may
   be null. */
FARE_API fare_status fare_run_trials(const fare_model* policy, const fare_band* band, fare_recovery_mode mode,
                                     const fare_trial_options* o, const char* out_dir, fare_trial_summary* summaries,
                                     double* pooled_time);

#ifdef __cplusplus
}
#endif

#endif
