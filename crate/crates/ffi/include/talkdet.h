#ifndef TALKDET_H
#define TALKDET_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of every fallible call.
typedef enum TdStatus {
  TD_STATUS_OK = 0,
  TD_STATUS_NULL_POINTER = 1,
  TD_STATUS_INVALID_ARGUMENT = 2,
  TD_STATUS_DIMENSION = 3,
  TD_STATUS_IO = 4,
  TD_STATUS_PARSE = 5,
  TD_STATUS_UNSUPPORTED_VERSION = 6,
  TD_STATUS_CORRUPT_MODEL = 7,
  TD_STATUS_DATA = 8,
  TD_STATUS_PANIC = 9,
} TdStatus;

// A three-member majority-vote ensemble.
typedef struct TdEnsemble TdEnsemble;

// A trained single classifier.
typedef struct TdModel TdModel;

// Derived confusion-matrix metrics; NaN where undefined.
typedef struct TdMetrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
} TdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *td_last_error(void);

// Library version, e.g. `talkdet/0.1.0`. Static storage.
const char *td_version(void);

// Load a model file written by `talkdet train`.
enum TdStatus td_model_load(const char *path, struct TdModel **out);

// Release a model; null is ignored.
void td_model_free(struct TdModel *model);

enum TdStatus td_model_dim(const struct TdModel *model, size_t *out_dim);

// Talking score in `[0, 1]` for one feature vector.
enum TdStatus td_model_score(const struct TdModel *model,
                             const double *features,
                             size_t len,
                             double *out_score);

enum TdStatus td_model_predict(const struct TdModel *model,
                               const double *features,
                               size_t len,
                               int32_t *out_label);

// Load an ensemble file written by `talkdet select`, with its members.
enum TdStatus td_ensemble_load(const char *path, struct TdEnsemble **out);

// Release an ensemble; null is ignored.
void td_ensemble_free(struct TdEnsemble *ensemble);

enum TdStatus td_ensemble_dim(const struct TdEnsemble *ensemble, size_t *out_dim);

// Majority label; `out_votes`, if not null, receives the three member
// labels in ensemble order.
enum TdStatus td_ensemble_predict(const struct TdEnsemble *ensemble,
                                  const double *features,
                                  size_t len,
                                  int32_t *out_label,
                                  int32_t *out_votes);

// Dense flow between two 8-bit frames with default parameters. `out_u`
// and `out_v` each receive `width * height` values, row-major.
enum TdStatus td_flow(const uint8_t *prev,
                      const uint8_t *next,
                      size_t width,
                      size_t height,
                      double *out_u,
                      double *out_v);

// Projection image and pooled features of a clip of `count` 8-bit frames
// (stacked row-major), using default parameters. `out_projection`
// (nullable) receives `width * height` values; `out_features` receives
// `grid_w * grid_h`.
enum TdStatus td_clip_features(const uint8_t *pixels,
                               size_t width,
                               size_t height,
                               size_t count,
                               size_t grid_w,
                               size_t grid_h,
                               double *out_projection,
                               double *out_features);

// Metrics of the confusion matrix `[tn fp; fn tp]`, talking positive.
enum TdStatus td_metrics(uint64_t tn,
                         uint64_t fp,
                         uint64_t fn_,
                         uint64_t tp,
                         struct TdMetrics *out);

// ROC AUC of `scores` against `labels` (1 talking, 0 not talking).
enum TdStatus td_auc(const double *scores, const int32_t *labels, size_t n, double *out_auc);

// Detection F1 `2tp / (2tp + fp + fn)`; NaN when undefined.
enum TdStatus td_f1_from_counts(uint64_t tp, uint64_t fp, uint64_t fn_, double *out_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TALKDET_H */
