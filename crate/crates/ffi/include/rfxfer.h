#ifndef RFXFER_H
#define RFXFER_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RfxStatus {
  RFX_STATUS_OK = 0,
  RFX_STATUS_NULL_POINTER = 1,
  RFX_STATUS_INVALID_ARGUMENT = 2,
  RFX_STATUS_SHAPE_MISMATCH = 3,
  RFX_STATUS_DEGENERATE = 4,
  RFX_STATUS_IO = 5,
  RFX_STATUS_FORMAT = 6,
  RFX_STATUS_PANIC = 7,
} RfxStatus;

/**
 * Loaded model checkpoint.
 */
typedef struct RfxModel RfxModel;

/**
 * Fitted score-to-accuracy predictor.
 */
typedef struct RfxPredictor RfxPredictor;

/**
 * Message for the most recent failure on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *rfx_last_error(void);

/**
 * LEEP from row-major source-class probabilities `theta` (`n` x
 * `source_classes`) and target labels in `[0, target_classes)`.
 *
 * # Safety
 * `theta` must hold `n * source_classes` values and `labels` `n` values.
 */
enum RfxStatus rfx_leep(const double *theta,
                        size_t n,
                        size_t source_classes,
                        const uint32_t *labels,
                        size_t target_classes,
                        double *out_score);

/**
 * LogME of row-major features (`n` x `dim`) for labels in `[0, classes)`.
 *
 * # Safety
 * `features` must hold `n * dim` values and `labels` `n` values.
 */
enum RfxStatus rfx_logme(const double *features,
                         size_t n,
                         size_t dim,
                         const uint32_t *labels,
                         size_t classes,
                         double *out_score);

/**
 * # Safety
 * `x` and `y` must each hold `n` values.
 */
enum RfxStatus rfx_pearson_r(const double *x, const double *y, size_t n, double *out_r);

/**
 * Weighted Kendall tau with hyperbolic rank weights.
 *
 * # Safety
 * `x` and `y` must each hold `n` values.
 */
enum RfxStatus rfx_weighted_tau(const double *x, const double *y, size_t n, double *out_tau);

/**
 * Synthesizes one impaired frame of the named class into `out_i`/`out_q`.
 * Class parameters, symbols and noise are drawn from `seed`.
 *
 * # Safety
 * `class_name` must be a NUL-terminated string; `out_i` and `out_q` must
 * each have room for `frame_len` values.
 */
enum RfxStatus rfx_synthesize_frame(const char *class_name,
                                    size_t frame_len,
                                    double snr_db,
                                    double fo_frac,
                                    uint64_t seed,
                                    double *out_i,
                                    double *out_q);

/**
 * Loads a checkpoint file. Release with [`rfx_model_free`].
 *
 * # Safety
 * `path` must be NUL-terminated; `out_model` must be writable.
 */
enum RfxStatus rfx_model_load(const char *path, struct RfxModel **out_model);

/**
 * # Safety
 * `model` must come from [`rfx_model_load`] and not be used afterwards.
 */
void rfx_model_free(struct RfxModel *model);

/**
 * Input values per example (`2 * frame_len`, I row then Q row).
 *
 * # Safety
 * `model` must be a live handle.
 */
enum RfxStatus rfx_model_input_len(const struct RfxModel *model, size_t *out_len);

/**
 * # Safety
 * `model` must be a live handle.
 */
enum RfxStatus rfx_model_num_classes(const struct RfxModel *model, size_t *out_classes);

/**
 * Top-1 class of each of `n` row-major examples.
 *
 * # Safety
 * `x` must hold `n * input_len` values and `out_labels` room for `n`.
 */
enum RfxStatus rfx_model_predict(const struct RfxModel *model,
                                 const float *x,
                                 size_t n,
                                 uint32_t *out_labels);

/**
 * LEEP and LogME of the model on a labelled target sample.
 *
 * # Safety
 * `x` must hold `n * input_len` values and `labels` `n` values.
 */
enum RfxStatus rfx_model_score(const struct RfxModel *model,
                               const float *x,
                               const uint32_t *labels,
                               size_t n,
                               double *out_leep,
                               double *out_logme);

/**
 * Loads a predictor JSON file. Release with [`rfx_predictor_free`].
 *
 * # Safety
 * `path` must be NUL-terminated; `out_predictor` must be writable.
 */
enum RfxStatus rfx_predictor_load(const char *path, struct RfxPredictor **out_predictor);

/**
 * # Safety
 * `predictor` must come from [`rfx_predictor_load`] and not be used afterwards.
 */
void rfx_predictor_free(struct RfxPredictor *predictor);

/**
 * Accuracy estimate and interval at `confidence` (0.90, 0.95 or 0.99).
 *
 * # Safety
 * `predictor` must be a live handle; outputs must be writable.
 */
enum RfxStatus rfx_predictor_predict(const struct RfxPredictor *predictor,
                                     double score,
                                     double confidence,
                                     double *out_estimate,
                                     double *out_lower,
                                     double *out_upper);

#endif  /* RFXFER_H */
