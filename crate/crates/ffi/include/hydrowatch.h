#ifndef HYDROWATCH_H
#define HYDROWATCH_H

#pragma once

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HwStatus {
  HW_STATUS_OK = 0,
  HW_STATUS_NULL_POINTER = 1,
  HW_STATUS_INVALID_ARGUMENT = 2,
  HW_STATUS_BUFFER_TOO_SMALL = 3,
  HW_STATUS_IO = 4,
  HW_STATUS_MODEL = 5,
  HW_STATUS_LOCALIZATION = 6,
  HW_STATUS_RISK = 7,
  HW_STATUS_PANIC = 99,
} HwStatus;

typedef enum HwRiskLevel {
  HW_RISK_LEVEL_NORMAL = 0,
  HW_RISK_LEVEL_REVIEW = 1,
  HW_RISK_LEVEL_ALERT = 2,
  HW_RISK_LEVEL_ALARM = 3,
} HwRiskLevel;

typedef struct HwAutoencoder HwAutoencoder;

typedef struct HwClassifier HwClassifier;

typedef struct HwPolicy HwPolicy;

typedef struct HwPreprocessor HwPreprocessor;

/**
 * Source position estimate.
 */
typedef struct HwLocation {
  double x;
  double y;
  double residual;
  /**
   * Index of the reference hydrophone.
   */
  uint32_t reference;
} HwLocation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding the terminator.
 */
size_t hw_last_error_length(void);

/**
 * Copies the last error message, NUL-terminated and truncated to `cap`.
 * Returns the number of bytes written, excluding the terminator.
 */
size_t hw_last_error_message(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hw_version(void);

enum HwStatus hw_preprocessor_new(struct HwPreprocessor **handle);

void hw_preprocessor_free(struct HwPreprocessor *handle);

/**
 * Mel matrix of one mono segment, band-major within each frame
 * (`values[frame * bands + band]`).
 */
enum HwStatus hw_preprocess(const struct HwPreprocessor *handle,
                            const double *samples,
                            size_t n_samples,
                            uint32_t sample_rate,
                            double *mel,
                            size_t capacity,
                            size_t *needed,
                            size_t *bands,
                            size_t *frames);

enum HwStatus hw_autoencoder_load(const char *model_path, struct HwAutoencoder **handle);

void hw_autoencoder_free(struct HwAutoencoder *handle);

enum HwStatus hw_autoencoder_latent_size(const struct HwAutoencoder *handle, size_t *size);

enum HwStatus hw_autoencoder_encode(const struct HwAutoencoder *handle,
                                    const double *mel,
                                    size_t bands,
                                    size_t frames,
                                    double *latent,
                                    size_t capacity,
                                    size_t *needed);

/**
 * Reconstruction RMSE, the anomaly score.
 */
enum HwStatus hw_autoencoder_score(const struct HwAutoencoder *handle,
                                   const double *mel,
                                   size_t bands,
                                   size_t frames,
                                   double *score);

enum HwStatus hw_classifier_load(const char *model_path, struct HwClassifier **handle);

void hw_classifier_free(struct HwClassifier *handle);

enum HwStatus hw_classifier_predict(const struct HwClassifier *handle,
                                    const double *latent,
                                    size_t n,
                                    double *probs,
                                    size_t capacity,
                                    size_t *needed);

/**
 * Grid search for the source of a delay measurement.
 *
 * `positions` holds `x, y` pairs for `n` hydrophones on the wall line;
 * pass null to use the default three-hydrophone array (then `n` must be 3).
 * `delays_s[i]` is the arrival delay of hydrophone `i` after the reference.
 * `step` of 0 picks the default grid.
 */
enum HwStatus hw_localize(const double *positions,
                          size_t n,
                          double speed_of_sound,
                          uint32_t reference,
                          const double *delays_s,
                          double half_width,
                          double step,
                          struct HwLocation *location);

enum HwStatus hw_policy_default(struct HwPolicy **handle);

enum HwStatus hw_policy_load(const char *policy_path, struct HwPolicy **handle);

void hw_policy_free(struct HwPolicy *handle);

/**
 * Risk level for one observation.
 *
 * `probs` holds one probability per event class in class-id order. With
 * `location` null the observation counts as not localized.
 */
enum HwStatus hw_assess(const struct HwPolicy *policy,
                        const double *probs,
                        size_t n_classes,
                        double anomaly_score,
                        const struct HwLocation *location,
                        enum HwRiskLevel *level);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYDROWATCH_H */
