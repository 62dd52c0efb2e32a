#ifndef EVFORMER_H
#define EVFORMER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  EVF_STATUS_OK = 0,
  EVF_STATUS_NULL_POINTER = 1,
  EVF_STATUS_INVALID_ARGUMENT = 2,
  EVF_STATUS_IO = 3,
  EVF_STATUS_FORMAT = 4,
  EVF_STATUS_BUFFER_TOO_SMALL = 5,
  EVF_STATUS_INTERNAL = 6,
} EvfStatus;

/**
 * Opaque 32-bit model.
 */
typedef struct EvfModel EvfModel;

/**
 * Opaque event stream.
 */
typedef struct EvfStream EvfStream;

/**
 * One address event. `polarity` is 0 (OFF) or 1 (ON).
 */
typedef struct {
  uint32_t t;
  uint16_t x;
  uint16_t y;
  uint8_t polarity;
} EvfEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *evf_status_string(EvfStatus status);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *evf_last_error(void);

/**
 * Builds a stream from `len` events. Events need not be sorted.
 *
 * # Safety
 * `events` must point to `len` readable events (or be null when `len` is 0)
 * and `out` to a writable handle slot.
 */
EvfStatus evf_stream_new(uint16_t width,
                         uint16_t height,
                         uint32_t duration_us,
                         const EvfEvent *events,
                         size_t len,
                         EvfStream **out);

/**
 * Loads an EVS1 file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable handle slot.
 */
EvfStatus evf_stream_load(const char *path, EvfStream **out);

/**
 * Writes an EVS1 file.
 *
 * # Safety
 * `stream` must be a live handle and `path` a NUL-terminated string.
 */
EvfStatus evf_stream_save(const EvfStream *stream, const char *path);

/**
 * Number of events, or 0 for a null handle.
 *
 * # Safety
 * `stream` must be null or a live handle.
 */
size_t evf_stream_len(const EvfStream *stream);

/**
 * # Safety
 * `stream` must be null or a handle not yet freed.
 */
void evf_stream_free(EvfStream *stream);

/**
 * Fills `counts` with the `2 x (H*K) x (W*K)` parameter count map. The
 * required length is written to `out_len` even when the buffer is too small.
 *
 * # Safety
 * `stream` must be a live handle, `counts` must hold `capacity` values and
 * `out_len` must be null or writable.
 */
EvfStatus evf_count_map(const EvfStream *stream,
                        size_t kernel_size,
                        uint32_t *counts,
                        size_t capacity,
                        size_t *out_len);

/**
 * Per-event convolution with a row-major `K x K` kernel into a
 * `2 x H x W` response.
 *
 * # Safety
 * `stream` must be a live handle, `kernel` must hold `kernel_size^2` values,
 * `response` must hold `capacity` values and `out_len` must be null or
 * writable.
 */
EvfStatus evf_event_conv(const EvfStream *stream,
                         const float *kernel,
                         size_t kernel_size,
                         float *response,
                         size_t capacity,
                         size_t *out_len);

/**
 * Randomly initialized model from a named preset (`smoke`, `mnist-dvs`,
 * `cifar10-dvs`, `cifar10-dvs-1block`).
 *
 * # Safety
 * `preset` must be a NUL-terminated string and `out` a writable handle slot.
 */
EvfStatus evf_model_new(const char *preset, uint64_t seed, EvfModel **out);

/**
 * Replaces the weights with a checkpoint written by training.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
EvfStatus evf_model_load_checkpoint(EvfModel *model, const char *path);

/**
 * Number of output classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t evf_model_num_classes(const EvfModel *model);

/**
 * Classifies a stream: per-class firing rates into `rates` and the winning
 * class into `decision`.
 *
 * # Safety
 * `model` and `stream` must be live handles, `rates` must hold `capacity`
 * values and `decision` must be writable.
 */
EvfStatus evf_model_forward(const EvfModel *model,
                            const EvfStream *stream,
                            float *rates,
                            size_t capacity,
                            size_t *decision);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void evf_model_free(EvfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVFORMER_H */
