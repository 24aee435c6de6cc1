#ifndef EVENTMIX_H
#define EVENTMIX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EM_MASK_SPATIOTEMPORAL 0

#define EM_MASK_SPATIAL 1

#define EM_MASK_TEMPORAL 2

#define EM_MASK_SQUARE 3

#define EM_ALPHA_AREA 0

#define EM_ALPHA_COUNT 1

#define EM_ALPHA_DISTANCE 2

typedef enum EmStatus {
  EM_STATUS_OK = 0,
  EM_STATUS_NULL_POINTER = 1,
  EM_STATUS_INVALID_ARGUMENT = 2,
  EM_STATUS_FORMAT = 3,
  EM_STATUS_SHAPE_MISMATCH = 4,
  EM_STATUS_PANIC = 5,
} EmStatus;

/**
 * Opaque `[bins x height x width]` binary mask.
 */
typedef struct EmMask EmMask;

/**
 * Opaque event stream.
 */
typedef struct EmStream EmStream;

/**
 * Opaque `[bins x 2 x height x width]` count tensor.
 */
typedef struct EmTensor EmTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *em_last_error(void);

/**
 * # Safety
 * `data`/`len` must come from a single buffer returned by this library.
 */
void em_buffer_free(uint8_t *data, size_t len);

/**
 * Parse headerless N-MNIST style 5-byte records.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum EmStatus em_stream_parse_nmnist(const uint8_t *data,
                                     size_t len,
                                     uint16_t width,
                                     uint16_t height,
                                     struct EmStream **out);

/**
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum EmStatus em_stream_read_native(const uint8_t *data, size_t len, struct EmStream **out);

/**
 * Serialize to the native format. Free the result with [`em_buffer_free`].
 *
 * # Safety
 * `stream` must be a live handle; `data` and `len` must be writable.
 */
enum EmStatus em_stream_write_native(const struct EmStream *stream, uint8_t **data, size_t *len);

/**
 * Number of events, 0 for NULL.
 *
 * # Safety
 * `stream` must be NULL or a live handle.
 */
size_t em_stream_len(const struct EmStream *stream);

/**
 * # Safety
 * `stream` must be NULL or a handle not yet freed.
 */
void em_stream_free(struct EmStream *stream);

/**
 * # Safety
 * `stream` must be a live handle; `out` must be writable.
 */
enum EmStatus em_voxelize(const struct EmStream *stream,
                          size_t bins,
                          size_t height,
                          size_t width,
                          struct EmTensor **out);

/**
 * Copy `bins * 2 * height * width` row-major counts into a new tensor.
 *
 * # Safety
 * `counts` must point to `len` readable floats; `out` must be writable.
 */
enum EmStatus em_tensor_new(size_t bins,
                            size_t height,
                            size_t width,
                            const float *counts,
                            size_t len,
                            struct EmTensor **out);

/**
 * Writes `[bins, 2, height, width]` into `shape`.
 *
 * # Safety
 * `tensor` must be a live handle; `shape` must have room for 4 values.
 */
enum EmStatus em_tensor_shape(const struct EmTensor *tensor, size_t *shape);

/**
 * Copy the counts into `dst`, which must hold exactly the element count.
 *
 * # Safety
 * `tensor` must be a live handle; `dst` must have room for `len` floats.
 */
enum EmStatus em_tensor_copy(const struct EmTensor *tensor, float *dst, size_t len);

/**
 * Serialize as a tensor container; u16 when every count fits, else f32.
 * Free the result with [`em_buffer_free`].
 *
 * # Safety
 * `tensor` must be a live handle; `data` and `len` must be writable.
 */
enum EmStatus em_tensor_write(const struct EmTensor *tensor, uint8_t **data, size_t *len);

/**
 * # Safety
 * `tensor` must be NULL or a handle not yet freed.
 */
void em_tensor_free(struct EmTensor *tensor);

/**
 * Mask of the given kind with zero fraction targeting `lambda`, using the
 * default mixture ranges and a generator seeded with `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum EmStatus em_mask_make(uint32_t kind,
                           size_t bins,
                           size_t height,
                           size_t width,
                           double lambda,
                           uint64_t seed,
                           struct EmMask **out);

/**
 * Wrap `len` bytes (0 or 1) as a mask.
 *
 * # Safety
 * `bits` must point to `len` readable bytes; `out` must be writable.
 */
enum EmStatus em_mask_new(size_t bins,
                          size_t height,
                          size_t width,
                          const uint8_t *bits,
                          size_t len,
                          struct EmMask **out);

/**
 * Number of zero bits, 0 for NULL.
 *
 * # Safety
 * `mask` must be NULL or a live handle.
 */
size_t em_mask_zeros(const struct EmMask *mask);

/**
 * Copy bits as bytes (1 selects sample A) into `dst`.
 *
 * # Safety
 * `mask` must be a live handle; `dst` must have room for `len` bytes.
 */
enum EmStatus em_mask_copy(const struct EmMask *mask, uint8_t *dst, size_t len);

/**
 * # Safety
 * `mask` must be NULL or a handle not yet freed.
 */
void em_mask_free(struct EmMask *mask);

/**
 * # Safety
 * All handles must be live; `alpha` must be writable.
 */
enum EmStatus em_alpha_count(const struct EmTensor *a,
                             const struct EmTensor *b,
                             const struct EmMask *mask,
                             double *alpha);

/**
 * # Safety
 * All handles must be live; `alpha` must be writable.
 */
enum EmStatus em_alpha_distance(const struct EmTensor *a,
                                const struct EmTensor *b,
                                const struct EmTensor *mixed,
                                size_t pool_kernel,
                                double *alpha);

/**
 * Mix two tensors with a fresh λ and mask drawn from `seed`. Writes the
 * mixed tensor and the label weight α of sample A.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` and `alpha` must be writable.
 */
enum EmStatus em_event_mix(const struct EmTensor *a,
                           const struct EmTensor *b,
                           uint32_t mask_kind,
                           uint32_t alpha_rule,
                           size_t pool_kernel,
                           uint64_t seed,
                           struct EmTensor **out,
                           double *alpha);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVENTMIX_H */
