#ifndef LOGSIG_H
#define LOGSIG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call.
typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_NULL_POINTER = 1,
  // Buffer lengths or shapes that do not agree.
  LS_STATUS_DIMENSION = 2,
  // Argument outside the domain of the operation.
  LS_STATUS_DOMAIN = 3,
  // Malformed checkpoint text.
  LS_STATUS_PARSE = 4,
  LS_STATUS_IO = 5,
  LS_STATUS_CONFIG = 6,
  LS_STATUS_NON_FINITE = 7,
  // The library panicked; the message says where.
  LS_STATUS_INTERNAL = 8,
} LsStatus;

// A Lyndon basis for a fixed width and degree.
typedef struct LsBasis LsBasis;

// A trained classifier loaded from a checkpoint.
typedef struct LsModel LsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Length of the truncated signature of a `d`-dimensional path at degree
// `m`, scalar level included; 0 if either is 0.
size_t ls_sig_dim(size_t d, size_t m);

// Number of Lyndon words of length at most `m` over `d` letters.
size_t ls_logsig_dim(size_t d, size_t m);

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *ls_last_error(void);

// Builds the Lyndon basis for width `d` and degree `m`.
//
// # Safety
// `out` must be valid for a pointer write.
enum LsStatus ls_basis_new(size_t d, size_t m, struct LsBasis **out);

// Releases a basis; null is a no-op.
//
// # Safety
// `basis` must come from [`ls_basis_new`] and not be used afterwards.
void ls_basis_free(struct LsBasis *basis);

// Number of basis elements; 0 for a null handle.
//
// # Safety
// `basis` must be null or a live handle.
size_t ls_basis_len(const struct LsBasis *basis);

// Writes the 1-based letters of word `index` into `letters` and its length
// into `len`. With a short buffer only `len` is written and the call fails
// with `Dimension`, so a first call with `cap = 0` queries the length.
//
// # Safety
// `basis` must be a live handle, `letters` valid for `cap` writes and `len`
// valid for one write.
enum LsStatus ls_basis_word(const struct LsBasis *basis,
                            size_t index,
                            size_t *letters,
                            size_t cap,
                            size_t *len);

// Truncated signature of the path through `n` points of dimension `d` at
// degree `m`. `out` holds [`ls_sig_dim`] values, level by level.
//
// # Safety
// `points` must hold `n·d` values, `times` must be null or hold `n`, and
// `out` must hold `out_len`.
enum LsStatus ls_signature(const double *times,
                           const double *points,
                           size_t n,
                           size_t d,
                           size_t m,
                           double *out,
                           size_t out_len);

// Log-signature in the coordinates of `basis`, whose width and degree fix
// the path dimension and truncation.
//
// # Safety
// `basis` must be a live handle, `points` must hold `n·width` values,
// `times` must be null or hold `n`, and `out` must hold `out_len`.
enum LsStatus ls_log_signature(const struct LsBasis *basis,
                               const double *times,
                               const double *points,
                               size_t n,
                               double *out,
                               size_t out_len);

// Log-signatures over `segments` equal pieces of the path's time span,
// written as a `segments × len(basis)` matrix.
//
// # Safety
// As [`ls_log_signature`].
enum LsStatus ls_logsig_sequence(const struct LsBasis *basis,
                                 const double *times,
                                 const double *points,
                                 size_t n,
                                 size_t segments,
                                 double *out,
                                 size_t out_len);

// Gradient with respect to the `n × width` points of
// `Σ upstream ⊙ ls_logsig_sequence(...)`.
//
// # Safety
// As [`ls_logsig_sequence`]; `upstream` must hold `upstream_len` values
// and `grad` must hold `grad_len`.
enum LsStatus ls_logsig_sequence_backward(const struct LsBasis *basis,
                                          const double *times,
                                          const double *points,
                                          size_t n,
                                          size_t segments,
                                          const double *upstream,
                                          size_t upstream_len,
                                          double *grad,
                                          size_t grad_len);

// Loads a checkpoint written by `logsig train`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for a pointer
// write.
enum LsStatus ls_model_load(const char *path, struct LsModel **out);

// Releases a model; null is a no-op.
//
// # Safety
// `model` must come from [`ls_model_load`] and not be used afterwards.
void ls_model_free(struct LsModel *model);

// Writes the expected joints, coordinates per joint and class count.
//
// # Safety
// `model` must be a live handle; each output must be null or valid for a
// write.
enum LsStatus ls_model_shape(const struct LsModel *model,
                             size_t *joints,
                             size_t *coords,
                             size_t *classes);

// Classifies one sequence of `n` frames, each `joints × coords` values.
// `logits` (null or `classes` long) receives the class scores and `label`
// the arg-max.
//
// # Safety
// `model` must be a live handle, `frames` must hold `n·joints·coords`
// values, `times` must be null or hold `n`, `logits` must be null or hold
// `logits_len`, and `label` must be valid for a write.
enum LsStatus ls_model_predict(const struct LsModel *model,
                               const double *times,
                               const double *frames,
                               size_t n,
                               size_t joints,
                               size_t coords,
                               double *logits,
                               size_t logits_len,
                               size_t *label);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOGSIG_H */
