#ifndef MNE_H
#define MNE_H

/* Generated by cbindgen. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every call.
 */
typedef enum MneStatus {
  MNE_STATUS_OK = 0,
  MNE_STATUS_NULL_POINTER = 1,
  MNE_STATUS_SHAPE = 2,
  MNE_STATUS_DEGENERATE = 3,
  MNE_STATUS_NUMERIC = 4,
  MNE_STATUS_CAPACITY = 5,
  MNE_STATUS_LOOKUP = 6,
  MNE_STATUS_STATE = 7,
  MNE_STATUS_FORMAT = 8,
  MNE_STATUS_IO = 9,
  MNE_STATUS_INVALID_ARGUMENT = 10,
  MNE_STATUS_PANIC = 11,
} MneStatus;

/**
 * Neighbourhood aggregation used by [`mne_model_embed`].
 */
typedef enum MneAggregation {
  MNE_AGGREGATION_ATTENTION = 0,
  MNE_AGGREGATION_MEAN = 1,
  MNE_AGGREGATION_MAX = 2,
} MneAggregation;

/**
 * Episodic feature memory.
 */
typedef struct MneMemory MneMemory;

/**
 * A trained model loaded from a checkpoint.
 */
typedef struct MneModel MneModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread, or null if the
 * last call succeeded. The string stays valid until the next call into this
 * library from the same thread.
 */
const char *mne_last_error_message(void);

/**
 * Static, human-readable name of a status code.
 */
const char *mne_status_name(enum MneStatus status);

/**
 * Creates an empty memory of dimension `dim`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum MneStatus mne_memory_new(size_t dim, struct MneMemory **out);

/**
 * Builds a labeled memory from `n` row-major features of dimension `dim`.
 * Entries get ids `0..n` in input order.
 *
 * # Safety
 * `features` must point to `n * dim` doubles, `labels` to `n` values, and
 * `out` to writable storage for one handle.
 */
enum MneStatus mne_memory_from_labeled(const double *features,
                                       const uint32_t *labels,
                                       size_t n,
                                       size_t dim,
                                       struct MneMemory **out);

/**
 * Releases a memory. Null is ignored.
 *
 * # Safety
 * `mem` must be null or a handle from this library that has not been freed.
 */
void mne_memory_free(struct MneMemory *mem);

/**
 * Number of entries, or 0 for a null handle.
 *
 * # Safety
 * `mem` must be null or a live handle.
 */
size_t mne_memory_len(const struct MneMemory *mem);

/**
 * Feature dimension, or 0 for a null handle.
 *
 * # Safety
 * `mem` must be null or a live handle.
 */
size_t mne_memory_dim(const struct MneMemory *mem);

/**
 * Appends `n` unlabeled features and writes their new ids to `out_ids`
 * (which may be null when `n` is 0).
 *
 * # Safety
 * `mem` must be a live handle, `features` must point to `n * dim` doubles
 * where `dim` is the memory dimension, and `out_ids` to `n` writable ids.
 */
enum MneStatus mne_memory_augment(struct MneMemory *mem,
                                  const double *features,
                                  size_t n,
                                  uint64_t *out_ids);

/**
 * Writes the ids of the `k` entries nearest to `query` (closest first, ties
 * to the lower id) into `out_ids`, skipping the `n_exclude` ids in
 * `exclude`. Fails with `MNE_STATUS_CAPACITY` when fewer than `k` entries
 * remain.
 *
 * # Safety
 * `mem` must be a live handle, `query` must point to `dim` doubles,
 * `exclude` to `n_exclude` ids and `out_ids` to `k` writable ids.
 */
enum MneStatus mne_memory_knn(const struct MneMemory *mem,
                              const double *query,
                              size_t dim,
                              size_t k,
                              const uint64_t *exclude,
                              size_t n_exclude,
                              uint64_t *out_ids);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must point to writable
 * storage for one handle.
 */
enum MneStatus mne_model_load(const char *path, struct MneModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle from this library that has not been freed.
 */
void mne_model_free(struct MneModel *model);

/**
 * Raw input dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mne_model_input_dim(const struct MneModel *model);

/**
 * Embedding dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mne_model_dim(const struct MneModel *model);

/**
 * Number of aggregation rounds the model was trained with, or 0 for a null
 * handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mne_model_depth(const struct MneModel *model);

/**
 * Neighbour count the model was trained with, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t mne_model_k(const struct MneModel *model);

/**
 * Runs the encoder on `n` row-major raw features of the model's input
 * dimension, writing `n * mne_model_dim` doubles to `out`.
 *
 * # Safety
 * `model` must be a live handle, `features` must point to
 * `n * mne_model_input_dim(model)` doubles and `out` to
 * `n * mne_model_dim(model)` writable doubles.
 */
enum MneStatus mne_model_encode(const struct MneModel *model,
                                const double *features,
                                size_t n,
                                double *out);

/**
 * Neighbourhood embedding of `n` row-major raw features against `mem`,
 * which must hold features already in the model's embedding space. `k` and
 * `depth` of 0 fall back to the values the model was trained with. Writes
 * `n * mne_model_dim` doubles to `out`.
 *
 * # Safety
 * `model` and `mem` must be live handles, `features` must point to
 * `n * mne_model_input_dim(model)` doubles and `out` to
 * `n * mne_model_dim(model)` writable doubles.
 */
enum MneStatus mne_model_embed(const struct MneModel *model,
                               const struct MneMemory *mem,
                               const double *features,
                               size_t n,
                               size_t k,
                               size_t depth,
                               enum MneAggregation mode,
                               double *out);

/**
 * Average precision of a ranked list given per-position relevance flags
 * (non-zero means relevant).
 *
 * # Safety
 * `relevant` must point to `n` bytes and `out` to one writable double.
 */
enum MneStatus mne_average_precision(const uint8_t *relevant, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MNE_H */
