#ifndef MDCL_H
#define MDCL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MdclStatus {
  MDCL_STATUS_OK = 0,
  MDCL_STATUS_NULL_ARGUMENT = 1,
  // Bad config, shape, index or selection.
  MDCL_STATUS_INVALID_ARGUMENT = 2,
  // Malformed JSON, CSV or checkpoint.
  MDCL_STATUS_PARSE = 3,
  MDCL_STATUS_IO = 4,
  // Operation not possible in the current state, e.g. a domain without labels.
  MDCL_STATUS_STATE = 5,
  MDCL_STATUS_NON_FINITE = 6,
  MDCL_STATUS_PANIC = 7,
} MdclStatus;

typedef enum MdclSplit {
  MDCL_SPLIT_LABELED = 0,
  MDCL_SPLIT_VAL = 1,
  MDCL_SPLIT_TEST = 2,
} MdclSplit;

typedef struct MdclDataset MdclDataset;

typedef struct MdclModel MdclModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// success. The pointer stays valid until the next call on this thread.
const char *mdcl_last_error(void);

// Library version as a static NUL-terminated string.
const char *mdcl_version(void);

// Builds a dataset from a dataset-section JSON (`{"synthetic": {...}}` or
// `{"csv": {"domains": [...]}}`), drawing the labeled subset with `seed`.
//
// # Safety
// `config_json` is null or a NUL-terminated string; `out` is writable.
enum MdclStatus mdcl_dataset_new(const char *config_json, uint64_t seed, struct MdclDataset **out);

// # Safety
// `ds` is a live handle; each out pointer is null or writable.
enum MdclStatus mdcl_dataset_shape(const struct MdclDataset *ds,
                                   size_t *num_domains,
                                   size_t *num_classes,
                                   size_t *feature_dim);

// Labeled and unlabeled counts of one domain.
//
// # Safety
// `ds` is a live handle; each out pointer is null or writable.
enum MdclStatus mdcl_dataset_counts(const struct MdclDataset *ds,
                                    size_t domain,
                                    size_t *labeled,
                                    size_t *unlabeled);

// # Safety
// `ds` is null or a handle from `mdcl_dataset_new` not yet freed.
void mdcl_dataset_free(struct MdclDataset *ds);

// Creates a freshly initialized model shaped for `ds`. The model JSON
// (null for defaults) need not set the input, domain or class counts.
//
// # Safety
// `ds` is a live handle; `model_json` is null or NUL-terminated; `out` is writable.
enum MdclStatus mdcl_model_new(const char *model_json,
                               const struct MdclDataset *ds,
                               struct MdclModel **out);

// Trains in place with early stopping, leaving the best validation epoch's
// parameters. Writes the mean test accuracy to `test_mean` when non-null.
//
// # Safety
// `model` and `ds` are live handles; `train_json` is null or NUL-terminated.
enum MdclStatus mdcl_train(struct MdclModel *model,
                           const struct MdclDataset *ds,
                           const char *train_json,
                           double *test_mean);

// Accuracy on one split: `per_domain` receives one value per domain
// (`len` must equal the domain count), `mean` their average.
//
// # Safety
// Handles are live; `per_domain` holds `len` doubles; `mean` is null or writable.
enum MdclStatus mdcl_evaluate(const struct MdclModel *model,
                              const struct MdclDataset *ds,
                              enum MdclSplit split,
                              double *per_domain,
                              size_t len,
                              double *mean);

// Class probabilities for `rows` row-major inputs from `domain`; `out`
// receives `rows × num_classes` values.
//
// # Safety
// `x` holds `rows * cols` doubles and `out` holds `out_len` doubles.
enum MdclStatus mdcl_predict_proba(const struct MdclModel *model,
                                   const double *x,
                                   size_t rows,
                                   size_t cols,
                                   size_t domain,
                                   double *out,
                                   size_t out_len);

// # Safety
// `model` is live; `path` is NUL-terminated.
enum MdclStatus mdcl_model_save(const struct MdclModel *model, const char *path);

// # Safety
// `path` is NUL-terminated; `out` is writable.
enum MdclStatus mdcl_model_load(const char *path, struct MdclModel **out);

// # Safety
// `model` is null or a handle not yet freed.
void mdcl_model_free(struct MdclModel *model);

// Best-versus-second-best margin of each row of a row-major probability
// matrix; smaller means less certain.
//
// # Safety
// `probs` holds `rows * cols` doubles; `out` holds `rows` doubles.
enum MdclStatus mdcl_bvsb(const double *probs, size_t rows, size_t cols, double *out);

// Area under a learning curve given its mean accuracies (0 to 1), on the
// 0 to 100 scale.
//
// # Safety
// `accuracies` holds `len` doubles; `out` is writable.
enum MdclStatus mdcl_aulc(const double *accuracies, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDCL_H */
