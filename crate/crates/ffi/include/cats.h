#ifndef CATS_H
#define CATS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Stable result codes. Values never change between releases.
 */
typedef enum CatsStatus {
  CATS_STATUS_OK = 0,
  CATS_STATUS_NULL_POINTER = 1,
  CATS_STATUS_INVALID_UTF8 = 2,
  CATS_STATUS_PANIC = 3,
  CATS_STATUS_OUT_OF_BOUNDS = 10,
  CATS_STATUS_EMPTY_INPUT = 11,
  CATS_STATUS_ALL_MISSING = 12,
  CATS_STATUS_INFEASIBLE = 13,
  CATS_STATUS_SHAPE_MISMATCH = 14,
  CATS_STATUS_ZERO_SLICE = 15,
  CATS_STATUS_NON_FINITE = 16,
  CATS_STATUS_CONFIG_INVALID = 17,
  CATS_STATUS_NON_FINITE_LOSS = 18,
  CATS_STATUS_ZERO_MASS = 19,
  CATS_STATUS_TOO_SHORT = 20,
  CATS_STATUS_LABEL_MISMATCH = 21,
  CATS_STATUS_DIMENSION_MISMATCH = 22,
  CATS_STATUS_INSUFFICIENT_COVERAGE = 23,
  CATS_STATUS_PARSE = 24,
  CATS_STATUS_FORMAT = 25,
  CATS_STATUS_IO = 26,
} CatsStatus;

/*
 A trajectory dataset.
 */
typedef struct CatsDataset CatsDataset;

/*
 Spatial grid plus hours per day.
 */
typedef struct CatsGrid CatsGrid;

/*
 Output of K-anonymity mobility averaging.
 */
typedef struct CatsMatrixSet CatsMatrixSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 NUL-terminated library version; static storage.
 */
const char *cats_version(void);

/*
 Message for the last failed call on this thread; empty after a
 successful call. Valid until the next call on the same thread.
 */
const char *cats_last_error(void);

/*
 # Safety
 `out` must be valid for writes.
 */
enum CatsStatus cats_grid_new(double lat_min,
                              double lat_max,
                              double lon_min,
                              double lon_max,
                              size_t cells_per_side,
                              size_t hours_per_day,
                              struct CatsGrid **out);

/*
 # Safety
 `grid` must come from `cats_grid_new` or be null.
 */
void cats_grid_free(struct CatsGrid *grid);

/*
 Cell containing a point; fails with `OutOfBounds` outside the grid.

 # Safety
 Pointers must be valid.
 */
enum CatsStatus cats_grid_encode(const struct CatsGrid *grid,
                                 double lat,
                                 double lon,
                                 uint32_t *row,
                                 uint32_t *col);

/*
 # Safety
 `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum CatsStatus cats_dataset_read_csv(const char *path,
                                      size_t hours_per_day,
                                      struct CatsDataset **out);

/*
 # Safety
 Pointers must be valid.
 */
enum CatsStatus cats_dataset_write_csv(const struct CatsDataset *ds, const char *path);

/*
 # Safety
 `ds` must come from this library or be null.
 */
void cats_dataset_free(struct CatsDataset *ds);

/*
 Number of (user, day) trajectories; 0 for a null handle.

 # Safety
 `ds` must be valid or null.
 */
size_t cats_dataset_len(const struct CatsDataset *ds);

/*
 # Safety
 `ds` must be valid or null.
 */
size_t cats_dataset_point_count(const struct CatsDataset *ds);

/*
 Synthetic home/work world with default haunts.

 # Safety
 Pointers must be valid.
 */
enum CatsStatus cats_world_generate(const struct CatsGrid *grid,
                                    size_t users,
                                    size_t days,
                                    double noise,
                                    uint64_t seed,
                                    struct CatsDataset **out);

/*
 Applies one geomasking mechanism (`rp`, `gg`, `ldp` or `tdp`) with
 default noise parameters.

 # Safety
 Pointers must be valid.
 */
enum CatsStatus cats_mask(const struct CatsDataset *ds,
                          const char *mechanism,
                          uint64_t seed,
                          struct CatsDataset **out);

/*
 Aggregates every user, clusters users into groups of at least `k`
 and averages their matrices. `clusters` of 0 picks the default count.

 # Safety
 Pointers must be valid.
 */
enum CatsStatus cats_kama(const struct CatsDataset *ds,
                          const struct CatsGrid *grid,
                          size_t k,
                          size_t clusters,
                          uint64_t seed,
                          struct CatsMatrixSet **out);

/*
 # Safety
 `set` must be valid or null.
 */
size_t cats_matrix_set_cluster_count(const struct CatsMatrixSet *set);

/*
 # Safety
 `set` must be valid or null.
 */
size_t cats_matrix_set_min_cluster_size(const struct CatsMatrixSet *set);

/*
 # Safety
 `set` must come from `cats_kama` or be null.
 */
void cats_matrix_set_free(struct CatsMatrixSet *set);

/*
 Minimum-cost perfect matching on a row-major `n × n` cost matrix.
 Writes the column of each row into `perm` (length `n`).

 # Safety
 `cost` must hold `n * n` values, `perm` room for `n`.
 */
enum CatsStatus cats_lsa_solve(const double *cost, size_t n, size_t *perm, double *total);

/*
 Jensen-Shannon divergence (base 2) between two histograms of length `len`.

 # Safety
 `a` and `b` must hold `len` values.
 */
enum CatsStatus cats_jsd(const double *a, const double *b, size_t len, double *out);

/*
 W₂ between two `n × n` grid histograms, in cell units.

 # Safety
 `a` and `b` must hold `n * n` values.
 */
enum CatsStatus cats_wasserstein2(const double *a, const double *b, size_t n, double *out);

/*
 Great-circle distance in km.
 */
double cats_haversine_km(double lat1, double lon1, double lat2, double lon2);

/*
 Runs every pipeline stage into `out_dir`. `config_path` may be null
 for the defaults.

 # Safety
 Strings must be NUL-terminated or null where allowed.
 */
enum CatsStatus cats_pipeline_run(const char *config_path, const char *out_dir, uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CATS_H */
