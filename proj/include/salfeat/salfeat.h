#ifndef SALFEAT_SALFEAT_H
#define SALFEAT_SALFEAT_H

/* C interface of the salfeat library. All handles are opaque; every function
 * returning sf_status leaves a message retrievable with sf_last_error() on
 * failure (per thread). Status values double as process exit codes. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SF_API __declspec(dllexport)
#else
#define SF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sf_status {
  SF_OK = 0,
  SF_ERR_DATA = 2,     /* bad or missing input data, I/O failure */
  SF_ERR_CONFIG = 3,   /* invalid configuration, protocol or layout */
  SF_ERR_ARGUMENT = 4, /* null handle or out-of-range argument */
  SF_ERR_INTERNAL = 5
} sf_status;

typedef enum sf_log_level { SF_LOG_INFO = 0, SF_LOG_WARNING = 1, SF_LOG_ERROR = 2 } sf_log_level;

typedef void (*sf_log_fn)(sf_log_level level, const char* message, void* user);

typedef struct sf_run sf_run;
typedef struct sf_image sf_image;
typedef struct sf_map sf_map;
typedef struct sf_fixmap sf_fixmap;

SF_API const char* sf_version(void);
/* Message of the last failure on this thread, "" if none. */
SF_API const char* sf_last_error(void);
/* Error category of the last failure on this thread (e.g. "validation"). */
SF_API const char* sf_last_error_kind(void);

/* ---- batch runs ---- */

SF_API sf_status sf_run_open(const char* config_path, sf_run** out);
SF_API sf_status sf_run_open_text(const char* yaml_text, const char* base_dir, sf_run** out);
SF_API void sf_run_close(sf_run* run);
SF_API sf_status sf_run_set_seed(sf_run* run, uint64_t seed);
SF_API sf_status sf_run_set_jobs(sf_run* run, int jobs);
SF_API sf_status sf_run_set_output_dir(sf_run* run, const char* path);
SF_API sf_status sf_run_set_log(sf_run* run, sf_log_fn fn, void* user);

SF_API sf_status sf_cmd_synth(sf_run* run);
SF_API sf_status sf_cmd_saliency(sf_run* run);
SF_API sf_status sf_cmd_features(sf_run* run);
SF_API sf_status sf_cmd_crossval(sf_run* run);
SF_API sf_status sf_cmd_ablate(sf_run* run);
SF_API sf_status sf_cmd_report(sf_run* run);

/* ---- images and saliency maps ---- */

SF_API sf_status sf_image_load(const char* path, sf_image** out);
SF_API void sf_image_free(sf_image* image);
SF_API sf_status sf_image_size(const sf_image* image, int* width, int* height, int* channels);

/* Built-in model kinds: itti_koch, gbvs, spectral_residual, local_covariance,
 * center_gaussian. The result is min-max normalized to [0,1]; *degenerate is
 * set to 1 for a flat (all-zero) map and may be NULL. */
SF_API sf_status sf_saliency_compute(const sf_image* image, const char* kind, sf_map** out, int* degenerate);

SF_API sf_status sf_map_create(int width, int height, const double* values, sf_map** out);
SF_API void sf_map_free(sf_map* map);
SF_API sf_status sf_map_size(const sf_map* map, int* width, int* height);
/* Copies width*height values, row-major, into out (capacity n). */
SF_API sf_status sf_map_values(const sf_map* map, double* out, size_t n);
SF_API sf_status sf_map_read_smf1(const char* path, sf_map** out);
SF_API sf_status sf_map_write_smf1(const sf_map* map, const char* path);

/* Binary fixation map from n (x, y) pixel pairs; out-of-bounds pairs are dropped. */
SF_API sf_status sf_fixmap_create(int width, int height, const int* xy, size_t n, sf_fixmap** out);
SF_API void sf_fixmap_free(sf_fixmap* map);
SF_API sf_status sf_fixmap_count(const sf_fixmap* map, size_t* hits);

/* ---- metrics ---- */

#define SF_METRIC_COUNT 8
/* Name of metric i in canonical order, NULL when out of range. */
SF_API const char* sf_metric_name(int i);

/* All eight metrics in canonical order. density_sigma <= 0 selects width/32.
 * shuffle_xy holds n_shuffle (x, y) negatives for sauc and may be NULL when
 * n_shuffle is 0, in which case sauc falls back to 0.5 and is flagged.
 * degenerate (may be NULL) receives 1 where a fallback value was used. */
SF_API sf_status sf_evaluate_all(const sf_map* saliency, const sf_fixmap* fixations, double density_sigma,
                                 const int* shuffle_xy, size_t n_shuffle, int n_splits, uint64_t seed,
                                 double values[SF_METRIC_COUNT], int degenerate[SF_METRIC_COUNT]);

#ifdef __cplusplus
}
#endif

#endif
