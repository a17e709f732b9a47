#ifndef FLOWSYNTH_H
#define FLOWSYNTH_H

/* C interface to the flowsynth library. Every object is an opaque handle
 * released with its matching *_free function (NULL is accepted). Functions
 * return FS_OK or an error code; the message of the most recent failure on
 * the calling thread is available from fs_last_error(). Output handles are
 * only written on success. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FS_API __declspec(dllexport)
#else
#define FS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fs_status {
  FS_OK = 0,
  FS_ERR_INVALID_ARGUMENT = 1,
  FS_ERR_SHAPE = 2,
  FS_ERR_NON_FINITE = 3,
  FS_ERR_IO = 4,
  FS_ERR_PARSE = 5,
  FS_ERR_FORMAT = 6,
  FS_ERR_SOLVER = 7,
  FS_ERR_INTERNAL = 8
} fs_status;

typedef struct fs_schema fs_schema;
typedef struct fs_table fs_table;
typedef struct fs_config fs_config;
typedef struct fs_checkpoint fs_checkpoint;
typedef struct fs_report fs_report;
typedef struct fs_histogram fs_histogram;

FS_API const char* fs_version(void);
FS_API const char* fs_last_error(void);
FS_API const char* fs_status_name(fs_status s);
/* Keeps large temporary buffers in the heap between training steps (glibc). */
FS_API void fs_tune_allocator(void);

/* Schemas */
FS_API fs_status fs_schema_read(const char* path, fs_schema** out);
/* Column kinds from the cell contents; label may be NULL or empty. */
FS_API fs_status fs_schema_infer(const char* csv_path, const char* label, fs_schema** out);
FS_API fs_status fs_schema_write(const fs_schema* s, const char* path);
FS_API size_t fs_schema_columns(const fs_schema* s);
FS_API void fs_schema_free(fs_schema* s);

/* Tables */
FS_API fs_status fs_table_read(const char* path, const fs_schema* schema, fs_table** out);
FS_API fs_status fs_table_write(const fs_table* t, const char* path);
FS_API size_t fs_table_rows(const fs_table* t);
FS_API void fs_table_free(fs_table* t);

/* Training configuration (key=value documents) */
FS_API fs_status fs_config_default(fs_config** out);
/* The configuration tuned for the built-in benchmark. */
FS_API fs_status fs_config_benchmark(fs_config** out);
FS_API fs_status fs_config_read(const char* path, fs_config** out);
FS_API fs_status fs_config_set(fs_config* c, const char* key, const char* value);
FS_API fs_status fs_config_write(const fs_config* c, const char* path);
FS_API void fs_config_free(fs_config* c);

/* Training and sampling */
typedef enum fs_step_kind { FS_STEP_AUTOENCODER, FS_STEP_DISCRIMINATOR, FS_STEP_GENERATOR, FS_STEP_DENSITY, FS_STEP_VALIDATION } fs_step_kind;
/* value is the step's main loss, or the score for validation steps. */
typedef void (*fs_progress_fn)(fs_step_kind kind, int64_t iteration, double value, void* user);

FS_API fs_status fs_fit(const fs_table* train, const fs_table* val, const fs_config* config, fs_progress_fn progress, void* user,
                        fs_checkpoint** out);
FS_API fs_status fs_sample(const fs_checkpoint* c, size_t n, uint64_t seed, fs_table** out);
FS_API fs_status fs_checkpoint_save(const fs_checkpoint* c, const char* path);
FS_API fs_status fs_checkpoint_load(const char* path, fs_checkpoint** out);
FS_API int64_t fs_checkpoint_iteration(const fs_checkpoint* c);
FS_API double fs_checkpoint_score(const fs_checkpoint* c);
FS_API fs_status fs_checkpoint_schema(const fs_checkpoint* c, fs_schema** out);
FS_API void fs_checkpoint_free(fs_checkpoint* c);

/* Reports: ordered key/value pairs */
FS_API size_t fs_report_size(const fs_report* r);
FS_API const char* fs_report_key(const fs_report* r, size_t i);
FS_API const char* fs_report_value(const fs_report* r, size_t i);
FS_API fs_status fs_report_get(const fs_report* r, const char* key, double* out);
FS_API fs_status fs_report_write(const fs_report* r, const char* path);
FS_API void fs_report_free(fs_report* r);

/* Downstream evaluation of fake against test; task is "cls" or "reg". */
FS_API fs_status fs_evaluate(const fs_table* fake, const fs_table* test, const char* task, const uint64_t* seeds, size_t n_seeds,
                             fs_report** out);

/* Nearest-real distance of every fake record. Encoding comes from the
 * checkpoint when given, otherwise it is fitted on real. */
FS_API fs_status fs_distances(const fs_table* real, const fs_table* fake, const fs_checkpoint* encoding, int bins, fs_histogram** out);
FS_API double fs_histogram_mean(const fs_histogram* h);
FS_API double fs_histogram_median(const fs_histogram* h);
FS_API fs_status fs_histogram_write(const fs_histogram* h, const char* path);
FS_API void fs_histogram_free(fs_histogram* h);

/* Full black-box membership attack; encoding as for fs_distances, fitted on
 * the members when no checkpoint is given. */
FS_API fs_status fs_attack(const fs_table* fake, const fs_table* members, const fs_table* nonmembers, const fs_checkpoint* encoding,
                           fs_report** out);

/* Writes the synthetic benchmark (tables, schema, manifest) into dir. */
FS_API fs_status fs_synthbench_write(const char* dir, uint64_t data_seed, const uint64_t* seeds, size_t n_seeds);

typedef void (*fs_log_fn)(const char* line, void* user);
/* Runs every seed of a manifest; writes checkpoints, fakes and reports. */
FS_API fs_status fs_run_manifest(const char* path, fs_log_fn log, void* user);

#ifdef __cplusplus
}
#endif

#endif
