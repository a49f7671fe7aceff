#ifndef DETFUSE_DETFUSE_H
#define DETFUSE_DETFUSE_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(DETFUSE_BUILDING_LIBRARY)
#    define DF_API __declspec(dllexport)
#  else
#    define DF_API __declspec(dllimport)
#  endif
#else
#  define DF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes for the command-line tool. */
typedef enum df_status {
    DF_OK = 0,
    DF_ERR_USAGE = 1,   /* bad arguments, unknown keys or subcommands */
    DF_ERR_DATA = 2,    /* malformed or inconsistent input files */
    DF_ERR_NUMERIC = 3  /* optimizer or calibration failure */
} df_status;

typedef enum df_protocol { DF_AP_VOC07 = 0, DF_AP_ALL_POINTS = 1 } df_protocol;

typedef struct df_config df_config;
typedef struct df_result df_result;
typedef struct df_corpus df_corpus;

DF_API const char* df_version(void);
/* Message of the last failed call on this thread; "" when none. */
DF_API const char* df_last_error(void);

/* Run configuration (key = value). */
DF_API df_status df_config_create(df_config** out);
DF_API void df_config_destroy(df_config* config);
/* Merges a key = value file into the configuration; later values win. */
DF_API df_status df_config_load(df_config* config, const char* path);
DF_API df_status df_config_set(df_config* config, const char* key, const char* value);
/* "key=value" */
DF_API df_status df_config_override(df_config* config, const char* assignment);
/* Borrowed pointer valid until the key changes; NULL when unset. */
DF_API const char* df_config_get(const df_config* config, const char* key);
DF_API size_t df_config_key_count(void);
DF_API const char* df_config_key_pattern(size_t index);
DF_API const char* df_config_key_help(size_t index);

/* Runs simulate, calibrate, featurize, train, rerank, eval, analyze or bound. On success
   *out receives a result with the printed summary and the artifact list. */
DF_API df_status df_run(const df_config* config, const char* subcommand, df_result** out);
DF_API const char* df_result_summary(const df_result* result);
DF_API size_t df_result_artifact_count(const df_result* result);
DF_API const char* df_result_artifact(const df_result* result, size_t index);
DF_API void df_result_destroy(df_result* result);

/* Detection files. Rosters are comma-separated name lists. */
DF_API df_status df_corpus_load(const char* path, const char* detectors, const char* classes, df_corpus** out);
DF_API size_t df_corpus_size(const df_corpus* corpus);
DF_API size_t df_corpus_image_count(const df_corpus* corpus);
DF_API void df_corpus_destroy(df_corpus* corpus);

/* Boxes are {x_min, y_min, x_max, y_max}. */
DF_API df_status df_iou(const double a[4], const double b[4], double* out);
DF_API df_status df_coverage(const double candidate[4], const double dominator[4], double* out);
DF_API df_status df_apply_platt(double alpha, double beta, double score, double* out);
/* hits[i] != 0 marks a true positive at rank i. DF_ERR_DATA when n_positives is 0. */
DF_API df_status df_average_precision(const unsigned char* hits, size_t n, size_t n_positives,
                                      df_protocol protocol, double* out);

#ifdef __cplusplus
}
#endif

#endif
