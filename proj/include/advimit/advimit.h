#ifndef ADVIMIT_ADVIMIT_H
#define ADVIMIT_ADVIMIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(ADVIMIT_BUILDING_LIBRARY)
#define ADVIMIT_API __attribute__((visibility("default")))
#else
#define ADVIMIT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum advimit_status {
  ADVIMIT_OK = 0,
  ADVIMIT_E_USAGE = 1,     /* malformed config, unknown key, bad argument */
  ADVIMIT_E_NUMERIC = 2,   /* non-finite loss or parameter */
  ADVIMIT_E_IO = 3,
  ADVIMIT_E_CONTRACT = 4,  /* API misuse detected inside the library */
  ADVIMIT_E_INTERNAL = 5
} advimit_status;

typedef struct advimit_config advimit_config;
typedef struct advimit_report advimit_report;

/* Message for the last failing call on this thread; never NULL. */
ADVIMIT_API const char* advimit_last_error(void);
ADVIMIT_API const char* advimit_version(void);

ADVIMIT_API advimit_status advimit_config_create(advimit_config** out);
ADVIMIT_API advimit_status advimit_config_load(const char* path, advimit_config** out);
ADVIMIT_API void advimit_config_free(advimit_config* cfg);
ADVIMIT_API advimit_status advimit_config_set(advimit_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated); *needed receives the full length + 1.
   A NULL buf only reports *needed; a short buf fails with ADVIMIT_E_USAGE. */
ADVIMIT_API advimit_status advimit_config_get(const advimit_config* cfg, const char* key, char* buf, size_t len,
                                              size_t* needed);
/* Full `key = value` text of the config. Same buffer protocol as advimit_config_get. */
ADVIMIT_API advimit_status advimit_config_text(const advimit_config* cfg, char* buf, size_t len, size_t* needed);

/* Runs one training session. Writes the run directory when `out` is set. */
ADVIMIT_API advimit_status advimit_run(const advimit_config* cfg, advimit_report** out);
ADVIMIT_API void advimit_report_free(advimit_report* report);

typedef struct advimit_report_summary {
  uint64_t seed;
  double final_score;
  double auc_normalized;
  double auc_raw;
  long exploration_steps;
  long advice_collected;
  long reuses;
  long reuses_correct;
  long uncertainty_evaluations;
  long episodes;
  double wall_seconds;
  size_t eval_points;
} advimit_report_summary;

ADVIMIT_API advimit_status advimit_report_get_summary(const advimit_report* report, advimit_report_summary* out);
ADVIMIT_API advimit_status advimit_report_get_eval(const advimit_report* report, size_t index, long* step,
                                                   double* mean_return, double* std_return);
/* One CSV row in the report.csv layout, without the header. */
ADVIMIT_API advimit_status advimit_report_row(const advimit_report* report, char* buf, size_t len, size_t* needed);

/* Aggregates run directories (each holding report.csv and config.txt) into a summary CSV. */
ADVIMIT_API advimit_status advimit_aggregate(const char* const* run_dirs, size_t count, const char* out_csv);

/* Value-iterates the environment and writes its Q table. */
ADVIMIT_API advimit_status advimit_teach_oracle(const char* env, double tol, const char* out_path, size_t* states,
                                                double* residual);
/* Loads a network checkpoint as teacher; writes its greedy action per state and
   reports agreement with the oracle's greedy action. */
ADVIMIT_API advimit_status advimit_teach_checkpoint(const char* env, const char* checkpoint, const char* out_path,
                                                    double* agreement);

#ifdef __cplusplus
}
#endif

#endif
