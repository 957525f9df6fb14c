#ifndef OUFIELD_OUFIELD_H
#define OUFIELD_OUFIELD_H

#include <stddef.h>
#include <stdint.h>

#if defined(__GNUC__)
#define OUFIELD_API __attribute__((visibility("default")))
#else
#define OUFIELD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum oufield_status {
  OUFIELD_OK = 0,
  OUFIELD_ERR_USAGE = 1,
  OUFIELD_ERR_CONFIG = 2,
  OUFIELD_ERR_DATA = 3,
  OUFIELD_ERR_DOMAIN = 4,
  OUFIELD_ERR_STABILITY = 5,
  OUFIELD_ERR_NUMERICAL = 6,
  OUFIELD_ERR_UNSUPPORTED = 7,
  OUFIELD_ERR_SAMPLER = 8,
  OUFIELD_ERR_INVALID_HANDLE = 9,
  OUFIELD_ERR_UNKNOWN = 10
} oufield_status;

/* Message for the most recent failure on the calling thread; never NULL. */
OUFIELD_API const char* oufield_last_error(void);
OUFIELD_API const char* oufield_status_name(oufield_status status);

/* Strings handed out by the library are released with this. */
OUFIELD_API void oufield_string_free(char* s);

/* ---- runs driven by a JSON config file ---- */

typedef struct oufield_run oufield_run;

/* config_path may be NULL for validate-only runs. */
OUFIELD_API oufield_status oufield_run_open(const char* config_path, oufield_run** out);
OUFIELD_API oufield_status oufield_run_set_seed(oufield_run* run, uint64_t seed);
OUFIELD_API oufield_status oufield_run_set_threads(oufield_run* run, int threads);
OUFIELD_API oufield_status oufield_run_set_out_dir(oufield_run* run, const char* dir);
OUFIELD_API oufield_status oufield_run_set_bundle(oufield_run* run, const char* bundle_path);

/* Each writes its artifacts and returns a report in *report (may be NULL). */
OUFIELD_API oufield_status oufield_run_check(oufield_run* run, char** report);
OUFIELD_API oufield_status oufield_run_fit(oufield_run* run, char** report);
OUFIELD_API oufield_status oufield_run_forecast(oufield_run* run, char** report);
OUFIELD_API oufield_status oufield_run_simulate(oufield_run* run, char** report);
OUFIELD_API oufield_status oufield_run_validate(oufield_run* run, char** report);

/* Blocks until the process stops. */
OUFIELD_API oufield_status oufield_run_serve(oufield_run* run, const char* host, int port);
OUFIELD_API void oufield_run_close(oufield_run* run);

/* ---- direct model evaluation on a rectangular grid ---- */

typedef struct oufield_model oufield_model;

typedef struct oufield_theta {
  double gamma;
  double alpha;
  double eta;
  double beta;
  double sigma2;
  double delta;
  double T;
} oufield_theta;

/* Uniform wind (u east, v north) on an nx x ny grid; emissions has nx*ny entries. */
OUFIELD_API oufield_status oufield_model_create(int nx, int ny, double dx, double dy, double wind_u, double wind_v,
                                    const double* emissions, const oufield_theta* theta,
                                    oufield_model** out);
OUFIELD_API oufield_status oufield_model_set_theta(oufield_model* model, const oufield_theta* theta);
OUFIELD_API size_t oufield_model_size(const oufield_model* model);
OUFIELD_API oufield_status oufield_model_so2(const oufield_model* model, double* out, size_t n);
OUFIELD_API oufield_status oufield_model_so4_mean(const oufield_model* model, double* out, size_t n);
/* mask may be NULL; nonzero entries mark valid cells. */
OUFIELD_API oufield_status oufield_model_log_likelihood(const oufield_model* model, const double* observed,
                                            const unsigned char* mask, size_t n, double* out);
OUFIELD_API oufield_status oufield_model_sample_field(const oufield_model* model, uint64_t seed, double* out, size_t n);
OUFIELD_API void oufield_model_destroy(oufield_model* model);

/* Bound on ||Psi - Phi||_2 for a symmetric operator with spectrum >= delta. */
OUFIELD_API oufield_status oufield_phi_error_bound(double delta, double horizon, double* out);

#ifdef __cplusplus
}
#endif

#endif
