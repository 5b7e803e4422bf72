/* qgrom — two-layer quasi-geostrophic flow solver with a randomized-POD /
 * LSTM reduced order model.
 *
 * C interface to the shared library: opaque handles plus status codes. All
 * functions are thread-compatible; the last-error message is thread-local.
 */
#ifndef QGROM_H
#define QGROM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qgrom_status {
  QGROM_OK = 0,
  QGROM_ERR_INVALID_ARGUMENT = 1,
  QGROM_ERR_NUMERIC = 2, /* solver/training non-convergence, blow-up */
  QGROM_ERR_IO = 3,
  QGROM_ERR_FORMAT = 4, /* malformed archive: magic, truncation, checksum */
  QGROM_ERR_INTERNAL = 5
} qgrom_status;

const char* qgrom_version(void);
const char* qgrom_status_name(qgrom_status status);

/* Message from the most recent failing call on this thread; "" if none. */
const char* qgrom_last_error(void);

/* Runs one config-driven workflow. command is one of: simulate, sweep, pod,
 * rpod, train, predict, evaluate, bench. config_json is the UTF-8 JSON
 * document for that command (unknown keys are rejected). Progress lines go
 * to stderr; with "json_log": true, machine-readable stage events go to
 * stdout. */
qgrom_status qgrom_run(const char* command, const char* config_json);

/* Same, with progress logging suppressed. */
qgrom_status qgrom_run_quiet(const char* command, const char* config_json);

/* ---- snapshot matrix archives (*.qgs) ---- */

typedef struct qgrom_snapshots qgrom_snapshots;

qgrom_status qgrom_snapshots_open(const char* path, qgrom_snapshots** out);
void qgrom_snapshots_close(qgrom_snapshots* snapshots);

/* Any out pointer may be NULL. */
qgrom_status qgrom_snapshots_info(const qgrom_snapshots* snapshots,
                                  int64_t* n_cells, int64_t* n_columns,
                                  int32_t* n_samples, int32_t* n_times,
                                  int32_t* param_dim);

/* Copies one fluctuation column (n_cells values) into buffer. */
qgrom_status qgrom_snapshots_column(const qgrom_snapshots* snapshots,
                                    int64_t column, double* buffer,
                                    size_t buffer_len);

/* ---- reduced bases ---- */

typedef struct qgrom_basis qgrom_basis;

/* Deterministic POD truncated to rank modes. */
qgrom_status qgrom_pod(const qgrom_snapshots* snapshots, int32_t rank,
                       qgrom_basis** out);

/* Randomized POD with oversampling and subspace iterations. */
qgrom_status qgrom_rpod(const qgrom_snapshots* snapshots, int32_t rank,
                        int32_t oversample, int32_t power, uint64_t seed,
                        qgrom_basis** out);

void qgrom_basis_close(qgrom_basis* basis);

qgrom_status qgrom_basis_info(const qgrom_basis* basis, int64_t* n_cells,
                              int32_t* n_modes);

/* Copies the retained singular values (n_modes of them) into buffer. */
qgrom_status qgrom_basis_singular_values(const qgrom_basis* basis,
                                         double* buffer, size_t buffer_len);

/* Copies one mode (n_cells values) into buffer. */
qgrom_status qgrom_basis_mode(const qgrom_basis* basis, int32_t mode,
                              double* buffer, size_t buffer_len);

#ifdef __cplusplus
}
#endif

#endif /* QGROM_H */
