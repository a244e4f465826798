#ifndef DECOYQKD_H
#define DECOYQKD_H

#include <stddef.h>
#include <stdint.h>

#define DQ_OK 0

#define DQ_ERR_NULL -1

#define DQ_ERR_UTF8 -2

#define DQ_ERR_CONFIG -3

#define DQ_ERR_DOMAIN -4

#define DQ_ERR_NUMERIC -5

#define DQ_ERR_ESTIMATION -6

#define DQ_ERR_NO_RATE -7

#define DQ_ERR_BUFFER -8

#define DQ_ERR_PANIC -9

/**
 * Opaque scenario handle.
 */
typedef struct DqScenario DqScenario;

/**
 * Creates a scenario from `key = value` configuration text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
int32_t dq_scenario_from_config(const char *text, struct DqScenario **out);

/**
 * Creates a scenario with default parameters for a scheme name such as
 * `"wcp-threshold"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
int32_t dq_scenario_from_scheme(const char *name, struct DqScenario **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `h` must come from a `dq_scenario_*` constructor and not be used afterwards.
 */
void dq_scenario_free(struct DqScenario *h);

/**
 * Number of free parameters optimized for this scenario.
 *
 * # Safety
 * `h` must be a live handle and `out` a writable pointer.
 */
int32_t dq_parameter_count(const struct DqScenario *h, size_t *out);

/**
 * Copies the name of parameter `i` into `buf` as a NUL-terminated string.
 *
 * # Safety
 * `buf` must hold `len` bytes.
 */
int32_t dq_parameter_name(const struct DqScenario *h, size_t i, char *buf, size_t len);

/**
 * Key rate at distance `d` km for explicit parameters `x[0..len]`, in the
 * order of the scenario's axes.
 *
 * # Safety
 * `x` must point to `len` doubles and `out` must be writable.
 */
int32_t dq_key_rate(const struct DqScenario *h, const double *x, size_t len, double d, double *out);

/**
 * Optimized key rate at `d` km. When `x_out` is non-null the optimal
 * parameters are written to it; `x_len` must then equal the parameter count.
 *
 * # Safety
 * `rate` must be writable; `x_out`, if non-null, must hold `x_len` doubles.
 */
int32_t dq_optimize(const struct DqScenario *h,
                    double d,
                    double *rate,
                    double *x_out,
                    size_t x_len);

/**
 * Distance in km at which the optimized key rate vanishes.
 *
 * # Safety
 * `out` must be writable.
 */
int32_t dq_cutoff(const struct DqScenario *h, double *out);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length in bytes,
 * excluding the terminator, so callers can size a retry.
 *
 * # Safety
 * `buf`, if non-null, must hold `len` bytes.
 */
size_t dq_last_error(char *buf, size_t len);

#endif  /* DECOYQKD_H */
