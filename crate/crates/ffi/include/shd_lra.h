#ifndef SHD_LRA_H
#define SHD_LRA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ShdMethod {
  SHD_METHOD_LRA = 0,
  SHD_METHOD_MUSIC = 1,
} ShdMethod;

typedef enum ShdStatus {
  SHD_STATUS_OK = 0,
  // Null pointer, zero size or too small output buffer.
  SHD_STATUS_INVALID_ARGUMENT = 1,
  SHD_STATUS_CONFIG = 2,
  SHD_STATUS_IO = 3,
  SHD_STATUS_NUMERIC = 4,
  SHD_STATUS_PANIC = 5,
} ShdStatus;

typedef struct ShdDictionary ShdDictionary;

typedef struct ShdGeometry ShdGeometry;

typedef struct ShdComplex {
  double re;
  double im;
} ShdComplex;

typedef struct ShdDoa {
  double theta_deg;
  double phi_deg;
  double residual;
  double confidence;
  uint64_t block_index;
  uint64_t dict_index;
  uint32_t method;
} ShdDoa;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL terminated,
// truncated to `len`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t shd_last_error(char *buf, size_t len);

// Builds the dictionary of patterns on an `elev_step_deg` x `azim_step_deg` grid.
//
// # Safety
// `out` must be a valid pointer; on success it receives a new dictionary.
enum ShdStatus shd_dictionary_build(double elev_step_deg,
                                    double azim_step_deg,
                                    uint32_t order,
                                    struct ShdDictionary **out);

// Loads a dictionary cache written by `shd-lra dict`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ShdStatus shd_dictionary_load(const char *path, struct ShdDictionary **out);

// # Safety
// `dict` must be null or come from a dictionary constructor, and not be used afterwards.
void shd_dictionary_free(struct ShdDictionary *dict);

// Number of entries, or 0 for a null handle.
//
// # Safety
// `dict` must be null or a live dictionary.
size_t shd_dictionary_len(const struct ShdDictionary *dict);

// # Safety
// `dict` must be null or a live dictionary.
uint32_t shd_dictionary_order(const struct ShdDictionary *dict);

// Direction of entry `index`.
//
// # Safety
// `dict` must be a live dictionary; `theta_deg` and `phi_deg` valid pointers.
enum ShdStatus shd_dictionary_direction(const struct ShdDictionary *dict,
                                        size_t index,
                                        double *theta_deg,
                                        double *phi_deg);

// The bundled 32-capsule rigid array.
//
// # Safety
// `out` must be a valid pointer.
enum ShdStatus shd_geometry_rigid32(struct ShdGeometry **out);

// Loads a geometry TOML file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum ShdStatus shd_geometry_load(const char *path, struct ShdGeometry **out);

// # Safety
// `geom` must be null or come from a geometry constructor, and not be used afterwards.
void shd_geometry_free(struct ShdGeometry *geom);

// # Safety
// `geom` must be null or a live geometry.
size_t shd_geometry_capsule_count(const struct ShdGeometry *geom);

// Writes the `(order+1)^2` pattern coefficients for a direction into `out`.
//
// # Safety
// `out` must point to `len` writable elements.
enum ShdStatus shd_mdp(double theta_deg,
                       double phi_deg,
                       uint32_t order,
                       struct ShdComplex *out,
                       size_t len);

// Localizes one coefficient matrix of `rows = (order+1)^2` rows and `cols`
// columns, stored column by column.
//
// # Safety
// `dict` must be live, `entries` must hold `rows * cols` elements and `out` be valid.
enum ShdStatus shd_localize_block(const struct ShdDictionary *dict,
                                  const struct ShdComplex *entries,
                                  size_t rows,
                                  size_t cols,
                                  struct ShdDoa *out);

// Runs the full pipeline (default analysis settings) on a signal stored
// channel by channel (`channels * len` samples). Writes up to `capacity`
// estimates, ordered by block, and the number produced to `written`.
// `method` is a [`ShdMethod`] value.
//
// # Safety
// Handles must be live; `samples` must hold `channels * len` values; `out`
// must hold `capacity` elements; `written` must be valid.
enum ShdStatus shd_localize_signal(const struct ShdGeometry *geom,
                                   const struct ShdDictionary *dict,
                                   const double *samples,
                                   size_t channels,
                                   size_t len,
                                   double sample_rate_hz,
                                   uint32_t method,
                                   struct ShdDoa *out,
                                   size_t capacity,
                                   size_t *written);

// Great-circle angle between two directions in degrees, or NaN for an
// invalid direction.
double shd_angular_error_deg(double theta1_deg,
                             double phi1_deg,
                             double theta2_deg,
                             double phi2_deg);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SHD_LRA_H */
