/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef OMEGA_LAB_H
#define OMEGA_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OmegaStatus {
  OMEGA_STATUS_OK = 0,
  OMEGA_STATUS_INVALID_ARGUMENT = 1,
  OMEGA_STATUS_OUT_OF_RANGE = 2,
  OMEGA_STATUS_RESOURCE = 3,
  OMEGA_STATUS_IO = 4,
  OMEGA_STATUS_PARSE = 5,
  OMEGA_STATUS_INTERNAL = 6,
  OMEGA_STATUS_NULL_POINTER = 7,
  OMEGA_STATUS_PANIC = 8,
} OmegaStatus;

/**
 * Beatty sequence handle.
 */
typedef struct OmegaBeatty OmegaBeatty;

/**
 * Ω table handle.
 */
typedef struct OmegaTable OmegaTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread ("" after a success).
 */
const char *omega_last_error(void);

/**
 * Build the Ω table for `2 <= limit <= 2^32 - 1`.
 *
 * # Safety
 * `out_table` must be a valid pointer; on success it receives a handle owned by
 * the caller.
 */
enum OmegaStatus omega_table_build(uint64_t limit, struct OmegaTable **out_table);

/**
 * Load a table from the binary dump format.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_table` a valid pointer.
 */
enum OmegaStatus omega_table_load(const char *path, struct OmegaTable **out_table);

/**
 * Write a table in the binary dump format.
 *
 * # Safety
 * `table` must come from this library; `path` must be NUL-terminated.
 */
enum OmegaStatus omega_table_save(const struct OmegaTable *table, const char *path);

/**
 * Release a table. Null is ignored.
 *
 * # Safety
 * `table` must come from this library and not be used afterwards.
 */
void omega_table_free(struct OmegaTable *table);

/**
 * # Safety
 * Pointers must be valid.
 */
enum OmegaStatus omega_table_limit(const struct OmegaTable *table, uint64_t *out_limit);

/**
 * Ω(n) for `1 <= n <= limit`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OmegaStatus omega_table_omega(const struct OmegaTable *table, uint64_t n, uint8_t *out_omega);

/**
 * λ(n) = (-1)^Ω(n) for `1 <= n <= limit`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OmegaStatus omega_table_liouville(const struct OmegaTable *table,
                                       uint64_t n,
                                       int8_t *out_lambda);

/**
 * For primes `p <= prime_cap`, the fraction with Ω(p + shift) ≡ r mod
 * `modulus`, written to `out_densities[r]` (`out_len >= modulus`).
 *
 * # Safety
 * `out_densities` must hold `out_len` doubles.
 */
enum OmegaStatus omega_table_shifted_prime_densities(const struct OmegaTable *table,
                                                     int8_t shift,
                                                     uint64_t modulus,
                                                     uint64_t prime_cap,
                                                     double *out_densities,
                                                     size_t out_len);

/**
 * Beatty sequence `[alpha n + beta]` from real literals such as `"sqrt2"`,
 * `"3/2"` or `"0.25"`.
 *
 * # Safety
 * Strings must be NUL-terminated; `out_beatty` must be valid.
 */
enum OmegaStatus omega_beatty_new(const char *alpha,
                                  const char *beta,
                                  struct OmegaBeatty **out_beatty);

/**
 * # Safety
 * `beatty` must come from this library and not be used afterwards.
 */
void omega_beatty_free(struct OmegaBeatty *beatty);

/**
 * `[alpha n + beta]`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OmegaStatus omega_beatty_term(const struct OmegaBeatty *beatty,
                                   uint64_t n,
                                   uint64_t *out_term);

/**
 * Whether `m` is a term of the sequence.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OmegaStatus omega_beatty_contains(const struct OmegaBeatty *beatty,
                                       uint64_t m,
                                       bool *out_member);

/**
 * `T_beta^n(start)` on the `dim`-torus; negative `n` applies the inverse.
 *
 * # Safety
 * `start` and `out_point` must each hold `dim` values.
 */
enum OmegaStatus omega_unipotent_orbit(size_t dim,
                                       uint64_t beta,
                                       const uint64_t *start,
                                       int64_t n,
                                       uint64_t *out_point);

/**
 * For `P(n) = sum c_j n^j` of degree `k = len - 1 >= 1`, the parameter
 * `x0` and start point (`k` values) whose orbit's last coordinate is
 * `P(n) mod 1`.
 *
 * # Safety
 * `coeffs` must hold `len` values, `out_start` `len - 1`.
 */
enum OmegaStatus omega_initial_point_of_poly(const uint64_t *coeffs,
                                             size_t len,
                                             uint64_t *out_x0,
                                             uint64_t *out_start);

/**
 * Canonical coefficients (`dim + 1` values) of the polynomial traced by the
 * last coordinate of `T_x0^n(start)`.
 *
 * # Safety
 * `start` must hold `dim` values, `out_coeffs` `dim + 1`.
 */
enum OmegaStatus omega_poly_of_initial_point(uint64_t x0,
                                             const uint64_t *start,
                                             size_t dim,
                                             uint64_t *out_coeffs);

/**
 * Densities of `{n <= n_max : Ω([alpha n + beta]) ≡ r mod modulus}` written
 * to `out_densities[r]` (`out_len >= modulus`).
 *
 * # Safety
 * Strings must be NUL-terminated; `out_densities` must hold `out_len`
 * doubles.
 */
enum OmegaStatus omega_equidistribution(const struct OmegaTable *table,
                                        const char *alpha,
                                        const char *beta,
                                        uint64_t modulus,
                                        uint64_t n_max,
                                        double *out_densities,
                                        size_t out_len);

/**
 * `(1/n_max) sum_{n <= n_max} λ([alpha n + beta])`.
 *
 * # Safety
 * Strings must be NUL-terminated; `out_mean` must be valid.
 */
enum OmegaStatus omega_liouville_beatty_mean(const struct OmegaTable *table,
                                             const char *alpha,
                                             const char *beta,
                                             uint64_t n_max,
                                             double *out_mean);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OMEGA_LAB_H */
