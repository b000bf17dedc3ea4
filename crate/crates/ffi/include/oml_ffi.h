#ifndef OML_FFI_H
#define OML_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum OmlStatus {
  OML_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  OML_STATUS_NULL_POINTER = 1,
  /**
   * An argument or input file violates a documented constraint.
   */
  OML_STATUS_INVALID_ARGUMENT = 2,
  OML_STATUS_PARSE = 3,
  OML_STATUS_IO = 4,
  OML_STATUS_UNKNOWN_MATERIAL = 5,
  /**
   * A computation produced a non-finite value or found no solution.
   */
  OML_STATUS_NUMERICAL = 6,
  OML_STATUS_PANIC = 7,
} OmlStatus;

typedef enum OmlPolarization {
  OML_POLARIZATION_S = 0,
  OML_POLARIZATION_P = 1,
  OML_POLARIZATION_UNPOLARIZED = 2,
} OmlPolarization;

/**
 * A set of tabulated materials.
 */
typedef struct OmlLibrary OmlLibrary;

/**
 * An ordered list of (material, thickness) layers, top first.
 */
typedef struct OmlStructure OmlStructure;

/**
 * A task configuration with its material library and reward target loaded.
 */
typedef struct OmlTask OmlTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *oml_version(void);

/**
 * Message describing the last failure on this thread, or NULL if none.
 */
const char *oml_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void oml_string_free(char *s);

/**
 * Loads a material manifest (TOML mapping names to `wavelength_nm,n,k`
 * CSV files).
 *
 * # Safety
 * `manifest_path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OmlStatus oml_library_load(const char *manifest_path, struct OmlLibrary **out);

/**
 * Number of materials in the library (0 for NULL).
 *
 * # Safety
 * `library` must be NULL or a live handle.
 */
size_t oml_library_len(const struct OmlLibrary *library);

/**
 * # Safety
 * `library` must be NULL or a handle not yet freed.
 */
void oml_library_free(struct OmlLibrary *library);

/**
 * Parses `[{"material": ..., "thickness_nm": ...}, ...]`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OmlStatus oml_structure_from_json(const char *json, struct OmlStructure **out);

/**
 * Builds a structure from parallel arrays of `n` material names and
 * thicknesses in nm.
 *
 * # Safety
 * `materials` must point to `n` NUL-terminated strings and `thicknesses_nm`
 * to `n` doubles (either may be NULL when `n == 0`).
 */
enum OmlStatus oml_structure_new(const char *const *materials,
                                 const double *thicknesses_nm,
                                 size_t n,
                                 struct OmlStructure **out);

/**
 * Number of layers (0 for NULL).
 *
 * # Safety
 * `structure` must be NULL or a live handle.
 */
size_t oml_structure_len(const struct OmlStructure *structure);

/**
 * Material name (to be released with [`oml_string_free`]) and thickness of
 * layer `index`.
 *
 * # Safety
 * `structure` must be a live handle; the out pointers must be valid.
 */
enum OmlStatus oml_structure_layer(const struct OmlStructure *structure,
                                   size_t index,
                                   char **out_material,
                                   double *out_thickness_nm);

/**
 * Serializes to JSON; release the result with [`oml_string_free`].
 *
 * # Safety
 * `structure` must be a live handle and `out` a valid pointer.
 */
enum OmlStatus oml_structure_to_json(const struct OmlStructure *structure, char **out);

/**
 * # Safety
 * `structure` must be NULL or a handle not yet freed.
 */
void oml_structure_free(struct OmlStructure *structure);

/**
 * Reflectance, transmittance and absorptance of `structure` between air and
 * n = 1.5 glass at `n` wavelengths and one incidence angle. The three output
 * arrays must each hold `n` doubles.
 *
 * # Safety
 * Handles must be live; `wavelengths_nm` and the outputs must point to `n`
 * doubles.
 */
enum OmlStatus oml_spectrum(const struct OmlLibrary *library,
                            const struct OmlStructure *structure,
                            const double *wavelengths_nm,
                            size_t n,
                            double angle_rad,
                            enum OmlPolarization polarization,
                            double *out_r,
                            double *out_t,
                            double *out_a);

/**
 * Loads a task configuration file together with its material library.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OmlStatus oml_task_load(const char *config_path, struct OmlTask **out);

/**
 * # Safety
 * `task` must be NULL or a handle not yet freed.
 */
void oml_task_free(struct OmlTask *task);

/**
 * Reward of `structure` under the task's target spectrum, in [0, 1].
 *
 * # Safety
 * Handles must be live and `out_reward` valid.
 */
enum OmlStatus oml_task_reward(const struct OmlTask *task,
                               const struct OmlStructure *structure,
                               double *out_reward);

/**
 * Refines layer thicknesses within the task's bounds. The refined structure
 * is a new handle; it equals the input when no improvement was found.
 *
 * # Safety
 * Handles must be live and the out pointers valid.
 */
enum OmlStatus oml_task_finetune(const struct OmlTask *task,
                                 const struct OmlStructure *structure,
                                 struct OmlStructure **out_structure,
                                 double *out_reward_before,
                                 double *out_reward_after);

/**
 * Solved emitter temperature and visible enhancement factor of a filter for
 * one view factor, using the task's photometry settings.
 *
 * # Safety
 * Handles must be live and the out pointers valid.
 */
enum OmlStatus oml_task_photometry(const struct OmlTask *task,
                                   const struct OmlStructure *structure,
                                   double view_factor,
                                   double *out_temperature_k,
                                   double *out_chi);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OML_FFI_H */
