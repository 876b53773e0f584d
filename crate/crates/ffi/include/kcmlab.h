#ifndef KCMLAB_H
#define KCMLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Every site outside the region occupied.
 */
#define KCMLAB_BC_OCCUPIED 0

/*
 Every site outside the region empty.
 */
#define KCMLAB_BC_EMPTY 1

typedef enum KcmStatus {
  KCM_STATUS_OK = 0,
  KCM_STATUS_NULL_POINTER = 1,
  KCM_STATUS_INVALID_ARGUMENT = 2,
  KCM_STATUS_PARSE = 3,
  KCM_STATUS_MISSING_BOUNDARY = 4,
  KCM_STATUS_TOO_LARGE = 5,
  KCM_STATUS_NUMERIC = 6,
  KCM_STATUS_PANIC = 7,
} KcmStatus;

/*
 Opaque configuration on a rectangular region.
 */
typedef struct KcmConfig KcmConfig;

/*
 Opaque update family.
 */
typedef struct KcmFamily KcmFamily;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or NULL. Valid until the next failing call.
 */
const char *kcmlab_last_error_message(void);

/*
 Library version as a static string.
 */
const char *kcmlab_version(void);

/*
 # Safety
 `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum KcmStatus kcmlab_family_catalog(const char *name, struct KcmFamily **out);

/*
 Parses `{"dim":2,"rules":[[[dx,dy],...],...]}`.

 # Safety
 `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum KcmStatus kcmlab_family_from_json(const char *json, struct KcmFamily **out);

/*
 # Safety
 `family` must come from this library and not be freed twice. NULL is ignored.
 */
void kcmlab_family_free(struct KcmFamily *family);

/*
 Classification report as a JSON string, released with [`kcmlab_string_free`].

 # Safety
 `family` must be a live handle and `out` a writable pointer.
 */
enum KcmStatus kcmlab_classify_json(const struct KcmFamily *family, char **out);

/*
 Parses the text format: a `W H origin_x origin_y` header, then H rows of `0`/`1`.

 # Safety
 `src` must be a NUL-terminated string and `out` a writable pointer.
 */
enum KcmStatus kcmlab_config_parse(const char *src, struct KcmConfig **out);

/*
 # Safety
 `config` must be a live handle and `out` a writable pointer.
 */
enum KcmStatus kcmlab_config_to_text(const struct KcmConfig *config, char **out);

/*
 Number of empty sites.

 # Safety
 `config` must be a live handle and `out` a writable pointer.
 */
enum KcmStatus kcmlab_config_vacancies(const struct KcmConfig *config, size_t *out);

/*
 # Safety
 `config` must come from this library and not be freed twice. NULL is ignored.
 */
void kcmlab_config_free(struct KcmConfig *config);

/*
 Bootstrap closure of `config`. `rounds` may be NULL.

 # Safety
 Handles must be live; `out` must be writable; `rounds` writable or NULL.
 */
enum KcmStatus kcmlab_closure(const struct KcmFamily *family,
                              const struct KcmConfig *config,
                              uint32_t boundary,
                              struct KcmConfig **out,
                              uint32_t *rounds);

/*
 Relaxation time of the dynamics restricted to the ergodic component of `config`.

 # Safety
 Handles must be live and `out` writable.
 */
enum KcmStatus kcmlab_relaxation_time(const struct KcmFamily *family,
                                      const struct KcmConfig *config,
                                      uint32_t boundary,
                                      double q,
                                      double *out);

/*
 # Safety
 `s` must be a string returned by this library, not freed before. NULL is ignored.
 */
void kcmlab_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* KCMLAB_H */
