#ifndef COREFLOW_H
#define COREFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define COREFLOW_OK 0

#define COREFLOW_ERR_INVALID_WORKFLOW 1

#define COREFLOW_ERR_PARSE 2

#define COREFLOW_ERR_NULL_ARGUMENT 3

#define COREFLOW_ERR_BAD_UTF8 4

/**
 * Opaque workflow handle.
 */
typedef struct CoreflowWorkflow CoreflowWorkflow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Returns the most recent error message on this thread, or NULL if the last
 * call succeeded. Free with `coreflow_string_free`.
 */
char *coreflow_last_error_message(void);

/**
 * Parses workflow text into a new handle stored in `out`. On failure `out`
 * is left untouched and a status code is returned.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out` a valid pointer.
 */
int coreflow_workflow_parse(const char *text, struct CoreflowWorkflow **out);

/**
 * Releases a workflow handle. NULL is a no-op.
 *
 * # Safety
 * `workflow` must be a handle returned by this library, released once.
 */
void coreflow_workflow_free(struct CoreflowWorkflow *workflow);

/**
 * Releases a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be a string returned by this library, released once.
 */
void coreflow_string_free(char *s);

/**
 * Number of steps in the workflow, or -1 for a NULL handle.
 *
 * # Safety
 * `workflow` must be NULL or a live handle from this library.
 */
int coreflow_workflow_step_count(const struct CoreflowWorkflow *workflow);

/**
 * Serializes the workflow into canonical text. Returns NULL on a NULL
 * handle. Free the result with `coreflow_string_free`.
 *
 * # Safety
 * `workflow` must be NULL or a live handle from this library.
 */
char *coreflow_workflow_serialize(const struct CoreflowWorkflow *workflow);

/**
 * Validates the workflow: COREFLOW_OK when valid,
 * COREFLOW_ERR_INVALID_WORKFLOW when any error-severity issue exists (the
 * report is available via `coreflow_last_error_message`).
 *
 * # Safety
 * `workflow` must be NULL or a live handle from this library.
 */
int coreflow_workflow_validate(const struct CoreflowWorkflow *workflow);

/**
 * The validation report as JSON (`{"valid": bool, "issues": [...]}`).
 * Returns NULL on a NULL handle. Free with `coreflow_string_free`.
 *
 * # Safety
 * `workflow` must be NULL or a live handle from this library.
 */
char *coreflow_workflow_validation_report(const struct CoreflowWorkflow *workflow);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COREFLOW_H */
