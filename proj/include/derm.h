/* derm.h -- C API of the derm evaluation framework.
 *
 * The C++ core sits behind this boundary: opaque handles, integer status
 * codes, and caller-freed strings. Command entry points return process exit
 * codes (0 clean, 1 partial data failures, 2 configuration/input errors,
 * 3 numeric divergence) and print line-oriented diagnostics on stderr.
 */
#ifndef DERM_H
#define DERM_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum derm_status {
  DERM_OK = 0,
  DERM_ERR_INVALID = 1,
  DERM_ERR_RANGE = 2,
  DERM_ERR_PARSE = 3,
  DERM_ERR_NOT_FOUND = 4,
  DERM_ERR_CONFIG = 5,
  DERM_ERR_INTEGRITY = 6,
  DERM_ERR_TRANSPORT = 7,
  DERM_ERR_CACHE_MISS = 8,
  DERM_ERR_EMPTY = 9,
  DERM_ERR_SCHEMA = 10,
  DERM_ERR_AUTHORITY = 11,
  DERM_ERR_DIVERGENCE = 12,
  DERM_ERR_IO = 13,
  DERM_ERR_INTERNAL = 14
} derm_status;

const char* derm_version(void);

/* Frees any string returned through a char** out-parameter. */
void derm_string_free(char* s);

/* Error context: carries the code and message of the last failed call made
 * with it. Not thread-safe; use one per thread. */
typedef struct derm_context derm_context;

derm_context* derm_context_new(void);
void derm_context_free(derm_context* ctx);
int derm_context_error_code(const derm_context* ctx);
const char* derm_context_error_message(const derm_context* ctx);

/* --- dimensions ---------------------------------------------------------- */

int derm_dimension_count(void);
const char* derm_dimension_name(int index);       /* "Medical Groundedness" */
const char* derm_dimension_identifier(int index); /* "MedicalGroundedness"  */
const char* derm_dimension_alias(int index);      /* "MedG"                 */

/* --- score vectors ------------------------------------------------------- */

typedef struct derm_score_vector derm_score_vector;

derm_score_vector* derm_score_vector_new(void);
void derm_score_vector_free(derm_score_vector* v);
derm_status derm_score_vector_set(derm_context* ctx, derm_score_vector* v, int dim_index,
                                  double value);
int derm_score_vector_has(const derm_score_vector* v, int dim_index);
double derm_score_vector_get(const derm_score_vector* v, int dim_index); /* NaN if absent */
int derm_score_vector_valid_count(const derm_score_vector* v);

/* --- core operations ----------------------------------------------------- */

/* Nearest integer on the 0..5 scale, ties rounding half-up. */
derm_status derm_round_to_integer(derm_context* ctx, double score, int* out);

/* Deterministic six-dimension extraction. *out_scores carries the parsed
 * values; *out_diagnostics_json (optional, may be NULL) receives a JSON map
 * of per-dimension statuses: found|missing|out_of_range|conflicting. */
derm_status derm_parse_scores(derm_context* ctx, const char* text,
                              derm_score_vector** out_scores, char** out_diagnostics_json);

/* Canonical evaluation text from six scores; justifications may be NULL or
 * hold six entries (NULL entries mean empty). */
derm_status derm_render_evaluation(derm_context* ctx, const derm_score_vector* scores,
                                   const char* const justifications[6], char** out_text);

/* Disease name from the trailing "The answer is ..." sentence; empty string
 * when the pattern is absent. */
derm_status derm_parse_final_diagnosis(derm_context* ctx, const char* text, char** out);

/* Prompt registry: render by template id with (key, value) binding pairs, and
 * export the full catalog. */
derm_status derm_render_prompt(derm_context* ctx, const char* template_id,
                               const char* const* keys, const char* const* values,
                               size_t bindings, char** out);
derm_status derm_prompt_catalog(derm_context* ctx, char** out);

/* --- commands ------------------------------------------------------------ */

int derm_cmd_corpus_build(derm_context* ctx, const char* cases_path, const char* stream,
                          const char* config_path, const char* out_dir,
                          const char* expert_csv /* nullable */);
int derm_cmd_bench_run(derm_context* ctx, const char* corpus_dir,
                       const char* models_csv /* comma-separated */, const char* judge,
                       const char* config_path, const char* out_dir);
int derm_cmd_align(derm_context* ctx, const char* bench_file, const char* eval_file,
                   const char* expert_file, const char* out_file);
int derm_cmd_train(derm_context* ctx, const char* stage, const char* corpus_file,
                   const char* config_path, const char* checkpoint /* nullable */,
                   const char* out_dir);
int derm_cmd_verify(derm_context* ctx, const char* suite);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DERM_H */
