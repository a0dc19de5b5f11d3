#ifndef KGQA_H
#define KGQA_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KgqaStatus {
  KGQA_STATUS_OK = 0,
  KGQA_STATUS_NULL_ARGUMENT = 1,
  KGQA_STATUS_INVALID_UTF8 = 2,
  KGQA_STATUS_PARSE = 3,
  KGQA_STATUS_CONFIG = 4,
  KGQA_STATUS_BACKEND = 5,
  KGQA_STATUS_PIPELINE = 6,
  KGQA_STATUS_IO = 7,
  KGQA_STATUS_PANIC = 8,
} KgqaStatus;

typedef enum KgqaCategory {
  KGQA_CATEGORY_CORRECT = 0,
  KGQA_CATEGORY_MISSING = 1,
  KGQA_CATEGORY_HALLUCINATION = 2,
} KgqaCategory;

/**
 * A graph bound to a configuration and its model backends.
 */
typedef struct KgqaEngine KgqaEngine;

/**
 * A loaded triple graph.
 */
typedef struct KgqaGraph KgqaGraph;

typedef struct KgqaScore {
  double em;
  double f1;
  double rouge_l;
  enum KgqaCategory category;
} KgqaScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *kgqa_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library that has not been
 * freed yet.
 */
void kgqa_string_free(char *s);

/**
 * Parse tab-separated triples from `source`.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a writable pointer.
 */
enum KgqaStatus kgqa_graph_from_str(const char *source, struct KgqaGraph **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum KgqaStatus kgqa_graph_from_file(const char *path, struct KgqaGraph **out);

/**
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t kgqa_graph_triple_count(const struct KgqaGraph *graph);

/**
 * # Safety
 * `graph` must be null or a live handle.
 */
size_t kgqa_graph_entity_count(const struct KgqaGraph *graph);

/**
 * # Safety
 * `graph` must be null or a handle from `kgqa_graph_from_*` not yet freed.
 */
void kgqa_graph_free(struct KgqaGraph *graph);

/**
 * Build an engine over a copy of `graph`.
 *
 * `config` is optional `key = value` text. When `script` is given it serves
 * every model role; otherwise the backends named by the config are used.
 *
 * # Safety
 * `graph` must be a live handle; `config` and `script` null or
 * NUL-terminated; `out` writable.
 */
enum KgqaStatus kgqa_engine_new(const struct KgqaGraph *graph,
                                const char *config,
                                const char *script,
                                struct KgqaEngine **out);

/**
 * Answer `question`. The answer is written to `answer`; when `trace` is
 * non-null the line-delimited JSON trace is written there too. Both strings
 * belong to the caller.
 *
 * # Safety
 * `engine` must be a live handle, `question` NUL-terminated, `answer`
 * writable and `trace` null or writable.
 */
enum KgqaStatus kgqa_engine_ask(const struct KgqaEngine *engine,
                                const char *question,
                                char **answer,
                                char **trace);

/**
 * # Safety
 * `engine` must be null or a handle from `kgqa_engine_new` not yet freed.
 */
void kgqa_engine_free(struct KgqaEngine *engine);

/**
 * Score `prediction` against `gold_count` gold answers.
 *
 * # Safety
 * `prediction` must be NUL-terminated, `golds` must point to `gold_count`
 * NUL-terminated strings and `out` must be writable.
 */
enum KgqaStatus kgqa_score(const char *prediction,
                           const char *const *golds,
                           size_t gold_count,
                           struct KgqaScore *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGQA_H */
