/* C interface to the episodic memory engine. All functions are thread-safe;
 * error details for the calling thread are kept in remem_last_error(). */
#ifndef REMEM_H
#define REMEM_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct remem_graph remem_graph;

typedef enum remem_status {
  REMEM_OK = 0,
  REMEM_ERR_INVALID_ARGUMENT = 1,
  REMEM_ERR_IO = 2,
  REMEM_ERR_PARSE = 3,
  REMEM_ERR_SNAPSHOT_FORMAT = 4,
  REMEM_ERR_EXTERNAL_SERVICE = 5, /* model/provider failures */
  REMEM_ERR_BAD_STATE = 6,
  REMEM_ERR_UNKNOWN = 7
} remem_status;

/* Strings returned through out-parameters are heap-allocated UTF-8 owned by
 * the caller; release them with remem_string_free. Options are JSON objects
 * (pass NULL or "{}" for defaults); unknown keys are rejected. */

/* Builds a graph from a JSONL corpus ({"chunk_id","timestamp","text"|"turns"}
 * per line). Options: extractor (rule|llm), embedder (mock|live),
 * synonymy_threshold, extraction_workers, mock_dimension, chat_model,
 * embed_model. */
remem_status remem_index_corpus(const char* corpus_path,
                                const char* options_json,
                                remem_graph** out_graph);

/* Loads a snapshot directory written by remem_save. */
remem_status remem_open(const char* snapshot_dir, remem_graph** out_graph);

/* Writes the snapshot (meta.json, *.jsonl, embeddings.bin); byte-deterministic
 * for a given graph. The directory is created if missing. */
remem_status remem_save(const remem_graph* graph, const char* dir);

/* Node/edge counts and mean degrees as a JSON object. */
remem_status remem_stats_json(const remem_graph* graph, char** out_json);

/* Answers one question. Options: mode (iterative|single), max_steps, top_k,
 * planner (llm|script), script_path, synthesizer (llm|echo), embedder,
 * embed_model, chat_model, final_prompt_override. Returns
 * {"text","refused","history":[{"thought","tool","args","observation"},...]}. */
remem_status remem_query(remem_graph* graph, const char* question,
                         const char* options_json, char** out_answer_json);

/* Evaluates a JSONL dataset ("conversationQA" or "factQA" format) against the
 * graph. Options additionally: metrics (array), judge (none|llm), jobs.
 * Returns {"report":...,"table":...,"csv":...,"predictions":[...]}. */
remem_status remem_eval(remem_graph* graph, const char* dataset_path,
                        const char* format, const char* options_json,
                        char** out_report_json);

void remem_graph_free(remem_graph* graph);
void remem_string_free(char* s);

/* Message for the calling thread's most recent failure; "" after success. */
const char* remem_last_error(void);

const char* remem_version(void);

#ifdef __cplusplus
}
#endif

#endif /* REMEM_H */
