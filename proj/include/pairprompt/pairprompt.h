/*
 * pairprompt — few-shot text classification via text-pair relevance scoring.
 *
 * C interface to the pairprompt core. All functions returning pp_status
 * report failures through the return code; pp_last_error() describes the most
 * recent failure on the calling thread. Objects are opaque handles released
 * with their pp_*_free function; strings returned through char** are released
 * with pp_string_free.
 */
#ifndef PAIRPROMPT_H
#define PAIRPROMPT_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pp_status {
    PP_OK = 0,
    PP_ERR_INVALID_ARGUMENT = 1,
    PP_ERR_IO = 2,
    PP_ERR_PARSE = 3,
    PP_ERR_PRECONDITION = 4,
    PP_ERR_NUMERIC = 5,
    PP_ERR_INTERNAL = 6
} pp_status;

typedef struct pp_dataset pp_dataset;
typedef struct pp_episode pp_episode;
typedef struct pp_scorer pp_scorer;
typedef struct pp_matrix pp_matrix;
typedef struct pp_predictions pp_predictions;
typedef struct pp_pivots pp_pivots;

const char* pp_version(void);
const char* pp_last_error(void);
void pp_string_free(char* s);

/* ---- datasets (JSONL: one object per line with "text" and "label") ---- */

pp_status pp_dataset_load(const char* path, const char* name /* nullable */, pp_dataset** out);
void pp_dataset_free(pp_dataset* dataset);
int64_t pp_dataset_size(const pp_dataset* dataset);
int64_t pp_dataset_label_count(const pp_dataset* dataset);

/* ---- episodes ---- */

pp_status pp_episode_sample(const pp_dataset* dataset, int shots, int query_size, uint64_t seed,
                            pp_episode** out);
pp_status pp_episode_inject_noise(const pp_episode* episode, int m, uint64_t seed,
                                  pp_episode** out);
pp_status pp_episode_mix_ood(const pp_episode* episode, const pp_dataset* ood_source,
                             int ood_shots, uint64_t seed, pp_episode** out);
pp_status pp_episode_to_json(const pp_episode* episode, char** json_out);
pp_status pp_episode_from_json(const char* json_text, const pp_dataset* dataset,
                               const pp_dataset* ood_source /* nullable */, pp_episode** out);
void pp_episode_free(pp_episode* episode);

/* ---- scorers ----
 * config_json keys (all optional): scorer ("lexical" | "tiny-mlm"), template,
 * max_tokens, embed_dim, blocks, heads, ff_dim, max_seq_len, aggregate
 * ("probs" | "logits"), init_seed.
 * train_config_json keys: learning_rate, batch_size, epochs, weight_decay,
 * seed. Training a lexical scorer is a no-op.
 */

pp_status pp_scorer_create(const pp_dataset* vocab_source, const pp_dataset* ood /* nullable */,
                           const char* config_json, pp_scorer** out);
pp_status pp_scorer_train(pp_scorer* scorer, const pp_episode* episode,
                          const char* train_config_json, char** loss_trace_json_out /* nullable */);
pp_status pp_scorer_to_json(const pp_scorer* scorer, char** checkpoint_json_out);
pp_status pp_scorer_from_json(const char* checkpoint_json, pp_scorer** out);
uint64_t pp_scorer_call_count(const pp_scorer* scorer);
void pp_scorer_free(pp_scorer* scorer);

/* ---- scoring, pooling, classification ---- */

pp_status pp_score_matrix(const pp_scorer* scorer, const pp_episode* episode, pp_matrix** out);
pp_status pp_train_relevance_matrix(const pp_scorer* scorer, const pp_episode* episode,
                                    pp_matrix** out);
pp_status pp_matrix_to_csv(const pp_matrix* matrix, char** csv_out);
void pp_matrix_free(pp_matrix* matrix);

/* pooling: "mean" | "max" | "knn"; k = 0 uses half the column count. */
pp_status pp_classify(const pp_matrix* matrix, const pp_episode* episode, const char* pooling,
                      int k, pp_predictions** out);
pp_status pp_predictions_to_csv(const pp_predictions* predictions, char** csv_out);
pp_status pp_predictions_accuracy(const pp_predictions* predictions, double* accuracy_out);
void pp_predictions_free(pp_predictions* predictions);

/* ---- pivot-accelerated inference ---- */

pp_status pp_select_pivots(const pp_matrix* train_relevance, int p, int exclude_self,
                           uint64_t episode_seed, pp_pivots** out);
pp_status pp_pivots_to_json(const pp_pivots* pivots, char** json_out);
pp_status pp_pivots_from_json(const char* json_text, pp_pivots** out);
pp_status pp_pivot_infer(const pp_scorer* scorer, const pp_episode* episode,
                         const pp_pivots* pivots, const char* pooling, int k,
                         pp_predictions** out);
void pp_pivots_free(pp_pivots* pivots);

/* ---- analysis over artifact files ---- */

pp_status pp_score_profile_csv(const char* matrix_csv, char** profile_csv_out);
pp_status pp_predictions_csv_accuracy(const char* predictions_csv, double* accuracy_out);
/* Per-class prediction statistics: population stddev of predicted counts and
 * the mean predicted count by train-class size. */
pp_status pp_prediction_stats_json(const char* predictions_csv, const char* episode_json,
                                   const pp_dataset* dataset, const pp_dataset* ood /* nullable */,
                                   char** stats_json_out);

/* ---- experiment runner ----
 * run_config_json is the flat experiment configuration documented in the
 * README; axis is one of "shots" | "noise" | "pivot_p" | "pooling" and
 * values_csv a comma-separated value list.
 */

pp_status pp_run_experiment(const char* run_config_json, char** report_json_out);
pp_status pp_run_sweep(const char* run_config_json, const char* axis, const char* values_csv,
                       char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* PAIRPROMPT_H */
