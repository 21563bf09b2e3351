/* SPDX-License-Identifier: Apache-2.0 */
#ifndef PHONEBENCH_PHONEBENCH_H
#define PHONEBENCH_PHONEBENCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PB_API __declspec(dllexport)
#else
#define PB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pb_status {
  PB_OK = 0,
  PB_ERR_INVALID_ARGUMENT = 1,
  PB_ERR_DIMENSION = 2,
  PB_ERR_CONFIG = 3,
  PB_ERR_IO = 4,
  PB_ERR_FORMAT = 5,
  PB_ERR_LABEL = 6,
  PB_ERR_TOO_SHORT = 7,
  PB_ERR_CONTRACT = 8,
  PB_ERR_NUMERIC = 9,
  PB_ERR_INFEASIBLE = 10,
  PB_ERR_INCONCLUSIVE = 11,
  PB_ERR_EMPTY_OUTPUT = 12,
  PB_ERR_INVALID_STATISTICS = 13,
  PB_ERR_INTERNAL = 14
} pb_status;

typedef struct pb_model pb_model;
typedef struct pb_corpus pb_corpus;

/* Library version, e.g. "0.1.0". */
PB_API const char* pb_version(void);
/* snake_case name of a status, e.g. "too_short". */
PB_API const char* pb_status_name(pb_status status);
/* Message of the most recent failure on this thread ("" if none). */
PB_API const char* pb_last_error(void);
/* Frees any string returned through a char** out-parameter. */
PB_API void pb_string_free(char* s);

/* 16-hex-digit FNV-1a of the compact, key-sorted form of a JSON document. */
PB_API pb_status pb_config_hash(const char* json, char** hash_out);

/* ---- receptive fields and parameter counts ---------------------------- */

/* `configs_json` is a JSON array of architecture configs. Writes CSV with
 * columns arch,k,r,l,frames,seconds,bounded. With `exact` nonzero the seconds
 * column includes the frontend halo and analysis window. */
PB_API pb_status pb_rf_csv(const char* configs_json, int exact, const char* hash, char** csv_out);
/* Perturbation-measured radius in encoder frames; *bounded is 0 when an edge
 * probe reaches the opposite edge. */
PB_API pb_status pb_rf_empirical(const pb_model* model, size_t input_frames, uint64_t seed, int* bounded,
                                 size_t* radius);
/* Per-config parameter breakdown: arch,depth,width,kernel,subsampler,encoder,classifier,total. */
PB_API pb_status pb_params_csv(const char* configs_json, const char* hash, char** csv_out);
/* Largest width whose count stays within target * (1 + tolerance). */
PB_API pb_status pb_solve_width(const char* config_json, uint64_t target, double tolerance, size_t* width_out);

/* ---- models ----------------------------------------------------------- */

PB_API pb_status pb_model_create(const char* config_json, uint64_t seed, pb_model** out);
PB_API pb_status pb_model_load(const char* path, pb_model** out);
PB_API pb_status pb_model_save(const pb_model* model, const char* path);
PB_API void pb_model_free(pb_model* model);
PB_API pb_status pb_model_config(const pb_model* model, char** json_out);
PB_API pb_status pb_model_param_count(const pb_model* model, uint64_t* count_out);
/* fbank is [n_mels x frames] row-major. Writes up to `capacity` doubles of
 * [out_frames x 37] logits; *out_frames is set even when capacity is short. */
PB_API pb_status pb_model_forward(const pb_model* model, const double* fbank, size_t n_mels, size_t frames,
                                  double* logits, size_t capacity, size_t* out_frames);

/* ---- corpora ---------------------------------------------------------- */

PB_API pb_status pb_corpus_load(const char* manifest_path, pb_corpus** out);
/* Spec keys: n_utts, t_min, t_max, n_classes, long_range_fraction,
 * cue_distance, cue_length, n_keys, noise, seed. */
PB_API pb_status pb_corpus_synth(const char* spec_json, pb_corpus** out);
/* Writes features, labels and manifest.tsv into `dir`. */
PB_API pb_status pb_corpus_save(const pb_corpus* corpus, const char* dir);
PB_API size_t pb_corpus_size(const pb_corpus* corpus);
PB_API void pb_corpus_free(pb_corpus* corpus);

/* 16-bit mono PCM WAV to a PBFK feature file; reports the frame count. */
PB_API pb_status pb_fbank_wav(const char* wav_path, const char* out_path, size_t* frames_out);

/* ---- experiments ------------------------------------------------------ */

/* Named training defaults ("paper" or "desk") as a JSON object accepted by pb_train. */
PB_API pb_status pb_train_profile(const char* name, char** json_out);
/* Trains in place. Emits the per-iteration CSV and a JSON summary. */
PB_API pb_status pb_train(pb_model* model, const pb_corpus* corpus, const char* train_json, const char* hash,
                          char** history_csv_out, char** summary_json_out);
/* `range` is NULL (as trained), "unlimited", or a frame count. `class_map`
 * may be NULL for the built-in names. */
PB_API pb_status pb_evaluate(const pb_model* model, const pb_corpus* corpus, const char* range,
                             const char* class_map, const char* hash, double* accuracy_out, char** csv_out);
/* Rows follow `models` (each evaluated under every range in `ranges_json`,
 * a JSON array of "unlimited" or integers). */
PB_API pb_status pb_transfer(const pb_model* const* models, size_t n_models, const pb_corpus* corpus,
                             const char* ranges_json, const char* hash, char** csv_out);
/* Bench keys: input_frames (array), batch, repeats, warmup, seed. Writes the
 * T,T_encoder,ms CSV and the fitted log-log exponent. */
PB_API pb_status pb_bench(const pb_model* model, const char* bench_json, const char* hash, char** csv_out,
                          double* exponent_out);
PB_API pb_status pb_fit_exponent(const double* lengths, const double* times, size_t n, double* exponent_out);

#ifdef __cplusplus
}
#endif

#endif
