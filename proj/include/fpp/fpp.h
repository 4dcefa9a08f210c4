/*
 * fpp: filled-pause prediction toolkit, C interface.
 *
 * Every fallible call returns an fpp_status. On failure the message is
 * available from fpp_last_error() on the same thread until the next call.
 * Strings returned through char** out-parameters are owned by the caller and
 * must be released with fpp_string_free().
 */
#ifndef FPP_FPP_H
#define FPP_FPP_H

#include <stddef.h>

#if defined(FPP_BUILDING_LIBRARY)
#define FPP_API __attribute__((visibility("default")))
#else
#define FPP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fpp_status {
  FPP_OK = 0,
  FPP_ERR_RUNTIME = 1, /* divergence, internal inconsistency */
  FPP_ERR_INVALID = 2, /* malformed input or configuration */
  FPP_ERR_IO = 3       /* file could not be opened, read or written */
} fpp_status;

typedef enum fpp_log_level { FPP_LOG_INFO = 1, FPP_LOG_DEBUG = 2 } fpp_log_level;

typedef struct fpp_corpus fpp_corpus;
typedef struct fpp_checkpoint fpp_checkpoint;

/* Receives progress and diagnostic lines; `message` is valid only during the call. */
typedef void (*fpp_log_fn)(fpp_log_level level, const char* message, void* user_data);

FPP_API const char* fpp_version(void);
FPP_API const char* fpp_last_error(void);
FPP_API void fpp_string_free(char* s);

/* Annotated corpus (JSON lines with a format header). */
FPP_API fpp_status fpp_corpus_load(const char* path, fpp_corpus** out);
FPP_API fpp_status fpp_corpus_save(const fpp_corpus* corpus, const char* path);
FPP_API fpp_status fpp_corpus_counts(const fpp_corpus* corpus, size_t* speakers, size_t* sentences, size_t* slots,
                                     size_t* fps);
FPP_API void fpp_corpus_free(fpp_corpus* corpus);

/* Tagger checkpoints. */
FPP_API fpp_status fpp_checkpoint_load(const char* path, fpp_checkpoint** out);
FPP_API fpp_status fpp_checkpoint_save(const fpp_checkpoint* ckpt, const char* path);
FPP_API fpp_status fpp_checkpoint_id(const fpp_checkpoint* ckpt, char** out);
FPP_API void fpp_checkpoint_free(fpp_checkpoint* ckpt);

/*
 * Training. `config_json` is an object of training-config keys overlaid on
 * the desk preset for the phase; NULL keeps the preset. `log` may be NULL.
 */
FPP_API fpp_status fpp_train_base(const fpp_corpus* corpus, const char* config_json, fpp_log_fn log, void* user_data,
                                  fpp_checkpoint** out);
FPP_API fpp_status fpp_finetune(const fpp_checkpoint* base, const fpp_corpus* corpus, const char* config_json,
                                fpp_log_fn log, void* user_data, fpp_checkpoint** out);

/* Metrics report over every sentence of `corpus`, as JSON. */
FPP_API fpp_status fpp_evaluate(const fpp_checkpoint* ckpt, const fpp_corpus* corpus, char** report_json);

/*
 * Tags one untagged sentence, {"breath_groups": [[...], ...]}, and returns the
 * text with predicted FP words inserted.
 */
FPP_API fpp_status fpp_predict_text(const fpp_checkpoint* ckpt, const char* sentence_json, char** text);

/*
 * Runs a CLI workflow ("ingest", "vocab", "cluster", "train", "finetune",
 * "eval", "predict", "synth") with a JSON options object. On success
 * `result_json` (if non-NULL) receives a JSON summary.
 */
FPP_API fpp_status fpp_run(const char* command, const char* options_json, fpp_log_fn log, void* user_data,
                           char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* FPP_FPP_H */
