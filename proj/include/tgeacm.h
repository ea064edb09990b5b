#ifndef TGEACM_H
#define TGEACM_H

/* C interface to the tgeacm library. Every call returns a status code; the
   message of the last failure on the calling thread is available from
   tgeacm_last_error(). */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define TGEACM_API __declspec(dllexport)
#else
#define TGEACM_API __attribute__((visibility("default")))
#endif

typedef enum {
  TGEACM_OK = 0,
  TGEACM_ERR_VALIDATION = 1, /* bad config, arguments or input files */
  TGEACM_ERR_RUNTIME = 2     /* numerical or internal failure */
} tgeacm_status;

#define TGEACM_NUM_EMOTIONS 6

typedef struct tgeacm_config tgeacm_config;
typedef struct tgeacm_model tgeacm_model;

TGEACM_API const char* tgeacm_last_error(void);
TGEACM_API const char* tgeacm_version(void);

TGEACM_API tgeacm_status tgeacm_config_create(tgeacm_config** out);
TGEACM_API void tgeacm_config_destroy(tgeacm_config* config);
TGEACM_API tgeacm_status tgeacm_config_load_file(tgeacm_config* config, const char* path);
/* Flag layer: overrides the file and the preset. */
TGEACM_API tgeacm_status tgeacm_config_set(tgeacm_config* config, const char* key, const char* value);
/* Copies the effective value into buf (NUL-terminated). *needed receives the
   required size including the terminator; a short buffer is a validation
   error. */
TGEACM_API tgeacm_status tgeacm_config_get(const tgeacm_config* config, const char* key, char* buf, size_t cap,
                                           size_t* needed);
TGEACM_API tgeacm_status tgeacm_config_to_ini(const tgeacm_config* config, char* buf, size_t cap, size_t* needed);

TGEACM_API tgeacm_status tgeacm_cmd_gen_synthetic(const tgeacm_config* config);
TGEACM_API tgeacm_status tgeacm_cmd_pretrain(const tgeacm_config* config);
TGEACM_API tgeacm_status tgeacm_cmd_train(const tgeacm_config* config);
TGEACM_API tgeacm_status tgeacm_cmd_eval(const tgeacm_config* config);
TGEACM_API tgeacm_status tgeacm_cmd_analyze_eip(const tgeacm_config* config);
TGEACM_API tgeacm_status tgeacm_cmd_project_emotions(const tgeacm_config* config);

TGEACM_API tgeacm_status tgeacm_model_load(const char* checkpoint_dir, tgeacm_model** out);
TGEACM_API void tgeacm_model_destroy(tgeacm_model* model);
/* Prior-network response-emotion probabilities for a post. */
TGEACM_API tgeacm_status tgeacm_model_predict_emotion(const tgeacm_model* model, const char* post,
                                                      double probs[TGEACM_NUM_EMOTIONS]);
/* Greedy decode; the response is written as space-separated tokens. */
TGEACM_API tgeacm_status tgeacm_model_respond(const tgeacm_model* model, const char* post, int max_len, char* buf,
                                              size_t cap, size_t* needed);
TGEACM_API const char* tgeacm_emotion_name(int index);

#ifdef __cplusplus
}
#endif

#endif
