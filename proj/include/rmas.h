#ifndef RMAS_H
#define RMAS_H

/* C interface to the recursive multi-agent library. Handles are opaque;
 * every function returns a status code and leaves a human-readable message
 * for the calling thread in rmas_last_error() on failure. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RMAS_API __declspec(dllexport)
#else
#define RMAS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rmas_status {
  RMAS_OK = 0,
  RMAS_CONFIG_ERROR = 1, /* bad arguments, config text, or file content */
  RMAS_RUNTIME_ERROR = 2 /* execution or I/O failure */
} rmas_status;

/* Library version, "major.minor.patch". */
RMAS_API const char* rmas_version(void);

/* Message for the last failure on this thread; "" when the last call
 * succeeded. The pointer stays valid until the thread's next API call. */
RMAS_API const char* rmas_last_error(void);

/* Runs one command-line workflow (subcommand first, then flags), writing
 * progress to stdout and problems to stderr. Returns the process exit
 * status: 0 ok, 1 usage or validation problem, 2 runtime failure. */
RMAS_API int rmas_run_command(int argc, const char* const* argv);

/* An assembled agent system: agents, step links, transfer links. */
typedef struct rmas_system rmas_system;

typedef struct rmas_system_info {
  int32_t pattern; /* 0 sequential, 1 mixture, 2 distillation,
                      3 deliberation, 4 self_loop */
  int32_t rounds;
  int32_t latent_budget;
  int32_t d_h;
  int32_t layers;
  int32_t heads;
  int32_t vocab;
  int32_t agents;
} rmas_system_info;

/* Builds a fresh system from the [system] section of a config document
 * (missing keys take their documented defaults). */
RMAS_API rmas_status rmas_system_build(const char* config_text,
                                       rmas_system** out);

/* Restores a system from a checkpoint file. */
RMAS_API rmas_status rmas_system_load(const char* path, rmas_system** out);

/* Writes the system to a checkpoint file. */
RMAS_API rmas_status rmas_system_save(const rmas_system* s, const char* path);

RMAS_API rmas_status rmas_system_describe(const rmas_system* s,
                                          rmas_system_info* out);

RMAS_API void rmas_system_free(rmas_system* s);

/* Two-stage training driven by the [train] and [task] sections of a config
 * document. The final outer-stage loss lands in *final_loss when non-null. */
RMAS_API rmas_status rmas_system_train(rmas_system* s, const char* config_text,
                                       double* final_loss);

/* Decodes an answer for one tokenized question. *answer receives a buffer
 * of *answer_len token ids owned by the library; release it with
 * rmas_ids_free. infer_rounds <= 0 keeps the system's configured rounds. */
RMAS_API rmas_status rmas_system_infer(const rmas_system* s,
                                       const int32_t* question,
                                       size_t question_len, int32_t infer_rounds,
                                       uint64_t seed, int32_t decode_budget,
                                       int32_t** answer, size_t* answer_len);

RMAS_API void rmas_ids_free(int32_t* ids);

#ifdef __cplusplus
}
#endif

#endif /* RMAS_H */
