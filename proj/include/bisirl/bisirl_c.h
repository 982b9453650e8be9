#ifndef BISIRL_C_H
#define BISIRL_C_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define BISIRL_API __declspec(dllexport)
#else
#define BISIRL_API __attribute__((visibility("default")))
#endif

typedef enum bisirl_status {
   BISIRL_OK = 0,
   BISIRL_ERR_RUNTIME = 1,
   BISIRL_ERR_CONFIG = 2,
   BISIRL_ERR_INVALID_ARGUMENT = 3,
   BISIRL_ERR_INVALID_GAME = 4,
   BISIRL_ERR_SHAPE = 5,
   BISIRL_ERR_NOT_POSITIVE_DEFINITE = 6,
   BISIRL_ERR_IO = 7,
   BISIRL_ERR_NULL = 8
} bisirl_status;

typedef struct bisirl_game bisirl_game;
typedef struct bisirl_solution bisirl_solution;

/* Message of the last failed call on this thread; never NULL. */
BISIRL_API const char* bisirl_last_error(void);
BISIRL_API const char* bisirl_version(void);

BISIRL_API bisirl_status bisirl_game_load(const char* path, bisirl_game** out);
BISIRL_API bisirl_status bisirl_game_from_json(const char* json, bisirl_game** out);
BISIRL_API void bisirl_game_free(bisirl_game* game);
BISIRL_API bisirl_status bisirl_game_validate(const bisirl_game* game);
BISIRL_API bisirl_status bisirl_game_dims(
   const bisirl_game* game,
   int* n_states,
   int* n_actions_learner,
   int* n_actions_expert,
   int* horizon,
   double* discount
);
/* Caller releases *out with bisirl_string_free. */
BISIRL_API bisirl_status bisirl_game_to_json(const bisirl_game* game, char** out);
BISIRL_API void bisirl_string_free(char* s);

/* reward has n_states * n_actions_learner * n_actions_expert entries laid out [s][a_l][a_e]. */
BISIRL_API bisirl_status bisirl_solve_soft(
   const bisirl_game* game,
   const double* reward,
   size_t reward_len,
   bisirl_solution** out
);
BISIRL_API void bisirl_solution_free(bisirl_solution* solution);
/* Copies the [h][s][a_l][a_e] policy table. With out == NULL only *len is set. */
BISIRL_API bisirl_status bisirl_solution_policy(const bisirl_solution* solution, double* out, size_t* len);
BISIRL_API bisirl_status bisirl_solution_value(const bisirl_solution* solution, int h, int s, double* out);
/* Caller releases *out with bisirl_string_free. */
BISIRL_API bisirl_status bisirl_solution_to_json(const bisirl_solution* solution, char** out);

/* Subcommands print to stdout/stderr and return the process exit code
   (0 success, 1 runtime failure or failed check, 2 configuration error). */
BISIRL_API int bisirl_cmd_run(const char* config_path, int jobs);
BISIRL_API int bisirl_cmd_gradcheck(const char* config_path, int has_tol, double tol);
BISIRL_API int bisirl_cmd_bench(const char* config_path, int jobs);

#ifdef __cplusplus
}
#endif

#endif
