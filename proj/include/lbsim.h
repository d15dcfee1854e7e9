/* C interface to the lbsim core. Objects are opaque handles created and
 * freed through this API. Every fallible call returns an lbsim_status; on
 * failure lbsim_last_error() holds a message for the calling thread. */
#ifndef LBSIM_H_
#define LBSIM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LBSIM_API __declspec(dllexport)
#else
#define LBSIM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lbsim_status {
  LBSIM_OK = 0,
  LBSIM_E_PARSE = 1,
  LBSIM_E_VALIDATION = 2,
  LBSIM_E_NOT_FOUND = 3,
  LBSIM_E_SHAPE = 4,
  LBSIM_E_NUMERIC = 5,
  LBSIM_E_IO = 6,
  LBSIM_E_CONFIG = 7,
  LBSIM_E_ARGUMENT = 8, /* null handle, bad buffer size, unknown key */
  LBSIM_E_INTERNAL = 9
} lbsim_status;

LBSIM_API const char* lbsim_version(void);
LBSIM_API const char* lbsim_status_string(lbsim_status status);
/* Message of the last failed call on this thread; "" if none. */
LBSIM_API const char* lbsim_last_error(void);

/* Owned text returned by some calls. */
typedef struct lbsim_string lbsim_string;
LBSIM_API const char* lbsim_string_data(const lbsim_string* s);
LBSIM_API void lbsim_string_free(lbsim_string* s);

/* ---- topology ---------------------------------------------------------- */

typedef struct lbsim_topology lbsim_topology;

/* Built-in 11-node Abilene fixture with six tunnels of two paths each. */
LBSIM_API lbsim_status lbsim_topology_abilene(double high_mbps, double low_mbps,
                                              lbsim_topology** out);
LBSIM_API lbsim_status lbsim_topology_load(const char* path, lbsim_topology** out);
LBSIM_API void lbsim_topology_free(lbsim_topology* topo);
LBSIM_API lbsim_status lbsim_topology_info(const lbsim_topology* topo, size_t* links,
                                           size_t* tunnels, size_t* paths);
LBSIM_API lbsim_status lbsim_topology_path_count(const lbsim_topology* topo, size_t tunnel,
                                                 size_t* out);

/* ---- environment ------------------------------------------------------- */

typedef struct lbsim_env lbsim_env;

typedef struct lbsim_step_result {
  int64_t t;
  double mean_delay_ms;
  double mlu;
  double acceptance_rate;
  double reward;
} lbsim_step_result;

/* Default traffic profile seeded with traffic_seed and default parameters. */
LBSIM_API lbsim_status lbsim_env_create(const lbsim_topology* topo, uint64_t traffic_seed,
                                        lbsim_env** out);
LBSIM_API void lbsim_env_free(lbsim_env* env);
/* Draws the next sample; writes its normalized observation (n = tunnels). */
LBSIM_API lbsim_status lbsim_env_reset(lbsim_env* env, double* obs, size_t n);
/* Raw demand of the current sample (n = tunnels). */
LBSIM_API lbsim_status lbsim_env_demand(const lbsim_env* env, double* demand, size_t n);
/* Applies split ratios (n = paths). tunnel_delays may be NULL, else nt = tunnels. */
LBSIM_API lbsim_status lbsim_env_step(lbsim_env* env, const double* ratios, size_t n,
                                      lbsim_step_result* out, double* tunnel_delays, size_t nt);

/* ---- shield and solver ------------------------------------------------- */

typedef struct lbsim_cbf_params {
  double radius;
  size_t solutions_per_iter;
  size_t max_iter;
  double eta;
  uint64_t seed;
} lbsim_cbf_params;

LBSIM_API void lbsim_cbf_defaults(lbsim_cbf_params* params);
LBSIM_API lbsim_status lbsim_cbf_project(const lbsim_topology* topo, const double* demand,
                                         size_t nd, const double* ratios, size_t np,
                                         const lbsim_cbf_params* params, double* out,
                                         int* modified, double* mlu_after);
LBSIM_API lbsim_status lbsim_solve(const lbsim_topology* topo, const double* demand, size_t nd,
                                   double* out_ratios, size_t np, double* objective_ms,
                                   double* mlu);

/* ---- experiments ------------------------------------------------------- */

typedef struct lbsim_experiment lbsim_experiment;

typedef struct lbsim_train_summary {
  size_t episodes;
  size_t env_steps;
  size_t updates;
  size_t shield_interventions;
  double min_acceptance;
  double last_episode_mean_delay_ms;
  double samples_per_second;
} lbsim_train_summary;

/* config_path may be NULL for desk-scale defaults. */
LBSIM_API lbsim_status lbsim_experiment_create(const char* config_path, lbsim_experiment** out);
LBSIM_API void lbsim_experiment_free(lbsim_experiment* exp);
/* Keys: algo, cbf (on|off), cbf.radius, cbf.n, cbf.m, cbf.eta, episodes,
 * workers, seed, out, topology, capacity.high, capacity.low, lr,
 * fine_tune_lr, hidden_width, hidden_layers, critic_target, eval.seed,
 * eval.samples, trace. */
LBSIM_API lbsim_status lbsim_experiment_set(lbsim_experiment* exp, const char* key,
                                            const char* value);
LBSIM_API lbsim_status lbsim_experiment_config(const lbsim_experiment* exp, lbsim_string** json);
/* Trains (from scratch or from the fine_tune checkpoint, which may be NULL)
 * and writes metrics.csv, checkpoint.json and manifest.json to the out dir. */
LBSIM_API lbsim_status lbsim_experiment_train(lbsim_experiment* exp, const char* fine_tune,
                                              lbsim_train_summary* out);
/* Scores policies on the frozen test trace. Names: static, random, ecmp,
 * ucmp, nlp, nlp-lagged, or ckpt:<path>[=label]. Writes <out>/<stem>.csv
 * and the trace; `ranked` requires at least two policies and sorts the
 * table by mean delay. */
LBSIM_API lbsim_status lbsim_experiment_evaluate(lbsim_experiment* exp, const char* const* policies,
                                                 size_t n, int ranked, const char* stem,
                                                 lbsim_string** table);
/* Solves every row of a trace CSV (header t,<tunnel ids>) and writes the
 * per-sample optimum to out_csv (NULL: <out>/solutions.csv). */
LBSIM_API lbsim_status lbsim_experiment_solve(lbsim_experiment* exp, const char* samples_csv,
                                              const char* out_csv, lbsim_string** table);

#ifdef __cplusplus
}
#endif

#endif /* LBSIM_H_ */
