#ifndef GMAH_GMAH_H
#define GMAH_GMAH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define GMAH_API __declspec(dllexport)
#else
#define GMAH_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every function returning int returns one of these. */
enum {
  GMAH_OK = 0,
  GMAH_ERR_INTERNAL = 1,
  GMAH_ERR_CONFIG = 2,
  GMAH_ERR_DEPENDENCY = 3,
  GMAH_ERR_NUMERIC = 4,
  GMAH_ERR_DIMENSION = 5,
  GMAH_ERR_DOMAIN = 6,
  GMAH_ERR_ORDERING = 7,
  GMAH_ERR_LIFECYCLE = 8,
  GMAH_ERR_CONSISTENCY = 9,
  GMAH_ERR_IO = 10,
  GMAH_ERR_PARSE = 11,
  GMAH_ERR_SCHEMA = 12,
  GMAH_ERR_ARGUMENT = 13
};

typedef struct gmah_config gmah_config;
typedef struct gmah_env gmah_env;

/* Message of the last failed call on this thread; "" when none. */
GMAH_API const char* gmah_last_error(void);
GMAH_API const char* gmah_version(void);

/* Strings returned through char** are owned by the caller. */
GMAH_API void gmah_string_free(char* s);

/* ---- configuration ---- */

/* Defaults for an environment ("doorkey" or "trashgrid"). */
GMAH_API int gmah_config_default(const char* env, gmah_config** out);
GMAH_API int gmah_config_parse(const char* json_text, gmah_config** out);
GMAH_API int gmah_config_load(const char* path, gmah_config** out);
GMAH_API void gmah_config_free(gmah_config* cfg);

GMAH_API int gmah_config_set_seed(gmah_config* cfg, uint64_t seed);
GMAH_API int gmah_config_set_out_dir(gmah_config* cfg, const char* dir);
/* Directory with earlier-stage artifacts; NULL or "" means the output directory. */
GMAH_API int gmah_config_set_from(gmah_config* cfg, const char* dir);
GMAH_API int gmah_config_set_stage(gmah_config* cfg, const char* stage);
GMAH_API int gmah_config_set_adapt(gmah_config* cfg, int adapt);
GMAH_API int gmah_config_get_env(const gmah_config* cfg, char** env);
GMAH_API int gmah_config_to_json(const gmah_config* cfg, char** json_text);

/* ---- training and evaluation ---- */

/* Runs the configured stage for every seed. *summary_json (may be NULL)
   receives a JSON array with one object per seed. */
GMAH_API int gmah_train(const gmah_config* cfg, char** summary_json);

/* mode: "gmah", "low", "a2c" or "stay". Reads checkpoints from the config's
   artifact directory. When out_dir is non-NULL, eval_report.json and
   trace.csv are written there. */
GMAH_API int gmah_evaluate(const gmah_config* cfg, const char* mode, int episodes, uint64_t seed, int adapt,
                           const char* out_dir, char** report_json);

/* ---- environments ---- */

GMAH_API int gmah_env_create(const char* name, const char* config_json, gmah_env** out);
GMAH_API void gmah_env_free(gmah_env* env);
GMAH_API int gmah_env_info(const gmah_env* env, char** info_json);
GMAH_API int gmah_env_reset(gmah_env* env, uint64_t seed);
GMAH_API int gmah_env_current_agent(const gmah_env* env, int* agent);
/* done and achieved_mask may be NULL; bit g of achieved_mask is set when subgoal g fired. */
GMAH_API int gmah_env_step(gmah_env* env, int agent, int action, double* reward, int* done,
                           uint32_t* achieved_mask);
/* Copies the agent's observation into buf (capacity len). */
GMAH_API int gmah_env_observe(const gmah_env* env, int agent, double* buf, size_t len);
GMAH_API int gmah_env_render(const gmah_env* env, char** text);

/* ---- diagnostics ---- */

/* Runs the conformance suite. *passed is 1 when every check passed. */
GMAH_API int gmah_conformance(const char* env, const char* config_json, uint64_t seed, int* passed,
                              char** report_text);
/* Gradient checks over every network family for seeds 0..n_seeds-1.
   *max_error receives the worst relative error. */
GMAH_API int gmah_gradcheck(int n_seeds, double* max_error, char** report_json);

/* ---- plots ---- */

/* n metrics CSVs with labels; columns is a comma-separated list. */
GMAH_API int gmah_plot_curves(const char* const* csv_paths, const char* const* labels, size_t n,
                              const char* columns, double weight, const char* title, const char* out_svg);
/* Renders the heatmaps of an eval_report.json. */
GMAH_API int gmah_plot_heatmap(const char* report_path, const char* out_svg);

#ifdef __cplusplus
}
#endif

#endif
