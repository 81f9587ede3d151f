#include "gmah/gmah.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "gmah/config.hpp"
#include "gmah/env.hpp"
#include "gmah/error.hpp"
#include "gmah/gradcheck.hpp"
#include "gmah/plot.hpp"
#include "gmah/trainer.hpp"

struct gmah_config {
  gmah::RunConfig cfg;
};

struct gmah_env {
  std::unique_ptr<gmah::Environment> env;
};

namespace {

thread_local std::string last_error;

class ArgumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename F>
int guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return GMAH_OK;
  } catch (const gmah::Error& e) {
    last_error = e.what();
    return static_cast<int>(e.code());
  } catch (const ArgumentError& e) {
    last_error = e.what();
    return GMAH_ERR_ARGUMENT;
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return GMAH_ERR_PARSE;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GMAH_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return GMAH_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw gmah::IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

extern "C" {

const char* gmah_last_error(void) { return last_error.c_str(); }

const char* gmah_version(void) { return "0.1.0"; }

void gmah_string_free(char* s) { std::free(s); }

int gmah_config_default(const char* env, gmah_config** out) {
  return guarded([&] {
    require(env, "env");
    require(out, "out");
    auto c = std::make_unique<gmah_config>();
    c->cfg = gmah::default_run_config(env);
    c->cfg.validate();
    *out = c.release();
  });
}

int gmah_config_parse(const char* json_text, gmah_config** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    auto c = std::make_unique<gmah_config>();
    c->cfg = gmah::parse_config_text(json_text);
    *out = c.release();
  });
}

int gmah_config_load(const char* path, gmah_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto c = std::make_unique<gmah_config>();
    c->cfg = gmah::parse_config(path);
    *out = c.release();
  });
}

void gmah_config_free(gmah_config* cfg) { delete cfg; }

int gmah_config_set_seed(gmah_config* cfg, uint64_t seed) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->cfg.seeds = {seed};
  });
}

int gmah_config_set_out_dir(gmah_config* cfg, const char* dir) {
  return guarded([&] {
    require(cfg, "cfg");
    require(dir, "dir");
    if (!*dir) throw gmah::ConfigError("invalid value for 'out_dir': empty path");
    cfg->cfg.out_dir = dir;
  });
}

int gmah_config_set_from(gmah_config* cfg, const char* dir) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->cfg.from = dir ? dir : "";
  });
}

int gmah_config_set_stage(gmah_config* cfg, const char* stage) {
  return guarded([&] {
    require(cfg, "cfg");
    require(stage, "stage");
    gmah::RunConfig next = cfg->cfg;
    next.stage = stage;
    next.validate();
    cfg->cfg = std::move(next);
  });
}

int gmah_config_set_adapt(gmah_config* cfg, int adapt) {
  return guarded([&] {
    require(cfg, "cfg");
    cfg->cfg.adapt = adapt != 0;
  });
}

int gmah_config_get_env(const gmah_config* cfg, char** env) {
  return guarded([&] {
    require(cfg, "cfg");
    require(env, "env");
    *env = dup(cfg->cfg.env);
  });
}

int gmah_config_to_json(const gmah_config* cfg, char** json_text) {
  return guarded([&] {
    require(cfg, "cfg");
    require(json_text, "json_text");
    *json_text = dup(gmah::to_json(cfg->cfg).dump(2));
  });
}

int gmah_train(const gmah_config* cfg, char** summary_json) {
  return guarded([&] {
    require(cfg, "cfg");
    const auto outcomes = gmah::train(cfg->cfg);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& o : outcomes) {
      nlohmann::json j{{"stage", o.stage},
                       {"seed", o.seed},
                       {"out_dir", o.out_dir.string()},
                       {"steps", o.steps},
                       {"episodes", o.episodes},
                       {"plateau_stopped", o.plateau_stopped},
                       {"proactive_updates", o.proactive_updates}};
      const auto summary = o.out_dir / ("summary_" + o.stage + ".json");
      if (std::filesystem::exists(summary)) j["summary"] = nlohmann::json::parse(slurp(summary));
      arr.push_back(std::move(j));
    }
    put(summary_json, arr.dump(2));
  });
}

int gmah_evaluate(const gmah_config* cfg, const char* mode, int episodes, uint64_t seed, int adapt,
                  const char* out_dir, char** report_json) {
  return guarded([&] {
    require(cfg, "cfg");
    require(mode, "mode");
    if (episodes < 1) throw gmah::ConfigError("invalid value for 'episodes': must be positive");
    gmah::EvalOptions opts;
    opts.mode = mode;
    opts.episodes = episodes;
    opts.seed = seed;
    opts.adapt = adapt != 0;
    const gmah::EvalReport r = gmah::evaluate(cfg->cfg, opts);
    if (out_dir) gmah::write_eval_report(r, out_dir);
    put(report_json, gmah::to_json(r).dump(2));
  });
}

int gmah_env_create(const char* name, const char* config_json, gmah_env** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    const nlohmann::json cfg = config_json && *config_json ? gmah::parse_json_text(config_json, "env config")
                                                           : nlohmann::json::object();
    auto e = std::make_unique<gmah_env>();
    e->env = gmah::make_env(name, cfg);
    *out = e.release();
  });
}

void gmah_env_free(gmah_env* env) { delete env; }

int gmah_env_info(const gmah_env* env, char** info_json) {
  return guarded([&] {
    require(env, "env");
    require(info_json, "info_json");
    const gmah::EnvInfo i = env->env->info();
    const nlohmann::json j{{"name", i.name},
                           {"n_agents", i.n_agents},
                           {"action_count", i.action_count},
                           {"obs_dim", i.obs_dim},
                           {"state_shape", i.state_shape},
                           {"subgoal_count", i.subgoal_count},
                           {"subgoal_names", env->env->subgoal_names()},
                           {"max_steps", i.max_steps},
                           {"config", env->env->config_json()}};
    *info_json = dup(j.dump(2));
  });
}

int gmah_env_reset(gmah_env* env, uint64_t seed) {
  return guarded([&] {
    require(env, "env");
    env->env->reset(seed);
  });
}

int gmah_env_current_agent(const gmah_env* env, int* agent) {
  return guarded([&] {
    require(env, "env");
    require(agent, "agent");
    *agent = env->env->current_agent();
  });
}

int gmah_env_step(gmah_env* env, int agent, int action, double* reward, int* done, uint32_t* achieved_mask) {
  return guarded([&] {
    require(env, "env");
    const gmah::StepResult r = env->env->step(agent, action);
    if (reward) *reward = r.reward;
    if (done) *done = r.done ? 1 : 0;
    if (achieved_mask) {
      std::uint32_t m = 0;
      for (int g : r.achieved_subgoals) m |= 1u << g;
      *achieved_mask = m;
    }
  });
}

int gmah_env_observe(const gmah_env* env, int agent, double* buf, size_t len) {
  return guarded([&] {
    require(env, "env");
    require(buf, "buf");
    const auto obs = env->env->observe(agent);
    if (len < obs.size())
      throw gmah::DimensionError("observation buffer holds " + std::to_string(len) + " values, need " +
                                 std::to_string(obs.size()));
    std::copy(obs.begin(), obs.end(), buf);
  });
}

int gmah_env_render(const gmah_env* env, char** text) {
  return guarded([&] {
    require(env, "env");
    require(text, "text");
    *text = dup(env->env->render_ascii());
  });
}

int gmah_conformance(const char* env, const char* config_json, uint64_t seed, int* passed, char** report_text) {
  return guarded([&] {
    require(env, "env");
    const nlohmann::json cfg = config_json && *config_json ? gmah::parse_json_text(config_json, "env config")
                                                           : nlohmann::json::object();
    auto e = gmah::make_env(env, cfg);
    gmah::ConformanceOptions opts;
    opts.seed = seed;
    const gmah::ConformanceReport r = gmah::conformance_suite(*e, opts);
    if (passed) *passed = r.all_passed() ? 1 : 0;
    put(report_text, r.to_text());
  });
}

int gmah_gradcheck(int n_seeds, double* max_error, char** report_json) {
  return guarded([&] {
    if (n_seeds < 1) throw gmah::DomainError("gradient check needs at least one seed");
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    const auto results = gmah::gradient_integrity(seeds);
    double worst = 0.0;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : results) {
      worst = std::max(worst, r.max_rel_error);
      arr.push_back({{"family", r.family}, {"seed", r.seed}, {"max_rel_error", r.max_rel_error}});
    }
    if (max_error) *max_error = worst;
    put(report_json, arr.dump(2));
  });
}

int gmah_plot_curves(const char* const* csv_paths, const char* const* labels, size_t n, const char* columns,
                     double weight, const char* title, const char* out_svg) {
  return guarded([&] {
    require(csv_paths, "csv_paths");
    require(out_svg, "out_svg");
    std::vector<gmah::CurveRun> runs;
    for (size_t i = 0; i < n; ++i) {
      require(csv_paths[i], "csv path");
      const std::string label = labels && labels[i] ? labels[i] : std::filesystem::path(csv_paths[i]).parent_path().filename().string();
      runs.push_back({label.empty() ? csv_paths[i] : label, csv_paths[i]});
    }
    gmah::CurveOptions opts;
    if (columns && *columns) opts.columns = split_list(columns);
    opts.weight = weight;
    if (title) opts.title = title;
    gmah::write_curves(runs, opts, out_svg);
  });
}

int gmah_plot_heatmap(const char* report_path, const char* out_svg) {
  return guarded([&] {
    require(report_path, "report_path");
    require(out_svg, "out_svg");
    const auto j = gmah::parse_json_text(slurp(report_path), report_path);
    gmah::write_heatmap(gmah::eval_report_from_json(j), out_svg);
  });
}

}  // extern "C"
