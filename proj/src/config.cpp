#include "gmah/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gmah/checkpoint.hpp"
#include "gmah/env.hpp"
#include "gmah/error.hpp"

namespace gmah {

using json = nlohmann::json;

namespace {

// Reads known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("'" + (path_.empty() ? std::string("<root>") : path_) + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("invalid value for '" + name(key) + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& sub(const char* key) {
    known_.insert(key);
    return j_.at(key);
  }
  void note(const char* key) { known_.insert(key); }
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!known_.count(key)) throw ConfigError("unknown key '" + name(key) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

void read_schedule(Section& parent, const char* key, Schedule& s) {
  if (!parent.has(key)) {
    parent.note(key);
    return;
  }
  Section sec(parent.sub(key), parent.name(key));
  sec.get("start", s.start);
  sec.get("end", s.end);
  sec.get("steps", s.steps);
  sec.finish();
}

json schedule_json(const Schedule& s) { return {{"start", s.start}, {"end", s.end}, {"steps", s.steps}}; }

void read_learner(Section& parent, const char* key, LearnerConfig& l) {
  if (!parent.has(key)) {
    parent.note(key);
    return;
  }
  Section sec(parent.sub(key), parent.name(key));
  sec.get("hidden", l.hidden);
  std::string act = to_string(l.activation), init = to_string(l.init);
  sec.get("activation", act);
  sec.get("init", init);
  try {
    l.activation = parse_activation(act);
    l.init = parse_init_scheme(init);
  } catch (const Error&) {
    throw ConfigError("invalid value for '" + sec.name("activation") + "' or '" + sec.name("init") + "'");
  }
  sec.get("lr", l.lr);
  sec.get("batch_size", l.batch_size);
  sec.get("buffer_capacity", l.buffer_capacity);
  sec.get("target_refresh", l.target_refresh);
  sec.get("grad_clip", l.grad_clip);
  sec.get("learn_start", l.learn_start);
  sec.get("train_every", l.train_every);
  sec.get("double_q", l.double_q);
  sec.finish();
}

json learner_json(const LearnerConfig& l) {
  return {{"hidden", l.hidden},
          {"activation", to_string(l.activation)},
          {"init", to_string(l.init)},
          {"lr", l.lr},
          {"batch_size", l.batch_size},
          {"buffer_capacity", l.buffer_capacity},
          {"target_refresh", l.target_refresh},
          {"grad_clip", l.grad_clip},
          {"learn_start", l.learn_start},
          {"train_every", l.train_every},
          {"double_q", l.double_q}};
}

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

}  // namespace

RunConfig default_run_config(const std::string& env) {
  RunConfig cfg;
  cfg.env = env;
  cfg.hrl.c = env == "trashgrid" ? 32 : 16;
  cfg.set_total_steps(cfg.total_steps);
  cfg.a2c.hidden = cfg.learner.hidden;
  if (env == "doorkey" || env == "trashgrid") cfg.env_config = make_env(env)->config_json();
  return cfg;
}

void RunConfig::set_total_steps(long steps) {
  total_steps = steps;
  hrl.epsilon.steps = steps / 2;
  hrl.temperature.steps = steps / 2;
}

void RunConfig::validate() const {
  if (env != "doorkey" && env != "trashgrid") throw ConfigError("invalid value for 'env': unknown environment '" + env + "'");
  make_env(env, env_config);  // validates env_config
  if (stage != "low" && stage != "high" && stage != "mix" && stage != "a2c")
    throw ConfigError("invalid value for 'stage': expected low, high, mix or a2c");
  if (total_steps < 1) throw ConfigError("invalid value for 'total_steps': must be positive");
  if (seeds.empty()) throw ConfigError("invalid value for 'seeds': needs at least one seed");
  if (out_dir.empty()) throw ConfigError("invalid value for 'out_dir': must not be empty");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("invalid value for 'smoothing': must lie in [0, 1)");
  if (log_interval < 1) throw ConfigError("invalid value for 'log_interval': must be positive");
  if (!(frozen_low_epsilon >= 0.0 && frozen_low_epsilon <= 1.0))
    throw ConfigError("invalid value for 'frozen_low_epsilon': must lie in [0, 1]");
  if (stage1_resample != "episode" && stage1_resample != "achieved" && stage1_resample != "segment")
    throw ConfigError("invalid value for 'stage1_resample': expected episode, achieved or segment");
  hrl.validate();
  learner.validate();
  high_learner.validate();
  trigger.validate();
  a2c.validate();
  if (autoencoder.hidden.empty() || autoencoder.samples == 0 || autoencoder.pretrain.max_steps < 1 ||
      autoencoder.pretrain.batch_size == 0 || !(autoencoder.lr > 0.0))
    throw ConfigError("invalid value in 'autoencoder': sizes, steps and lr must be positive");
  if (mixer.hidden_dim == 0 || mixer.hyper_hidden == 0 || !(mixer.lr > 0.0) || mixer.target_refresh < 1 ||
      mixer.batch_size == 0 || mixer.buffer_capacity == 0 || !(mixer.grad_clip > 0.0) || mixer.train_every < 1 ||
      mixer.learn_start < 0)
    throw ConfigError("invalid value in 'mixer': sizes, rates and intervals must be positive");
  if (eval.interval < 0 || eval.episodes < 1 || !(eval.plateau_rel >= 0.0) || eval.plateau_count < 1 ||
      !(eval.plateau_after >= 0.0 && eval.plateau_after <= 1.0))
    throw ConfigError("invalid value in 'eval'");
}

RunConfig run_config_from_json(const json& doc) {
  Section root(doc, "");
  std::string env = "doorkey";
  root.get("env", env);
  RunConfig cfg = default_run_config(env);
  long total = cfg.total_steps;
  root.get("total_steps", total);
  cfg.set_total_steps(total);

  if (root.has("env_config")) {
    cfg.env_config = root.sub("env_config");
    if (!cfg.env_config.is_object()) throw ConfigError("invalid value for 'env_config': must be an object");
  } else {
    root.note("env_config");
  }
  root.get("stage", cfg.stage);
  root.get("seeds", cfg.seeds);
  root.get("out_dir", cfg.out_dir);
  root.get("from", cfg.from);
  root.get("smoothing", cfg.smoothing);
  root.get("adapt", cfg.adapt);
  root.get("log_interval", cfg.log_interval);
  root.get("frozen_low_epsilon", cfg.frozen_low_epsilon);
  root.get("stage1_resample", cfg.stage1_resample);

  if (root.has("hrl")) {
    Section s(root.sub("hrl"), "hrl");
    s.get("c", cfg.hrl.c);
    s.get("beta_low", cfg.hrl.beta_low);
    s.get("gamma", cfg.hrl.gamma);
    s.get("gamma_low", cfg.hrl.gamma_low);
    s.get("T_M", cfg.hrl.T_M);
    s.get("her", cfg.hrl.her);
    read_schedule(s, "epsilon", cfg.hrl.epsilon);
    read_schedule(s, "temperature", cfg.hrl.temperature);
    s.finish();
  } else {
    root.note("hrl");
  }
  read_learner(root, "learner", cfg.learner);
  cfg.a2c.hidden = cfg.learner.hidden;
  read_learner(root, "high_learner", cfg.high_learner);

  if (root.has("trigger")) {
    Section s(root.sub("trigger"), "trigger");
    s.get("eps1", cfg.trigger.eps1);
    s.get("eps2", cfg.trigger.eps2);
    s.get("d_f", cfg.trigger.d_f);
    s.get("temperature", cfg.trigger.temperature);
    s.finish();
  } else {
    root.note("trigger");
  }
  if (root.has("autoencoder")) {
    Section s(root.sub("autoencoder"), "autoencoder");
    s.get("hidden", cfg.autoencoder.hidden);
    s.get("samples", cfg.autoencoder.samples);
    s.get("max_steps", cfg.autoencoder.pretrain.max_steps);
    s.get("batch_size", cfg.autoencoder.pretrain.batch_size);
    s.get("stop_loss", cfg.autoencoder.pretrain.stop_loss);
    s.get("lr", cfg.autoencoder.lr);
    s.finish();
  } else {
    root.note("autoencoder");
  }
  if (root.has("mixer")) {
    Section s(root.sub("mixer"), "mixer");
    s.get("hidden_dim", cfg.mixer.hidden_dim);
    s.get("hyper_hidden", cfg.mixer.hyper_hidden);
    s.get("lr", cfg.mixer.lr);
    s.get("target_refresh", cfg.mixer.target_refresh);
    s.get("batch_size", cfg.mixer.batch_size);
    s.get("buffer_capacity", cfg.mixer.buffer_capacity);
    s.get("grad_clip", cfg.mixer.grad_clip);
    s.get("learn_start", cfg.mixer.learn_start);
    s.get("train_every", cfg.mixer.train_every);
    s.get("double_q", cfg.mixer.double_q);
    s.finish();
  } else {
    root.note("mixer");
  }
  if (root.has("a2c")) {
    Section s(root.sub("a2c"), "a2c");
    s.get("hidden", cfg.a2c.hidden);
    s.get("lr", cfg.a2c.lr);
    s.get("n_steps", cfg.a2c.n_steps);
    s.get("entropy_coef", cfg.a2c.entropy_coef);
    s.get("value_coef", cfg.a2c.value_coef);
    s.get("grad_clip", cfg.a2c.grad_clip);
    s.get("gamma", cfg.a2c.gamma);
    s.finish();
  } else {
    root.note("a2c");
  }
  if (root.has("eval")) {
    Section s(root.sub("eval"), "eval");
    s.get("interval", cfg.eval.interval);
    s.get("episodes", cfg.eval.episodes);
    s.get("plateau_stop", cfg.eval.plateau_stop);
    s.get("plateau_rel", cfg.eval.plateau_rel);
    s.get("plateau_count", cfg.eval.plateau_count);
    s.get("plateau_after", cfg.eval.plateau_after);
    s.finish();
  } else {
    root.note("eval");
  }
  root.finish();
  cfg.validate();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["env"] = cfg.env;
  j["env_config"] = make_env(cfg.env, cfg.env_config)->config_json();
  j["stage"] = cfg.stage;
  j["total_steps"] = cfg.total_steps;
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  j["from"] = cfg.from;
  j["smoothing"] = cfg.smoothing;
  j["adapt"] = cfg.adapt;
  j["log_interval"] = cfg.log_interval;
  j["frozen_low_epsilon"] = cfg.frozen_low_epsilon;
  j["stage1_resample"] = cfg.stage1_resample;
  j["hrl"] = {{"c", cfg.hrl.c},
              {"beta_low", cfg.hrl.beta_low},
              {"gamma", cfg.hrl.gamma},
              {"gamma_low", cfg.hrl.gamma_low},
              {"T_M", cfg.hrl.T_M},
              {"her", cfg.hrl.her},
              {"epsilon", schedule_json(cfg.hrl.epsilon)},
              {"temperature", schedule_json(cfg.hrl.temperature)}};
  j["learner"] = learner_json(cfg.learner);
  j["high_learner"] = learner_json(cfg.high_learner);
  j["trigger"] = {{"eps1", cfg.trigger.eps1},
                  {"eps2", cfg.trigger.eps2},
                  {"d_f", cfg.trigger.d_f},
                  {"temperature", cfg.trigger.temperature}};
  j["autoencoder"] = {{"hidden", cfg.autoencoder.hidden},
                      {"samples", cfg.autoencoder.samples},
                      {"max_steps", cfg.autoencoder.pretrain.max_steps},
                      {"batch_size", cfg.autoencoder.pretrain.batch_size},
                      {"stop_loss", cfg.autoencoder.pretrain.stop_loss},
                      {"lr", cfg.autoencoder.lr}};
  j["mixer"] = {{"hidden_dim", cfg.mixer.hidden_dim},
                {"hyper_hidden", cfg.mixer.hyper_hidden},
                {"lr", cfg.mixer.lr},
                {"target_refresh", cfg.mixer.target_refresh},
                {"batch_size", cfg.mixer.batch_size},
                {"buffer_capacity", cfg.mixer.buffer_capacity},
                {"grad_clip", cfg.mixer.grad_clip},
                {"learn_start", cfg.mixer.learn_start},
                {"train_every", cfg.mixer.train_every},
                {"double_q", cfg.mixer.double_q}};
  j["a2c"] = {{"hidden", cfg.a2c.hidden},
              {"lr", cfg.a2c.lr},
              {"n_steps", cfg.a2c.n_steps},
              {"entropy_coef", cfg.a2c.entropy_coef},
              {"value_coef", cfg.a2c.value_coef},
              {"grad_clip", cfg.a2c.grad_clip},
              {"gamma", cfg.a2c.gamma}};
  j["eval"] = {{"interval", cfg.eval.interval},
               {"episodes", cfg.eval.episodes},
               {"plateau_stop", cfg.eval.plateau_stop},
               {"plateau_rel", cfg.eval.plateau_rel},
               {"plateau_count", cfg.eval.plateau_count},
               {"plateau_after", cfg.eval.plateau_after}};
  return j;
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": malformed JSON at line " + std::to_string(line_of_offset(text, e.byte)) +
                     ": " + e.what());
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg = run_config_from_json(parse_json_text(text, origin));
  // Canonicalize env_config so echo and reparse agree.
  cfg.env_config = make_env(cfg.env, cfg.env_config)->config_json();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

void echo_config(const RunConfig& cfg, const std::filesystem::path& path) {
  write_text_file(path, to_json(cfg).dump(2) + "\n");
}

}  // namespace gmah
