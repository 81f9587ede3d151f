#include "gmah/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "gmah/checkpoint.hpp"
#include "gmah/doorkey.hpp"
#include "gmah/error.hpp"

namespace gmah {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::size_t param_count(const ParameterSet& p) {
  std::size_t n = 0;
  for (const auto& [_, t] : p) n += t.size();
  return n;
}

// Aggregates everything between two metrics rows.
struct Window {
  explicit Window(int n_goals) : issued(static_cast<std::size_t>(n_goals)), hit(static_cast<std::size_t>(n_goals)) {}

  std::vector<double> returns;
  std::vector<double> intrinsic;
  std::vector<long> issued, hit;
  std::vector<double> loss_low, loss_high, loss_mix, entropy;
  bool track_intrinsic = true;
  bool track_success = true;

  void add_segment(const Segment& s) {
    ++issued[static_cast<std::size_t>(s.goal)];
    if (s.achieved) ++hit[static_cast<std::size_t>(s.goal)];
  }

  MetricsRow row(long step, long episode, double epsilon, double temperature) const {
    MetricsRow r;
    r.step = step;
    r.episode = episode;
    r.reward_mean = mean_or_nan(returns);
    r.reward_min = returns.empty() ? kNaN : *std::min_element(returns.begin(), returns.end());
    r.intrinsic_reward_mean = track_intrinsic ? mean_or_nan(intrinsic) : kNaN;
    for (std::size_t g = 0; g < issued.size(); ++g)
      r.success.push_back(track_success && issued[g] > 0
                              ? static_cast<double>(hit[g]) / static_cast<double>(issued[g])
                              : kNaN);
    r.loss_low = mean_or_nan(loss_low);
    r.loss_high = mean_or_nan(loss_high);
    r.loss_mix = mean_or_nan(loss_mix);
    r.epsilon = epsilon;
    r.temperature = temperature;
    r.entropy = mean_or_nan(entropy);
    return r;
  }

  void clear() {
    const auto n = issued.size();
    const bool ti = track_intrinsic, ts = track_success;
    *this = Window(static_cast<int>(n));
    track_intrinsic = ti;
    track_success = ts;
  }
};

class EvalLog {
 public:
  EvalLog(const fs::path& path, int n_goals) : n_goals_(n_goals) {
    file_ = std::fopen(path.string().c_str(), "w");
    if (!file_) throw IoError("cannot write " + path.string());
    std::fputs("step,metric,mean_reward,min_reward,mean_length", file_);
    for (int g = 0; g < n_goals_; ++g) std::fprintf(file_, ",success_g%d", g);
    std::fputc('\n', file_);
  }
  ~EvalLog() {
    if (file_) std::fclose(file_);
  }
  EvalLog(const EvalLog&) = delete;
  EvalLog& operator=(const EvalLog&) = delete;

  void write(long step, double metric, const EvalReport& r) {
    std::fprintf(file_, "%ld,%s,%s,%s,%s", step, format_number(metric).c_str(),
                 format_number(r.mean_reward).c_str(), format_number(r.min_reward).c_str(),
                 format_number(r.mean_length).c_str());
    for (int g = 0; g < n_goals_; ++g)
      std::fprintf(file_, ",%s", format_number(r.subgoal_success[static_cast<std::size_t>(g)]).c_str());
    std::fputc('\n', file_);
    std::fflush(file_);
  }

 private:
  std::FILE* file_ = nullptr;
  int n_goals_;
};

struct LoopState {
  long step = 0;
  long episode = 0;
  bool plateau = false;
};

// Shared episode loop of the hierarchical stages: runs episodes until the
// budget ends, writes metrics rows, evaluates periodically and stops early on
// a plateau. on_step sees every rollout step after the window has counted it.
template <class OnStep, class Sched, class EvalFn>
LoopState drive(const RunConfig& cfg, std::uint64_t seed, HierarchicalRollout& rollout, Window& w,
                MetricsWriter& metrics, EvalLog& evals, long& clock, OnStep on_step, Sched sched,
                EvalFn eval_fn) {
  LoopState s;
  long last_row = 0;
  long next_eval = cfg.eval.interval;
  std::vector<double> history;
  bool pending = false;
  while (s.step < cfg.total_steps) {
    rollout.reset(episode_seed(seed, s.episode));
    double intrinsic = 0.0;
    while (!rollout.done() && s.step < cfg.total_steps) {
      RolloutStep st = rollout.step();
      clock = ++s.step;
      intrinsic += st.intrinsic;
      for (const auto& seg : st.closed) w.add_segment(seg);
      on_step(st, s.step);
    }
    if (!rollout.done()) break;
    ++s.episode;
    w.returns.push_back(rollout.episode_return());
    w.intrinsic.push_back(intrinsic);
    pending = true;
    if (s.step - last_row >= cfg.log_interval) {
      const auto [eps, temp] = sched(s.step);
      metrics.write(w.row(s.step, s.episode, eps, temp));
      w.clear();
      last_row = s.step;
      pending = false;
    }
    if (cfg.eval.interval > 0 && s.step >= next_eval) {
      while (next_eval <= s.step) next_eval += cfg.eval.interval;
      const auto [metric, report] = eval_fn();
      evals.write(s.step, metric, report);
      history.push_back(metric);
      if (cfg.eval.plateau_stop &&
          static_cast<double>(s.step) >= cfg.eval.plateau_after * static_cast<double>(cfg.total_steps) &&
          plateaued(history, cfg.eval.plateau_rel, cfg.eval.plateau_count)) {
        s.plateau = true;
        break;
      }
    }
  }
  if (pending) {
    const auto [eps, temp] = sched(s.step);
    metrics.write(w.row(s.step, s.episode, eps, temp));
  }
  return s;
}

Checkpoint require_checkpoint(const fs::path& dir, const std::string& name, const std::string& stage) {
  const fs::path p = dir / name;
  if (!fs::exists(p))
    throw DependencyError("stage '" + stage + "' needs " + p.string() + "; run the earlier stage first");
  return load_checkpoint(p);
}

void check_low_fits(const MlpSpec& spec, const EnvInfo& info, const std::string& what) {
  if (spec.input_size() != static_cast<std::size_t>(info.obs_dim + info.subgoal_count) ||
      spec.output_size() != static_cast<std::size_t>(info.action_count))
    throw DependencyError(what + " does not match environment '" + info.name + "'");
}

void check_high_fits(const MlpSpec& spec, const EnvInfo& info, const std::string& what) {
  if (spec.input_size() != static_cast<std::size_t>(info.obs_dim) ||
      spec.output_size() != static_cast<std::size_t>(info.subgoal_count))
    throw DependencyError(what + " does not match environment '" + info.name + "'");
}

double plan_success(const EvalReport& r, const std::vector<int>& plan) {
  std::set<int> goals(plan.begin(), plan.end());
  double s = 0.0;
  for (int g : goals) s += r.subgoal_success[static_cast<std::size_t>(g)];
  return s / static_cast<double>(goals.size());
}

EvalOptions periodic_eval_options(const RunConfig& cfg, const std::string& mode, std::uint64_t seed) {
  EvalOptions o;
  o.mode = mode;
  o.episodes = cfg.eval.episodes;
  o.seed = seed;
  o.adapt = cfg.adapt;
  o.keep_trace = false;
  return o;
}

std::size_t a2c_parameter_count(const EnvInfo& info, const A2cConfig& cfg) {
  MlpSpec p;
  p.layer_sizes.push_back(static_cast<std::size_t>(info.obs_dim));
  p.layer_sizes.insert(p.layer_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  MlpSpec v = p;
  p.layer_sizes.push_back(static_cast<std::size_t>(info.action_count));
  v.layer_sizes.push_back(1);
  return p.parameter_count() + v.parameter_count();
}

void write_summary(const fs::path& out, const StageOutcome& o, json extra) {
  json j = std::move(extra);
  j["stage"] = o.stage;
  j["seed"] = o.seed;
  j["steps"] = o.steps;
  j["episodes"] = o.episodes;
  j["plateau_stopped"] = o.plateau_stopped;
  j["proactive_updates"] = o.proactive_updates;
  write_text_file(out / ("summary_" + o.stage + ".json"), j.dump(2) + "\n");
}

AutoEncoder obtain_autoencoder(const RunConfig& cfg, std::uint64_t seed, const fs::path& from,
                               const fs::path& out, Environment& env) {
  const AdamConfig opt{cfg.autoencoder.lr};
  const EnvInfo info = env.info();
  if (fs::exists(from / "ae.json")) {
    AutoEncoder ae = AutoEncoder::from_checkpoint(load_checkpoint(from / "ae.json"), opt);
    if (ae.obs_dim() != static_cast<std::size_t>(info.obs_dim))
      throw DependencyError((from / "ae.json").string() + " does not match environment '" + info.name + "'");
    if (from != out) save_checkpoint(out / "ae.json", ae.to_checkpoint());
    return ae;
  }
  Rng rng(seed, "autoencoder");
  const auto data = collect_random_observations(*env.clone(), cfg.autoencoder.samples, rng.derive("data")());
  Rng init = rng.derive("init"), batches = rng.derive("batches");
  AutoEncoder ae = AutoEncoder::create(static_cast<std::size_t>(info.obs_dim), cfg.trigger.d_f,
                                       cfg.autoencoder.hidden, init, opt);
  const PretrainResult res = pretrain(ae, data, cfg.autoencoder.pretrain, batches);
  std::FILE* f = std::fopen((out / "ae_pretrain.csv").string().c_str(), "w");
  if (!f) throw IoError("cannot write " + (out / "ae_pretrain.csv").string());
  std::fputs("step,recon,sr\n", f);
  for (std::size_t i = 0; i < res.recon_curve.size(); ++i)
    std::fprintf(f, "%zu,%s,%s\n", i + 1, format_number(res.recon_curve[i]).c_str(),
                 format_number(res.sr_curve[i]).c_str());
  std::fclose(f);
  save_checkpoint(out / "ae.json", ae.to_checkpoint());
  return ae;
}

}  // namespace

// ---- metrics ----

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> metrics_columns(int n_goals) {
  std::vector<std::string> c{"step", "episode", "reward_mean", "reward_min", "intrinsic_reward_mean"};
  for (int g = 0; g < n_goals; ++g) c.push_back("success_g" + std::to_string(g));
  for (const char* s : {"loss_low", "loss_high", "loss_mix", "epsilon", "temperature", "entropy"}) c.push_back(s);
  return c;
}

MetricsWriter::MetricsWriter(const fs::path& path, int n_goals) : n_goals_(n_goals) {
  file_ = std::fopen(path.string().c_str(), "w");
  if (!file_) throw IoError("cannot write " + path.string());
  const auto cols = metrics_columns(n_goals);
  for (std::size_t i = 0; i < cols.size(); ++i) std::fprintf(file_, "%s%s", i ? "," : "", cols[i].c_str());
  std::fputc('\n', file_);
}

MetricsWriter::~MetricsWriter() {
  if (file_) std::fclose(file_);
}

void MetricsWriter::write(const MetricsRow& row) {
  if (row.success.size() != static_cast<std::size_t>(n_goals_))
    throw DimensionError("metrics row has " + std::to_string(row.success.size()) + " success entries, expected " +
                         std::to_string(n_goals_));
  if (row.step < last_step_) throw OrderingError("metrics rows must be monotone in step");
  last_step_ = row.step;
  std::fprintf(file_, "%ld,%ld,%s,%s,%s", row.step, row.episode, format_number(row.reward_mean).c_str(),
               format_number(row.reward_min).c_str(), format_number(row.intrinsic_reward_mean).c_str());
  for (double s : row.success) std::fprintf(file_, ",%s", format_number(s).c_str());
  for (double v : {row.loss_low, row.loss_high, row.loss_mix, row.epsilon, row.temperature, row.entropy})
    std::fprintf(file_, ",%s", format_number(v).c_str());
  std::fputc('\n', file_);
  std::fflush(file_);
  ++rows_;
}

// ---- evaluation ----

long EvalReport::heatmap_total() const {
  long n = 0;
  for (const auto& h : heatmaps) n = std::accumulate(h.begin(), h.end(), n);
  return n;
}

int EvalReport::distinct_cells() const {
  int n = 0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(grid_width * grid_height); ++c) {
    bool seen = false;
    for (const auto& h : heatmaps) seen = seen || h[c] > 0;
    n += seen;
  }
  return n;
}

json to_json(const EvalReport& r) {
  json heat = json::array();
  for (const auto& h : r.heatmaps) {
    json rows = json::array();
    for (int y = 0; y < r.grid_height; ++y) {
      std::vector<long> row(h.begin() + y * r.grid_width, h.begin() + (y + 1) * r.grid_width);
      rows.push_back(row);
    }
    heat.push_back(rows);
  }
  json eps = json::array();
  for (const auto& e : r.episode_summaries) {
    json j{{"seed", e.seed},
           {"reward", e.reward},
           {"length", e.length},
           {"first_goals", e.first_goals},
           {"proactive_updates", e.proactive_updates}};
    j["box_same_room"] = e.box_same_room ? json(*e.box_same_room) : json(nullptr);
    eps.push_back(j);
  }
  return {{"env", r.env},
          {"mode", r.mode},
          {"episodes", r.episodes},
          {"mean_reward", r.mean_reward},
          {"min_reward", r.min_reward},
          {"mean_length", r.mean_length},
          {"subgoal_names", r.subgoal_names},
          {"subgoal_success", r.subgoal_success},
          {"subgoal_issued", r.subgoal_issued},
          {"grid_width", r.grid_width},
          {"grid_height", r.grid_height},
          {"heatmaps", heat},
          {"distinct_cells", r.distinct_cells()},
          {"proactive_updates", r.proactive_updates},
          {"episode_summaries", eps}};
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.env = j.at("env").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.episodes = j.at("episodes").get<int>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.min_reward = j.at("min_reward").get<double>();
    r.mean_length = j.at("mean_length").get<double>();
    r.subgoal_names = j.at("subgoal_names").get<std::vector<std::string>>();
    r.subgoal_success = j.at("subgoal_success").get<std::vector<double>>();
    r.subgoal_issued = j.at("subgoal_issued").get<std::vector<int>>();
    r.grid_width = j.at("grid_width").get<int>();
    r.grid_height = j.at("grid_height").get<int>();
    r.proactive_updates = j.value("proactive_updates", std::uint64_t{0});
    for (const auto& panel : j.at("heatmaps")) {
      std::vector<long> h;
      for (const auto& row : panel) {
        const auto v = row.get<std::vector<long>>();
        if (static_cast<int>(v.size()) != r.grid_width) throw SchemaError("heatmap row width differs from grid_width");
        h.insert(h.end(), v.begin(), v.end());
      }
      if (static_cast<int>(h.size()) != r.grid_width * r.grid_height)
        throw SchemaError("heatmap size differs from the grid");
      r.heatmaps.push_back(std::move(h));
    }
    for (const auto& e : j.value("episode_summaries", json::array())) {
      EpisodeSummary s;
      s.seed = e.at("seed").get<std::uint64_t>();
      s.reward = e.at("reward").get<double>();
      s.length = e.at("length").get<int>();
      s.first_goals = e.at("first_goals").get<std::vector<int>>();
      s.proactive_updates = e.value("proactive_updates", std::uint64_t{0});
      if (!e.at("box_same_room").is_null()) s.box_same_room = e.at("box_same_room").get<bool>();
      r.episode_summaries.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

void write_eval_report(const EvalReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_text_file(dir / "eval_report.json", to_json(r).dump(2) + "\n");
  std::string csv = "episode,step,agent,goal,action,reward,achieved,x,y\n";
  for (const auto& t : r.trace) {
    std::string ach;
    for (std::size_t i = 0; i < t.achieved.size(); ++i) ach += (i ? ";" : "") + std::to_string(t.achieved[i]);
    csv += std::to_string(t.episode) + "," + std::to_string(t.step) + "," + std::to_string(t.agent) + "," +
           std::to_string(t.goal) + "," + std::to_string(t.action) + "," + format_number(t.reward) + "," + ach +
           "," + std::to_string(t.x) + "," + std::to_string(t.y) + "\n";
  }
  write_text_file(dir / "trace.csv", csv);
}

PolicyBundle load_policies(const RunConfig& cfg, const fs::path& dir, const std::string& mode, bool adapt) {
  const EnvInfo info = make_env(cfg.env, cfg.env_config)->info();
  PolicyBundle p;
  p.mode = mode;
  p.trigger = cfg.trigger;
  if (mode == "gmah" || mode == "low") {
    std::tie(p.low_spec, p.low) = mlp_from_checkpoint(require_checkpoint(dir, "low.json", "eval"));
    check_low_fits(p.low_spec, info, (dir / "low.json").string());
  }
  if (mode == "gmah") {
    const bool tuned = fs::exists(dir / "high_finetuned.json");
    const std::string name = tuned ? "high_finetuned.json" : "high.json";
    std::tie(p.high_spec, p.high) = mlp_from_checkpoint(require_checkpoint(dir, name, "eval"));
    check_high_fits(p.high_spec, info, (dir / name).string());
    if (adapt && fs::exists(dir / "ae.json")) {
      p.ae = AutoEncoder::from_checkpoint(load_checkpoint(dir / "ae.json"));
      if (p.ae->obs_dim() != static_cast<std::size_t>(info.obs_dim))
        throw DependencyError((dir / "ae.json").string() + " does not match environment '" + info.name + "'");
    }
  } else if (mode == "a2c") {
    auto [ps, pp] = mlp_from_checkpoint(require_checkpoint(dir, "a2c_policy.json", "eval"));
    auto [vs, vp] = mlp_from_checkpoint(require_checkpoint(dir, "a2c_value.json", "eval"));
    if (ps.input_size() != static_cast<std::size_t>(info.obs_dim) ||
        ps.output_size() != static_cast<std::size_t>(info.action_count))
      throw DependencyError((dir / "a2c_policy.json").string() + " does not match environment '" + info.name + "'");
    p.a2c = A2cAgent(ps, pp, vs, vp, cfg.a2c);
  } else if (mode != "low" && mode != "stay") {
    throw ConfigError("invalid value for 'mode': expected gmah, low, a2c or stay");
  }
  return p;
}

EvalReport evaluate_policies(Environment& env, const HrlConfig& hrl, const PolicyBundle& p, const EvalOptions& o) {
  if (o.episodes < 1) throw ConfigError("invalid value for 'episodes': must be positive");
  const EnvInfo info = env.info();
  const int n_goals = info.subgoal_count;
  const int W = env.grid_width(), H = env.grid_height();
  EvalReport r;
  r.env = info.name;
  r.mode = o.mode;
  r.episodes = o.episodes;
  r.subgoal_names = env.subgoal_names();
  r.subgoal_success.assign(static_cast<std::size_t>(n_goals), 0.0);
  r.subgoal_issued.assign(static_cast<std::size_t>(n_goals), 0);
  r.grid_width = W;
  r.grid_height = H;
  r.heatmaps.assign(static_cast<std::size_t>(info.n_agents), std::vector<long>(static_cast<std::size_t>(W * H), 0));
  std::vector<int> first_hit(static_cast<std::size_t>(n_goals), 0);
  const std::vector<int> plan = env.canonical_plan();
  Rng rng(o.seed, "eval.act");
  auto* dk = dynamic_cast<DoorKeyEnv*>(&env);

  double total_reward = 0.0, total_length = 0.0;
  r.min_reward = std::numeric_limits<double>::infinity();

  for (int ep = 0; ep < o.episodes; ++ep) {
    EpisodeSummary sum;
    sum.seed = eval_seed(o.seed, ep);
    sum.first_goals.assign(static_cast<std::size_t>(info.n_agents), -1);
    int step_in_ep = 0;
    auto record = [&](int agent, int goal, int action, const StepResult& res) {
      ++step_in_ep;
      sum.reward += res.reward;
      const auto [x, y] = env.agent_position(agent);
      ++r.heatmaps[static_cast<std::size_t>(agent)][static_cast<std::size_t>(y * W + x)];
      if (o.keep_trace) r.trace.push_back({ep, step_in_ep, agent, goal, action, res.reward, res.achieved_subgoals, x, y});
    };

    if (o.mode == "a2c" || o.mode == "stay") {
      env.reset(sum.seed);
      if (dk) sum.box_same_room = dk->box_in_agent_room();
      while (!env.done()) {
        const int agent = env.current_agent();
        int action = 1;  // turn left: the stay-put fixture never changes cell
        if (o.mode == "a2c") action = p.a2c->act(env.observe(agent), true, rng);
        const StepResult res = env.step(agent, action);
        record(agent, -1, action, res);
      }
    } else {
      std::vector<bool> seen(static_cast<std::size_t>(n_goals), false);
      std::vector<int> owner(static_cast<std::size_t>(n_goals), -1);  // agent holding the pending first issuance
      std::vector<std::size_t> plan_pos(static_cast<std::size_t>(info.n_agents), 0);
      auto goal_policy = [&](const GoalRequest& req) {
        int g;
        if (o.mode == "low") {
          auto& pos = plan_pos[static_cast<std::size_t>(req.agent)];
          if (req.previous_goal < 0) pos = 0;
          else if (req.previous_achieved) pos = (pos + 1) % plan.size();
          g = plan[pos];
        } else {
          g = argmax(mlp_forward(p.high_spec, p.high, req.obs));
        }
        if (req.previous_goal < 0) sum.first_goals[static_cast<std::size_t>(req.agent)] = g;
        if (!seen[static_cast<std::size_t>(g)]) {
          seen[static_cast<std::size_t>(g)] = true;
          owner[static_cast<std::size_t>(g)] = req.agent;
          ++r.subgoal_issued[static_cast<std::size_t>(g)];
        }
        return g;
      };
      auto action_policy = [&](int, std::span<const double> obs, int g) {
        return low_action(p.low_spec, p.low, obs, g, n_goals, 0.0, rng);
      };
      std::optional<AdaptiveTrigger> trig;
      HierarchicalRollout::Trigger trigger;
      if (o.mode == "gmah" && o.adapt && p.ae) {
        trig.emplace(*p.ae, p.high_spec, p.high, p.trigger, false);
        trigger = [&](int, std::span<const double> a, std::span<const double> b, int) { return (*trig)(a, b); };
      }
      HierarchicalRollout rollout(env, hrl, goal_policy, action_policy, trigger);
      rollout.reset(sum.seed);
      if (dk) sum.box_same_room = dk->box_in_agent_room();
      while (!rollout.done()) {
        const RolloutStep st = rollout.step();
        record(st.agent, st.goal, st.action, st.result);
        for (const auto& seg : st.closed) {
          auto& own = owner[static_cast<std::size_t>(seg.goal)];
          if (own == seg.agent) {
            if (seg.achieved) ++first_hit[static_cast<std::size_t>(seg.goal)];
            own = -1;
          }
        }
      }
      sum.proactive_updates = rollout.proactive_updates();
      r.proactive_updates += sum.proactive_updates;
    }
    sum.length = step_in_ep;
    total_reward += sum.reward;
    total_length += sum.length;
    r.min_reward = std::min(r.min_reward, sum.reward);
    r.episode_summaries.push_back(std::move(sum));
  }
  r.mean_reward = total_reward / o.episodes;
  r.mean_length = total_length / o.episodes;
  for (int g = 0; g < n_goals; ++g)
    r.subgoal_success[static_cast<std::size_t>(g)] =
        static_cast<double>(first_hit[static_cast<std::size_t>(g)]) / o.episodes;
  return r;
}

EvalReport evaluate(const RunConfig& cfg, const EvalOptions& opts) {
  cfg.validate();
  auto env = make_env(cfg.env, cfg.env_config);
  const PolicyBundle p = load_policies(cfg, cfg.artifact_dir(), opts.mode, opts.adapt);
  return evaluate_policies(*env, cfg.hrl, p, opts);
}

// ---- training ----

bool plateaued(const std::vector<double>& history, double rel, int count) {
  if (count < 1 || history.size() < static_cast<std::size_t>(count) + 1) return false;
  for (std::size_t i = history.size() - static_cast<std::size_t>(count); i < history.size(); ++i) {
    const double prev = history[i - 1], cur = history[i];
    if (prev == 0.0) return false;
    if (std::abs(cur - prev) / std::abs(prev) >= rel) return false;
  }
  return true;
}

fs::path seed_dir(const fs::path& base, const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.seeds.size() == 1) return base;
  return base / ("seed_" + std::to_string(seed));
}

std::uint64_t episode_seed(std::uint64_t run_seed, long episode) {
  Rng r = Rng(run_seed, "episodes").derive(static_cast<std::uint64_t>(episode));
  return r();
}

std::uint64_t eval_seed(std::uint64_t run_seed, long episode) {
  Rng r = Rng(run_seed, "eval").derive(static_cast<std::uint64_t>(episode));
  return r();
}

StageOutcome stage1_low(const RunConfig& cfg, std::uint64_t seed, const fs::path& out) {
  cfg.validate();
  auto env = make_env(cfg.env, cfg.env_config);
  auto eval_env = env->clone();
  const EnvInfo info = env->info();
  const int n = info.subgoal_count;
  fs::create_directories(out);

  Rng root(seed, "stage.low");
  Rng init = root.derive("init"), goal_rng = root.derive("goal"), act_rng = root.derive("act");
  QNetwork low(low_network_spec(info, cfg.learner), init, AdamConfig{cfg.learner.lr}, cfg.learner.target_refresh);
  ReplayBuffer<LowTransition> buffer(cfg.learner.buffer_capacity, root.derive("buffer"));

  long clock = 0;
  auto goal_policy = [&](const GoalRequest& r) {
    const bool draw = r.previous_goal < 0 || cfg.stage1_resample == "segment" ||
                      (cfg.stage1_resample == "achieved" && r.previous_achieved);
    return draw ? static_cast<int>(goal_rng.below(n)) : r.previous_goal;
  };
  auto action_policy = [&](int, std::span<const double> obs, int g) {
    return low_action(low.spec(), low.params(), obs, g, n, cfg.hrl.epsilon.at(clock), act_rng);
  };
  HierarchicalRollout rollout(*env, cfg.hrl, goal_policy, action_policy);

  MetricsWriter metrics(out / "metrics_low.csv", n);
  EvalLog evals(out / "eval_low.csv", n);
  Window w(n);
  const std::vector<int> plan = env->canonical_plan();

  auto on_step = [&](RolloutStep& st, long step) {
    for (auto& seg : st.closed) {
      if (cfg.hrl.her)
        for (auto& t : her_relabel(seg.lows, seg.achieved_log, seg.goal, n, cfg.hrl.horizon(), cfg.hrl.beta_low))
          buffer.push(std::move(t));
      for (auto& t : seg.lows) buffer.push(std::move(t));
    }
    if (step >= cfg.learner.learn_start && step % cfg.learner.train_every == 0 &&
        buffer.size() >= cfg.learner.batch_size)
      w.loss_low.push_back(
          train_low_batch(low, buffer.sample(cfg.learner.batch_size), n, cfg.hrl.gamma_low, cfg.learner.grad_clip,
                          cfg.learner.double_q));
  };
  auto sched = [&](long step) { return std::pair{cfg.hrl.epsilon.at(step), kNaN}; };
  auto eval_fn = [&]() {
    PolicyBundle p;
    p.mode = "low";
    p.low_spec = low.spec();
    p.low = low.params();
    EvalReport r = evaluate_policies(*eval_env, cfg.hrl, p, periodic_eval_options(cfg, "low", seed));
    return std::pair{plan_success(r, plan), std::move(r)};
  };
  const LoopState s = drive(cfg, seed, rollout, w, metrics, evals, clock, on_step, sched, eval_fn);

  save_checkpoint(out / "low.json", mlp_checkpoint(low.spec(), low.params()));
  StageOutcome o{"low", seed, out, s.step, s.episode, s.plateau, 0};
  write_summary(out, o,
                {{"parameter_counts",
                  {{"low", param_count(low.params())}, {"a2c_equivalent", a2c_parameter_count(info, cfg.a2c)}}},
                 {"updates", low.updates()}});
  return o;
}

StageOutcome stage2_high(const RunConfig& cfg, std::uint64_t seed, const fs::path& out, const fs::path& from) {
  cfg.validate();
  auto env = make_env(cfg.env, cfg.env_config);
  auto eval_env = env->clone();
  const EnvInfo info = env->info();
  const int n = info.subgoal_count;
  auto [low_spec, low_params] = mlp_from_checkpoint(require_checkpoint(from, "low.json", "high"));
  check_low_fits(low_spec, info, (from / "low.json").string());
  fs::create_directories(out);

  Rng root(seed, "stage.high");
  Rng init = root.derive("init"), goal_rng = root.derive("goal"), act_rng = root.derive("act");
  QNetwork high(high_network_spec(info, cfg.high_learner), init, AdamConfig{cfg.high_learner.lr},
                cfg.high_learner.target_refresh);
  ReplayBuffer<HighTransition> buffer(cfg.high_learner.buffer_capacity, root.derive("buffer"));

  std::optional<AutoEncoder> ae;
  std::optional<AdaptiveTrigger> trig;
  long clock = 0;
  HierarchicalRollout::Trigger trigger;
  if (cfg.adapt) {
    ae = obtain_autoencoder(cfg, seed, from, out, *env);
    trig.emplace(*ae, high.spec(), high.params(), cfg.trigger);
    trigger = [&](int, std::span<const double> a, std::span<const double> b, int) {
      trig->set_clock(clock);
      return (*trig)(a, b);
    };
  }
  auto goal_policy = [&](const GoalRequest& r) {
    return select_from_values(high.q(r.obs), SelectMode::sample, cfg.hrl.temperature.at(clock), goal_rng);
  };
  auto action_policy = [&](int, std::span<const double> obs, int g) {
    return low_action(low_spec, low_params, obs, g, n, cfg.frozen_low_epsilon, act_rng);
  };
  HierarchicalRollout rollout(*env, cfg.hrl, goal_policy, action_policy, trigger);

  MetricsWriter metrics(out / "metrics_high.csv", n);
  EvalLog evals(out / "eval_high.csv", n);
  Window w(n);
  auto on_step = [&](RolloutStep& st, long step) {
    for (auto& seg : st.closed) buffer.push(seg.high());
    if (step >= cfg.high_learner.learn_start && step % cfg.high_learner.train_every == 0 &&
        buffer.size() >= cfg.high_learner.batch_size)
      w.loss_high.push_back(train_high_batch(high, buffer.sample(cfg.high_learner.batch_size), cfg.hrl.gamma,
                                             cfg.high_learner.grad_clip, cfg.high_learner.double_q));
  };
  auto sched = [&](long step) { return std::pair{cfg.frozen_low_epsilon, cfg.hrl.temperature.at(step)}; };
  auto eval_fn = [&]() {
    PolicyBundle p;
    p.mode = "gmah";
    p.low_spec = low_spec;
    p.low = low_params;
    p.high_spec = high.spec();
    p.high = high.params();
    p.ae = ae;
    p.trigger = cfg.trigger;
    EvalReport r = evaluate_policies(*eval_env, cfg.hrl, p, periodic_eval_options(cfg, "gmah", seed));
    return std::pair{r.mean_reward, std::move(r)};
  };
  const LoopState s = drive(cfg, seed, rollout, w, metrics, evals, clock, on_step, sched, eval_fn);

  if (from != out) save_checkpoint(out / "low.json", mlp_checkpoint(low_spec, low_params));
  save_checkpoint(out / "high.json", mlp_checkpoint(high.spec(), high.params()));
  if (trig) write_trigger_log(out / "trigger_log.csv", trig->log());
  StageOutcome o{"high", seed, out, s.step, s.episode, s.plateau, rollout.proactive_updates()};
  json counts{{"low", param_count(low_params)},
              {"high", param_count(high.params())},
              {"a2c_equivalent", a2c_parameter_count(info, cfg.a2c)}};
  json extra{{"updates", high.updates()}};
  if (ae) {
    counts["autoencoder"] = param_count(ae->encoder_params()) + param_count(ae->decoder_params()) + ae->omega().size();
    extra["trigger"] = {{"stage1_evaluations", trig->stage1_evaluations()},
                        {"stage1_failures", trig->stage1_failures()},
                        {"stage2_evaluations", trig->stage2_evaluations()},
                        {"fired", trig->fired()}};
  }
  extra["parameter_counts"] = counts;
  write_summary(out, o, extra);
  return o;
}

StageOutcome stage3_mix(const RunConfig& cfg, std::uint64_t seed, const fs::path& out, const fs::path& from) {
  cfg.validate();
  auto env = make_env(cfg.env, cfg.env_config);
  auto eval_env = env->clone();
  const EnvInfo info = env->info();
  if (info.n_agents < 2)
    throw DomainError("the mixing stage needs a multi-agent environment; '" + info.name + "' has one agent");
  const int n = info.subgoal_count;
  auto [low_spec, low_params] = mlp_from_checkpoint(require_checkpoint(from, "low.json", "mix"));
  check_low_fits(low_spec, info, (from / "low.json").string());
  auto [high_spec, high_params] = mlp_from_checkpoint(require_checkpoint(from, "high.json", "mix"));
  check_high_fits(high_spec, info, (from / "high.json").string());
  fs::create_directories(out);

  Rng root(seed, "stage.mix");
  Rng init = root.derive("init"), goal_rng = root.derive("goal"), act_rng = root.derive("act");
  // Homogeneous agents share one high-level network.
  QNetwork high(high_spec, high_params, AdamConfig{cfg.high_learner.lr}, cfg.mixer.target_refresh);
  MixerSpec ms;
  ms.n_agents = static_cast<std::size_t>(info.n_agents);
  ms.state_dim = env->global_state().size();
  ms.hidden_dim = cfg.mixer.hidden_dim;
  ms.hyper_hidden = cfg.mixer.hyper_hidden;
  GoalMixer mixer(ms, init, AdamConfig{cfg.mixer.lr}, cfg.mixer.target_refresh);
  ReplayBuffer<JointRecord> buffer(cfg.mixer.buffer_capacity, root.derive("buffer"));

  std::optional<AutoEncoder> ae;
  std::optional<AdaptiveTrigger> trig;
  long clock = 0;
  HierarchicalRollout::Trigger trigger;
  if (cfg.adapt && fs::exists(from / "ae.json")) {
    ae = obtain_autoencoder(cfg, seed, from, out, *env);
    trig.emplace(*ae, high.spec(), high.params(), cfg.trigger);
    trigger = [&](int, std::span<const double> a, std::span<const double> b, int) {
      trig->set_clock(clock);
      return (*trig)(a, b);
    };
  }
  auto goal_policy = [&](const GoalRequest& r) {
    return select_from_values(high.q(r.obs), SelectMode::sample, cfg.hrl.temperature.at(clock), goal_rng);
  };
  auto action_policy = [&](int, std::span<const double> obs, int g) {
    return low_action(low_spec, low_params, obs, g, n, cfg.frozen_low_epsilon, act_rng);
  };
  HierarchicalRollout rollout(*env, cfg.hrl, goal_policy, action_policy, trigger, true);

  MetricsWriter metrics(out / "metrics_mix.csv", n);
  EvalLog evals(out / "eval_mix.csv", n);
  Window w(n);
  const std::vector<QNetwork*> highs(static_cast<std::size_t>(info.n_agents), &high);
  auto on_step = [&](RolloutStep& st, long step) {
    if (st.joint) buffer.push(std::move(*st.joint));
    if (step >= cfg.mixer.learn_start && step % cfg.mixer.train_every == 0 && buffer.size() >= cfg.mixer.batch_size)
      w.loss_mix.push_back(
          mix_td_update(mixer, highs, buffer.sample(cfg.mixer.batch_size), cfg.hrl.gamma, cfg.mixer.grad_clip,
                        cfg.mixer.double_q));
  };
  auto sched = [&](long step) { return std::pair{cfg.frozen_low_epsilon, cfg.hrl.temperature.at(step)}; };
  auto eval_fn = [&]() {
    PolicyBundle p;
    p.mode = "gmah";
    p.low_spec = low_spec;
    p.low = low_params;
    p.high_spec = high.spec();
    p.high = high.params();
    p.ae = ae;
    p.trigger = cfg.trigger;
    EvalReport r = evaluate_policies(*eval_env, cfg.hrl, p, periodic_eval_options(cfg, "gmah", seed));
    return std::pair{r.mean_reward, std::move(r)};
  };
  const LoopState s = drive(cfg, seed, rollout, w, metrics, evals, clock, on_step, sched, eval_fn);

  if (from != out) {
    save_checkpoint(out / "low.json", mlp_checkpoint(low_spec, low_params));
    save_checkpoint(out / "high.json", mlp_checkpoint(high_spec, high_params));
  }
  save_checkpoint(out / "high_finetuned.json", mlp_checkpoint(high.spec(), high.params()));
  save_checkpoint(out / "mixer.json", mixer.to_checkpoint());
  if (trig) write_trigger_log(out / "trigger_log.csv", trig->log());
  Rng probe_rng = root.derive("probe");
  StageOutcome o{"mix", seed, out, s.step, s.episode, s.plateau, rollout.proactive_updates()};
  write_summary(out, o,
                {{"parameter_counts",
                  {{"low", param_count(low_params)},
                   {"high", param_count(high.params())},
                   {"mixer", param_count(mixer.params())},
                   {"a2c_equivalent", a2c_parameter_count(info, cfg.a2c)}}},
                 {"mixer_updates", mixer.updates()},
                 {"monotonicity_probe", monotonicity_probe(ms, mixer.params(), 200, probe_rng)}});
  return o;
}

StageOutcome a2c_baseline(const RunConfig& cfg, std::uint64_t seed, const fs::path& out) {
  cfg.validate();
  auto env = make_env(cfg.env, cfg.env_config);
  auto eval_env = env->clone();
  const EnvInfo info = env->info();
  const int n = info.subgoal_count;
  fs::create_directories(out);

  Rng root(seed, "stage.a2c");
  Rng init = root.derive("init"), act_rng = root.derive("act");
  A2cAgent agent(info, cfg.a2c, init);
  MetricsWriter metrics(out / "metrics_a2c.csv", n);
  EvalLog evals(out / "eval_a2c.csv", n);
  Window w(n);
  w.track_intrinsic = false;
  w.track_success = false;

  struct Chunk {
    std::vector<std::vector<double>> obs;
    std::vector<int> actions;
    std::vector<double> rewards;
    std::vector<bool> dones;
  };
  std::vector<Chunk> chunks(static_cast<std::size_t>(info.n_agents));
  auto flush = [&](Chunk& c, double bootstrap) {
    if (c.obs.empty()) return;
    const std::unique_ptr<bool[]> dones(new bool[c.dones.size()]);
    std::copy(c.dones.begin(), c.dones.end(), dones.get());
    const auto ret =
        n_step_returns(c.rewards, std::span<const bool>(dones.get(), c.dones.size()), bootstrap, cfg.a2c.gamma);
    std::vector<A2cSample> batch;
    for (std::size_t i = 0; i < c.obs.size(); ++i)
      batch.push_back({c.obs[i], c.actions[i], ret[i], ret[i] - agent.value(c.obs[i])});
    w.entropy.push_back(agent.update(batch).entropy);
    c = Chunk{};
  };

  long step = 0, episode = 0, last_row = 0, next_eval = cfg.eval.interval;
  std::vector<double> history;
  bool plateau = false, pending = false;
  while (step < cfg.total_steps && !plateau) {
    env->reset(episode_seed(seed, episode));
    for (auto& c : chunks) c = Chunk{};
    double ret = 0.0;
    while (!env->done() && step < cfg.total_steps) {
      const int a = env->current_agent();
      auto obs = env->observe(a);
      const int action = agent.act(obs, false, act_rng);
      const StepResult r = env->step(a, action);
      ++step;
      ret += r.reward;
      Chunk& c = chunks[static_cast<std::size_t>(a)];
      c.obs.push_back(std::move(obs));
      c.actions.push_back(action);
      c.rewards.push_back(r.reward);
      c.dones.push_back(r.done);
      if (r.done) {
        for (auto& other : chunks) {
          if (other.obs.empty()) continue;
          other.dones.back() = true;
          flush(other, 0.0);
        }
      } else if (static_cast<int>(c.obs.size()) >= cfg.a2c.n_steps) {
        flush(c, agent.value(env->observe(a)));
      }
    }
    if (!env->done()) break;
    ++episode;
    w.returns.push_back(ret);
    pending = true;
    if (step - last_row >= cfg.log_interval) {
      metrics.write(w.row(step, episode, kNaN, kNaN));
      w.clear();
      last_row = step;
      pending = false;
    }
    if (cfg.eval.interval > 0 && step >= next_eval) {
      while (next_eval <= step) next_eval += cfg.eval.interval;
      PolicyBundle p;
      p.mode = "a2c";
      p.a2c = agent;
      const EvalReport r = evaluate_policies(*eval_env, cfg.hrl, p, periodic_eval_options(cfg, "a2c", seed));
      evals.write(step, r.mean_reward, r);
      history.push_back(r.mean_reward);
      plateau = cfg.eval.plateau_stop &&
                static_cast<double>(step) >= cfg.eval.plateau_after * static_cast<double>(cfg.total_steps) &&
                plateaued(history, cfg.eval.plateau_rel, cfg.eval.plateau_count);
    }
  }
  if (pending) metrics.write(w.row(step, episode, kNaN, kNaN));

  save_checkpoint(out / "a2c_policy.json", mlp_checkpoint(agent.policy_spec(), agent.policy_params()));
  save_checkpoint(out / "a2c_value.json", mlp_checkpoint(agent.value_spec(), agent.value_params()));
  StageOutcome o{"a2c", seed, out, step, episode, plateau, 0};
  write_summary(out, o,
                {{"parameter_counts",
                  {{"a2c", param_count(agent.policy_params()) + param_count(agent.value_params())}}}});
  return o;
}

std::vector<StageOutcome> train(const RunConfig& cfg) {
  cfg.validate();
  const fs::path base = cfg.out_dir;
  fs::create_directories(base);
  echo_config(cfg, base / ("resolved_config_" + cfg.stage + ".json"));
  std::vector<StageOutcome> out;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = seed_dir(base, cfg, seed);
    const fs::path from = seed_dir(cfg.artifact_dir(), cfg, seed);
    fs::create_directories(dir);
    if (dir != base) {
      RunConfig one = cfg;
      one.seeds = {seed};
      one.out_dir = dir.string();
      one.from = from.string();
      echo_config(one, dir / ("resolved_config_" + cfg.stage + ".json"));
    }
    if (cfg.stage == "low") out.push_back(stage1_low(cfg, seed, dir));
    else if (cfg.stage == "high") out.push_back(stage2_high(cfg, seed, dir, from));
    else if (cfg.stage == "mix") out.push_back(stage3_mix(cfg, seed, dir, from));
    else out.push_back(a2c_baseline(cfg, seed, dir));
  }
  return out;
}

}  // namespace gmah
