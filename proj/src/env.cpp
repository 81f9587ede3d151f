#include "gmah/env.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gmah/doorkey.hpp"
#include "gmah/error.hpp"
#include "gmah/rng.hpp"
#include "gmah/trashgrid.hpp"

namespace gmah {

AgentCursor::AgentCursor(int n_agents) : order_(static_cast<std::size_t>(n_agents)) {
  if (n_agents < 1) throw ConfigError("an environment needs at least one agent");
  std::iota(order_.begin(), order_.end(), 0);
}

bool AgentCursor::advance() {
  index_ = (index_ + 1) % order_.size();
  return index_ == 0;
}

ResetResult Environment::reset(std::uint64_t seed) {
  cursor_.reset();
  done_ = false;
  started_ = true;
  do_reset(seed);
  ResetResult out;
  const int n = info().n_agents;
  for (int a = 0; a < n; ++a) out.observations.push_back(observe(a));
  out.state = global_state();
  return out;
}

StepResult Environment::step(int agent_id, int action) {
  if (!started_) throw LifecycleError("step called before reset");
  if (done_) throw LifecycleError("step called after the episode finished; reset first");
  if (agent_id != cursor_.current())
    throw OrderingError("agent " + std::to_string(agent_id) + " acted out of turn; expected " +
                        std::to_string(cursor_.current()));
  const int actions = info().action_count;
  if (action < 0 || action >= actions)
    throw DomainError("action " + std::to_string(action) + " outside [0, " +
                      std::to_string(actions) + ")");
  StepResult result = do_step(agent_id, action);
  cursor_.advance();
  done_ = result.done;
  return result;
}

std::unique_ptr<Environment> make_env(const std::string& name, const nlohmann::json& env_config) {
  if (name == "doorkey") return std::make_unique<DoorKeyEnv>(doorkey_config_from_json(env_config));
  if (name == "trashgrid")
    return std::make_unique<TrashGridEnv>(trashgrid_config_from_json(env_config));
  throw ConfigError("unknown environment '" + name + "'");
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---- conformance ----

bool ConformanceReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string ConformanceReport::to_text() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.passed ? "PASS " : "FAIL ") << env_name << " " << c.name;
    if (!c.detail.empty()) os << " (" << c.detail << ")";
    os << "\n";
  }
  return os.str();
}

namespace {

struct Trajectory {
  ResetResult start;
  std::vector<StepResult> steps;
};

bool same(const StepResult& a, const StepResult& b) {
  return a.obs == b.obs && a.reward == b.reward && a.done == b.done &&
         a.achieved_subgoals == b.achieved_subgoals;
}

Trajectory run_random_episode(Environment& env, std::uint64_t seed, std::size_t max_steps) {
  Trajectory traj;
  traj.start = env.reset(seed);
  Rng rng(seed, "conformance-actions");
  const int actions = env.info().action_count;
  while (!env.done() && traj.steps.size() < max_steps)
    traj.steps.push_back(env.step(env.current_agent(), rng.below(actions)));
  return traj;
}

template <class Fn>
ConformanceCheck expect_error(const std::string& name, ErrorCode code, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == code) return {name, true, ""};
    return {name, false, std::string("wrong error kind: ") + error_code_name(e.code())};
  }
  return {name, false, "no error raised"};
}

}  // namespace

ConformanceReport conformance_suite(Environment& env, const ConformanceOptions& opts) {
  ConformanceReport report;
  const EnvInfo info = env.info();
  report.env_name = info.name;
  const std::size_t budget =
      static_cast<std::size_t>(info.max_steps + 2) * static_cast<std::size_t>(info.n_agents);

  // determinism: same seed and same action stream reproduce everything.
  {
    bool ok = true;
    std::string detail;
    for (int ep = 0; ep < opts.episodes && ok; ++ep) {
      const std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(ep);
      Trajectory a = run_random_episode(env, seed, budget);
      Trajectory b = run_random_episode(env, seed, budget);
      if (a.start.observations != b.start.observations || a.start.state != b.start.state) {
        ok = false;
        detail = "reset(" + std::to_string(seed) + ") not reproducible";
      } else if (a.steps.size() != b.steps.size() ||
                 !std::equal(a.steps.begin(), a.steps.end(), b.steps.begin(), same)) {
        ok = false;
        detail = "trajectory for seed " + std::to_string(seed) + " diverged";
      }
    }
    report.checks.push_back({"determinism", ok, detail});
  }

  // seed sensitivity: different seeds should give different layouts.
  {
    std::vector<std::vector<double>> states;
    for (int i = 0; i < 10; ++i) states.push_back(env.reset(opts.seed + 1000 + i).state);
    std::sort(states.begin(), states.end());
    const auto distinct = std::unique(states.begin(), states.end()) - states.begin();
    report.checks.push_back(
        {"seed_sensitivity", distinct > 1, std::to_string(distinct) + " distinct layouts / 10"});
  }

  // observation dimension, bounds, subgoal indices, termination.
  {
    bool dim_ok = true, bounds_ok = true, subgoal_ok = true, terminates = true, shape_ok = true;
    const std::size_t state_len = std::accumulate(info.state_shape.begin(), info.state_shape.end(),
                                                  std::size_t{1}, [](std::size_t a, int b) {
                                                    return a * static_cast<std::size_t>(b);
                                                  });
    auto check_obs = [&](const std::vector<double>& obs) {
      dim_ok &= obs.size() == static_cast<std::size_t>(info.obs_dim);
      if (opts.expected_obs_dim > 0) dim_ok &= obs.size() == static_cast<std::size_t>(opts.expected_obs_dim);
      for (double v : obs) bounds_ok &= v >= 0.0 && v <= 1.0;
    };
    for (int ep = 0; ep < opts.episodes; ++ep) {
      Trajectory t = run_random_episode(env, opts.seed + 100 + ep, budget + 1);
      for (const auto& o : t.start.observations) check_obs(o);
      shape_ok &= t.start.state.size() == state_len;
      for (double v : t.start.state) bounds_ok &= v >= 0.0 && v <= 1.0;
      for (const auto& s : t.steps) {
        check_obs(s.obs);
        for (int g : s.achieved_subgoals) subgoal_ok &= g >= 0 && g < info.subgoal_count;
      }
      terminates &= env.done();
    }
    std::string dim_detail = "obs_dim=" + std::to_string(info.obs_dim);
    if (opts.expected_obs_dim > 0) dim_detail += " expected=" + std::to_string(opts.expected_obs_dim);
    report.checks.push_back({"obs_dim", dim_ok, dim_detail});
    report.checks.push_back({"obs_bounds", bounds_ok, "all components in [0,1]"});
    report.checks.push_back({"state_shape", shape_ok, ""});
    report.checks.push_back({"subgoal_indices", subgoal_ok, ""});
    report.checks.push_back({"terminates", terminates, "within (T+2)*n_agents steps"});
  }

  // contract errors.
  env.reset(opts.seed);
  report.checks.push_back(expect_error("invalid_action", ErrorCode::domain, [&] {
    env.step(env.current_agent(), info.action_count);
  }));
  report.checks.push_back(expect_error("negative_action", ErrorCode::domain, [&] {
    env.step(env.current_agent(), -1);
  }));
  if (info.n_agents > 1) {
    report.checks.push_back(expect_error("turn_order", ErrorCode::ordering, [&] {
      env.step((env.current_agent() + 1) % info.n_agents, 0);
    }));
  } else {
    report.checks.push_back({"turn_order", true, "single agent"});
  }
  run_random_episode(env, opts.seed, budget + 1);
  report.checks.push_back(expect_error("lifecycle", ErrorCode::lifecycle, [&] {
    env.step(env.current_agent(), 0);
  }));
  return report;
}

// ---- replay files ----

void save_replay(const std::filesystem::path& path, const ReplayFile& file) {
  std::ostringstream os;
  os << "# gmah-replay env=" << file.env_name << " config_hash=" << file.config_hash << "\n";
  os << "seed,agent_id,action\n";
  for (const auto& r : file.records) os << r.seed << "," << r.agent_id << "," << r.action << "\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << os.str();
}

ReplayFile load_replay(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  ReplayFile file;
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("# gmah-replay "))
    throw ParseError(path.string() + ": missing replay header");
  std::istringstream header(line.substr(14));
  std::string field;
  while (header >> field) {
    if (field.starts_with("env=")) file.env_name = field.substr(4);
    if (field.starts_with("config_hash=")) file.config_hash = field.substr(12);
  }
  if (!std::getline(in, line) || line != "seed,agent_id,action")
    throw ParseError(path.string() + ": missing column line");
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ReplayRecord r;
    unsigned long long seed = 0;
    if (std::sscanf(line.c_str(), "%llu,%d,%d", &seed, &r.agent_id, &r.action) != 3)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": malformed record");
    r.seed = seed;
    file.records.push_back(r);
  }
  return file;
}

std::vector<StepResult> replay(Environment& env, const std::vector<ReplayRecord>& records) {
  std::vector<StepResult> out;
  out.reserve(records.size());
  bool have_seed = false;
  std::uint64_t current = 0;
  for (const auto& r : records) {
    if (!have_seed || r.seed != current || env.done()) {
      env.reset(r.seed);
      current = r.seed;
      have_seed = true;
    }
    out.push_back(env.step(r.agent_id, r.action));
  }
  return out;
}

}  // namespace gmah
