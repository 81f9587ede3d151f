#include "gmah/hrl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gmah/checkpoint.hpp"

namespace gmah {

nlohmann::json to_json(const LowTransition& t) {
  return {{"obs", t.obs},   {"action", t.action},     {"reward", t.reward},
          {"goal", t.goal}, {"next_obs", t.next_obs}, {"done", t.done}};
}

nlohmann::json to_json(const HighTransition& t) {
  return {{"obs", t.obs},
          {"goal", t.goal},
          {"summed_reward", t.summed_reward},
          {"next_obs", t.next_obs},
          {"segment_len", t.segment_len},
          {"done", t.done}};
}

LowTransition low_transition_from_json(const nlohmann::json& j) {
  try {
    LowTransition t;
    t.obs = j.at("obs").get<std::vector<double>>();
    t.action = j.at("action").get<int>();
    t.reward = j.at("reward").get<double>();
    t.goal = j.at("goal").get<int>();
    t.next_obs = j.at("next_obs").get<std::vector<double>>();
    t.done = j.at("done").get<bool>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed low transition: ") + e.what());
  }
}

HighTransition high_transition_from_json(const nlohmann::json& j) {
  try {
    HighTransition t;
    t.obs = j.at("obs").get<std::vector<double>>();
    t.goal = j.at("goal").get<int>();
    t.summed_reward = j.at("summed_reward").get<double>();
    t.next_obs = j.at("next_obs").get<std::vector<double>>();
    t.segment_len = j.at("segment_len").get<int>();
    t.done = j.at("done").get<bool>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed high transition: ") + e.what());
  }
}

template <class T>
void write_buffer_snapshot(const std::filesystem::path& dir, const std::string& name,
                           const ReplayBuffer<T>& buffer) {
  const auto items = buffer.ordered();
  std::string lines;
  for (const auto& item : items) lines += to_json(item).dump() + "\n";
  write_text_file(dir / (name + ".jsonl"), lines);
  const nlohmann::json manifest = {{"name", name},
                                   {"capacity", buffer.capacity()},
                                   {"size", buffer.size()},
                                   {"pushed", buffer.pushed()},
                                   {"records", name + ".jsonl"}};
  write_text_file(dir / (name + ".manifest.json"), manifest.dump(2) + "\n");
}

template void write_buffer_snapshot(const std::filesystem::path&, const std::string&,
                                    const ReplayBuffer<LowTransition>&);
template void write_buffer_snapshot(const std::filesystem::path&, const std::string&,
                                    const ReplayBuffer<HighTransition>&);

double Schedule::at(long step) const {
  if (steps <= 0 || step >= steps) return end;
  if (step <= 0) return start;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(steps);
}

void HrlConfig::validate() const {
  if (c < 1) throw ConfigError("invalid value for 'hrl.c': must be at least 1");
  if (!(beta_low >= 0.0 && beta_low <= 1.0)) throw ConfigError("invalid value for 'hrl.beta_low': must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("invalid value for 'hrl.gamma': must lie in [0, 1)");
  if (!(gamma_low >= 0.0 && gamma_low < 1.0)) throw ConfigError("invalid value for 'hrl.gamma_low': must lie in [0, 1)");
  if (T_M < 0 || (T_M > 0 && T_M < c))
    throw ConfigError("invalid value for 'hrl.T_M': must be 0 (use c) or at least c");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0 && epsilon.end >= 0.0 && epsilon.end <= 1.0))
    throw ConfigError("invalid value for 'hrl.epsilon': must lie in [0, 1]");
  if (!(temperature.start > 0.0 && temperature.end > 0.0))
    throw ConfigError("invalid value for 'hrl.temperature': must be positive");
}

void LearnerConfig::validate() const {
  if (hidden.empty()) throw ConfigError("invalid value for 'learner.hidden': needs at least one layer");
  for (auto h : hidden)
    if (h == 0) throw ConfigError("invalid value for 'learner.hidden': sizes must be positive");
  if (!(lr > 0.0)) throw ConfigError("invalid value for 'learner.lr': must be positive");
  if (batch_size == 0) throw ConfigError("invalid value for 'learner.batch_size': must be positive");
  if (buffer_capacity == 0) throw ConfigError("invalid value for 'learner.buffer_capacity': must be positive");
  if (target_refresh < 1) throw ConfigError("invalid value for 'learner.target_refresh': must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("invalid value for 'learner.grad_clip': must be positive");
  if (learn_start < 0) throw ConfigError("invalid value for 'learner.learn_start': must be nonnegative");
  if (train_every < 1) throw ConfigError("invalid value for 'learner.train_every': must be positive");
}

double intrinsic_reward(bool achieved, int t, int T_M, double beta) {
  if (T_M < 1) throw DomainError("intrinsic reward horizon must be positive");
  if (t < 0 || t > T_M)
    throw DomainError("intrinsic reward time " + std::to_string(t) + " outside [0, " +
                      std::to_string(T_M) + "]");
  if (!achieved) return 0.0;
  return 1.0 - beta * static_cast<double>(t) / static_cast<double>(T_M);
}

std::vector<double> build_low_input(std::span<const double> obs, int goal, int n_goals) {
  if (goal < 0 || goal >= n_goals)
    throw DomainError("goal " + std::to_string(goal) + " outside [0, " + std::to_string(n_goals) + ")");
  std::vector<double> x(obs.begin(), obs.end());
  x.resize(obs.size() + static_cast<std::size_t>(n_goals), 0.0);
  x[obs.size() + static_cast<std::size_t>(goal)] = 1.0;
  return x;
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw DimensionError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<int>(best);
}

int select_from_values(std::span<const double> q, SelectMode mode, double temperature, Rng& rng) {
  if (mode == SelectMode::greedy) return argmax(q);
  if (!(temperature > 0.0)) throw DomainError("sampling temperature must be positive");
  std::vector<double> scaled(q.begin(), q.end());
  for (double& v : scaled) v /= temperature;
  const auto p = softmax(scaled);
  return static_cast<int>(rng.categorical(p));
}

int select_subgoal(const MlpSpec& spec, const ParameterSet& high_params, std::span<const double> obs,
                   SelectMode mode, double temperature, Rng& rng) {
  const auto q = mlp_forward(spec, high_params, obs);
  return select_from_values(q, mode, temperature, rng);
}

int epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && rng.uniform() < epsilon) return rng.below(static_cast<int>(q.size()));
  return argmax(q);
}

int low_action(const MlpSpec& spec, const ParameterSet& low_params, std::span<const double> obs,
               int goal, int n_goals, double epsilon, Rng& rng) {
  const auto x = build_low_input(obs, goal, n_goals);
  // Skip the forward pass when the action is random anyway.
  if (epsilon >= 1.0) return rng.below(static_cast<int>(spec.output_size()));
  const auto q = mlp_forward(spec, low_params, x);
  return epsilon_greedy(q, epsilon, rng);
}

// ---- QNetwork ----

QNetwork::QNetwork(MlpSpec spec, ParameterSet params, AdamConfig opt, int target_refresh)
    : spec_(std::move(spec)), params_(std::move(params)), opt_(opt), target_refresh_(target_refresh) {
  spec_.validate();
  validate_params(spec_, params_);
  if (target_refresh_ < 1) throw ConfigError("target refresh interval must be positive");
  target_ = params_;
}

QNetwork::QNetwork(const MlpSpec& spec, Rng& rng, AdamConfig opt, int target_refresh)
    : QNetwork(spec, init_params(spec, rng), opt, target_refresh) {}

std::vector<double> QNetwork::q(std::span<const double> input) const {
  return mlp_forward(spec_, params_, input);
}

std::vector<double> QNetwork::q_target(std::span<const double> input) const {
  return mlp_forward(spec_, target_, input);
}

void QNetwork::apply(GradientRecord grads, double grad_clip) {
  clip_global_norm(grads, grad_clip);
  opt_.step(params_, grads);
  ++updates_;
  if (updates_ % target_refresh_ == 0) sync_target();
}

// ---- TD learning ----

TdResult td_loss_and_grads(const MlpSpec& spec, const ParameterSet& params,
                           const ParameterSet& target_params, const std::vector<TdSample>& batch,
                           double discount, bool double_q) {
  if (batch.empty()) throw DomainError("TD batch is empty");
  TdResult out;
  out.grads = zeros_like(params);
  out.targets.reserve(batch.size());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  MlpTrace trace;
  std::vector<double> upstream(spec.output_size(), 0.0);
  for (const auto& s : batch) {
    double y = s.reward;
    if (!s.done) {
      const auto next_q = mlp_forward(spec, target_params, s.next_input);
      if (double_q) {
        y += discount * next_q[static_cast<std::size_t>(argmax(mlp_forward(spec, params, s.next_input)))];
      } else {
        y += discount * *std::max_element(next_q.begin(), next_q.end());
      }
    }
    out.targets.push_back(y);
    const auto q = mlp_forward(spec, params, s.input, trace);
    if (s.action < 0 || static_cast<std::size_t>(s.action) >= q.size())
      throw DimensionError("TD sample action " + std::to_string(s.action) + " outside the Q output");
    const double err = q[static_cast<std::size_t>(s.action)] - y;
    out.loss += err * err * inv_n;
    std::fill(upstream.begin(), upstream.end(), 0.0);
    upstream[static_cast<std::size_t>(s.action)] = 2.0 * err * inv_n;
    backward_into(spec, params, trace, upstream, out.grads);
  }
  if (!std::isfinite(out.loss)) throw NumericError("TD loss is not finite");
  return out;
}

std::vector<TdSample> low_td_samples(const std::vector<LowTransition>& batch, int n_goals) {
  std::vector<TdSample> out;
  out.reserve(batch.size());
  for (const auto& t : batch)
    out.push_back({build_low_input(t.obs, t.goal, n_goals), t.action, t.reward,
                   build_low_input(t.next_obs, t.goal, n_goals), t.done});
  return out;
}

std::vector<TdSample> high_td_samples(const std::vector<HighTransition>& batch) {
  std::vector<TdSample> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back({t.obs, t.goal, t.summed_reward, t.next_obs, t.done});
  return out;
}

double train_low_batch(QNetwork& low, const std::vector<LowTransition>& batch, int n_goals,
                       double gamma, double grad_clip, bool double_q) {
  auto r = td_loss_and_grads(low.spec(), low.params(), low.target_params(),
                             low_td_samples(batch, n_goals), gamma, double_q);
  low.apply(std::move(r.grads), grad_clip);
  return r.loss;
}

double train_high_batch(QNetwork& high, const std::vector<HighTransition>& batch, double gamma,
                        double grad_clip, bool double_q) {
  auto r = td_loss_and_grads(high.spec(), high.params(), high.target_params(),
                             high_td_samples(batch), gamma, double_q);
  high.apply(std::move(r.grads), grad_clip);
  return r.loss;
}

// ---- rollout ----

HighTransition Segment::high() const {
  if (lows.empty()) throw LifecycleError("segment has no steps");
  return {start_obs, goal, extrinsic, end_obs, length(), done};
}

HierarchicalRollout::HierarchicalRollout(Environment& env, HrlConfig cfg, GoalPolicy goal_policy,
                                         ActionPolicy action_policy, Trigger trigger,
                                         bool synchronized)
    : env_(env),
      cfg_(std::move(cfg)),
      goal_policy_(std::move(goal_policy)),
      action_policy_(std::move(action_policy)),
      trigger_(std::move(trigger)),
      synchronized_(synchronized) {
  cfg_.validate();
  const EnvInfo info = env_.info();
  n_agents_ = info.n_agents;
  n_goals_ = info.subgoal_count;
}

void HierarchicalRollout::reset(std::uint64_t seed) {
  env_.reset(seed);
  open_.assign(static_cast<std::size_t>(n_agents_), Segment{});
  episode_return_ = 0.0;
  episode_length_ = 0;
  for (int a = 0; a < n_agents_; ++a) issue_goal(a, -1, false);
  if (synchronized_) open_epoch();
}

void HierarchicalRollout::issue_goal(int agent, int previous_goal, bool previous_achieved) {
  Segment seg;
  seg.agent = agent;
  seg.start_obs = env_.observe(agent);
  GoalRequest req{agent, seg.start_obs, previous_goal, previous_achieved};
  seg.goal = goal_policy_(req);
  if (seg.goal < 0 || seg.goal >= n_goals_)
    throw DomainError("goal policy returned " + std::to_string(seg.goal) + ", outside [0, " +
                      std::to_string(n_goals_) + ")");
  open_[static_cast<std::size_t>(agent)] = std::move(seg);
}

void HierarchicalRollout::open_epoch() {
  epoch_ = JointRecord{};
  for (const auto& seg : open_) {
    epoch_.obs.push_back(seg.start_obs);
    epoch_.goals.push_back(seg.goal);
  }
  epoch_.state = env_.global_state();
}

RolloutStep HierarchicalRollout::step() {
  if (!env_.started() || env_.done()) throw LifecycleError("rollout step needs a live episode; reset first");
  RolloutStep out;
  const int agent = env_.current_agent();
  Segment& seg = open_[static_cast<std::size_t>(agent)];
  const auto obs = env_.observe(agent);
  const int action = action_policy_(agent, obs, seg.goal);
  StepResult r = env_.step(agent, action);

  const int k = seg.length() + 1;
  const bool achieved = std::find(r.achieved_subgoals.begin(), r.achieved_subgoals.end(), seg.goal) !=
                        r.achieved_subgoals.end();
  const double intrinsic = intrinsic_reward(achieved, k, cfg_.horizon(), cfg_.beta_low);
  seg.lows.push_back({obs, action, intrinsic, seg.goal, r.obs, achieved || r.done});
  seg.achieved_log.push_back({r.achieved_subgoals, r.done});
  seg.extrinsic += r.reward;
  seg.achieved = achieved;
  episode_return_ += r.reward;
  ++episode_length_;
  if (synchronized_) {
    epoch_.reward += r.reward;
    ++epoch_.length;
  }

  bool close = achieved || k >= cfg_.c || r.done;
  if (!close && trigger_ && trigger_(agent, obs, r.obs, seg.goal)) {
    close = true;
    seg.proactive = true;
    ++proactive_updates_;
  }

  out.agent = agent;
  out.action = action;
  out.goal = seg.goal;
  out.segment_step = k;
  out.intrinsic = intrinsic;

  if (close) {
    auto finish = [&](int a, bool preempted) {
      Segment& s = open_[static_cast<std::size_t>(a)];
      if (s.lows.empty()) return;
      s.end_obs = a == agent ? r.obs : env_.observe(a);
      s.preempted = preempted;
      if (r.done) {
        s.done = true;
        s.lows.back().done = true;
      }
      out.closed.push_back(std::move(s));
      s.lows.clear();
    };
    const bool all = r.done || synchronized_;
    if (all) {
      std::vector<std::pair<int, bool>> previous;
      for (int a = 0; a < n_agents_; ++a) {
        const Segment& s = open_[static_cast<std::size_t>(a)];
        previous.emplace_back(s.goal, !s.lows.empty() && s.achieved);
      }
      finish(agent, false);
      for (int a = 0; a < n_agents_; ++a)
        if (a != agent) finish(a, !r.done);
      if (synchronized_) {
        epoch_.next_state = env_.global_state();
        for (int a = 0; a < n_agents_; ++a) epoch_.next_obs.push_back(env_.observe(a));
        epoch_.done = r.done;
        out.joint = std::move(epoch_);
      }
      if (!r.done) {
        for (int a = 0; a < n_agents_; ++a)
          issue_goal(a, previous[static_cast<std::size_t>(a)].first,
                     previous[static_cast<std::size_t>(a)].second);
        if (synchronized_) open_epoch();
      }
    } else {
      const int previous_goal = seg.goal;
      finish(agent, false);
      issue_goal(agent, previous_goal, achieved);
    }
  }
  out.result = std::move(r);
  return out;
}

Segment collect_segment(HierarchicalRollout& rollout, int agent, std::vector<Segment>* others) {
  while (true) {
    RolloutStep st = rollout.step();
    std::optional<Segment> mine;
    for (auto& seg : st.closed) {
      if (seg.agent == agent && !mine) {
        mine = std::move(seg);
      } else if (others) {
        others->push_back(std::move(seg));
      }
    }
    if (mine) return std::move(*mine);
    if (rollout.done()) throw LifecycleError("episode ended before the agent's segment closed");
  }
}

std::vector<LowTransition> her_relabel(const std::vector<LowTransition>& lows,
                                       const std::vector<AchievedStep>& achieved_log,
                                       int issued_goal, int n_goals, int T_M, double beta) {
  if (lows.size() != achieved_log.size())
    throw ConsistencyError("achieved log has " + std::to_string(achieved_log.size()) +
                           " entries for " + std::to_string(lows.size()) + " transitions");
  std::vector<LowTransition> out;
  for (int g = 0; g < n_goals; ++g) {
    if (g == issued_goal) continue;
    std::size_t first = lows.size();
    for (std::size_t i = 0; i < achieved_log.size() && first == lows.size(); ++i) {
      const auto& a = achieved_log[i].achieved;
      if (std::find(a.begin(), a.end(), g) != a.end()) first = i;
    }
    if (first == lows.size()) continue;
    for (std::size_t i = 0; i <= first; ++i) {
      LowTransition t = lows[i];
      t.goal = g;
      t.reward = intrinsic_reward(i == first, static_cast<int>(i) + 1, T_M, beta);
      t.done = i == first;
      out.push_back(std::move(t));
    }
  }
  return out;
}

MlpSpec low_network_spec(const EnvInfo& info, const LearnerConfig& cfg) {
  MlpSpec spec;
  spec.layer_sizes.push_back(static_cast<std::size_t>(info.obs_dim + info.subgoal_count));
  spec.layer_sizes.insert(spec.layer_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  spec.layer_sizes.push_back(static_cast<std::size_t>(info.action_count));
  spec.hidden_activation = cfg.activation;
  spec.output_head = OutputHead::linear;
  spec.init = cfg.init;
  return spec;
}

MlpSpec high_network_spec(const EnvInfo& info, const LearnerConfig& cfg) {
  MlpSpec spec;
  spec.layer_sizes.push_back(static_cast<std::size_t>(info.obs_dim));
  spec.layer_sizes.insert(spec.layer_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  spec.layer_sizes.push_back(static_cast<std::size_t>(info.subgoal_count));
  spec.hidden_activation = cfg.activation;
  spec.output_head = OutputHead::linear;
  spec.init = cfg.init;
  return spec;
}

}  // namespace gmah
