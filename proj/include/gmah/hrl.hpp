#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmah/env.hpp"
#include "gmah/error.hpp"
#include "gmah/mlp.hpp"
#include "gmah/optim.hpp"
#include "gmah/rng.hpp"

namespace gmah {

struct LowTransition {
  std::vector<double> obs;
  int action = 0;
  double reward = 0.0;  // intrinsic
  int goal = 0;
  std::vector<double> next_obs;
  bool done = false;

  bool operator==(const LowTransition&) const = default;
};

struct HighTransition {
  std::vector<double> obs;
  int goal = 0;
  double summed_reward = 0.0;
  std::vector<double> next_obs;
  int segment_len = 1;
  bool done = false;

  bool operator==(const HighTransition&) const = default;
};

// What the acting agent achieved on one low-level step of a segment.
struct AchievedStep {
  std::vector<int> achieved;
  bool env_done = false;

  bool operator==(const AchievedStep&) const = default;
};

// One synchronized decision epoch of all agents, consumed by the goal mixer.
struct JointRecord {
  std::vector<std::vector<double>> obs;
  std::vector<int> goals;
  double reward = 0.0;  // summed over agents and steps of the epoch
  std::vector<double> state;
  std::vector<double> next_state;
  std::vector<std::vector<double>> next_obs;
  bool done = false;
  int length = 0;
};

nlohmann::json to_json(const LowTransition& t);
nlohmann::json to_json(const HighTransition& t);
LowTransition low_transition_from_json(const nlohmann::json& j);
HighTransition high_transition_from_json(const nlohmann::json& j);

// Bounded FIFO ring with uniform sampling (with replacement).
template <class T>
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, Rng rng) : capacity_(capacity), rng_(rng) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[next_] = std::move(item);
    }
    next_ = (next_ + 1) % capacity_;
    ++pushed_;
  }

  std::vector<T> sample(std::size_t n) {
    if (items_.empty()) throw LifecycleError("sampling from an empty replay buffer");
    std::vector<T> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(items_[rng_.below(items_.size())]);
    return out;
  }

  // Oldest first.
  std::vector<T> ordered() const {
    if (items_.size() < capacity_) return items_;
    std::vector<T> out(items_.begin() + static_cast<std::ptrdiff_t>(next_), items_.end());
    out.insert(out.end(), items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(next_));
    return out;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t pushed() const { return pushed_; }
  bool empty() const { return items_.empty(); }

 private:
  std::size_t capacity_;
  Rng rng_;
  std::vector<T> items_;
  std::size_t next_ = 0;
  std::uint64_t pushed_ = 0;
};

// Debug dump: <dir>/<name>.manifest.json plus <dir>/<name>.jsonl, oldest first.
template <class T>
void write_buffer_snapshot(const std::filesystem::path& dir, const std::string& name,
                           const ReplayBuffer<T>& buffer);

// Linear interpolation from start to end over `steps`, then held at end.
struct Schedule {
  double start = 1.0;
  double end = 0.05;
  long steps = 10000;

  double at(long step) const;
  bool operator==(const Schedule&) const = default;
};

struct HrlConfig {
  int c = 16;              // maximum goal interval
  double beta_low = 0.5;   // intrinsic reward decay
  double gamma = 0.99;     // high level, one discount per macro-step
  double gamma_low = 0.9;  // low level, per primitive step
  int T_M = 0;             // intrinsic clock horizon; 0 means c
  Schedule epsilon{1.0, 0.05, 50000};
  Schedule temperature{1.0, 0.05, 50000};
  bool her = true;

  int horizon() const { return T_M > 0 ? T_M : c; }
  void validate() const;
  bool operator==(const HrlConfig&) const = default;
};

struct LearnerConfig {
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::relu;
  InitScheme init = InitScheme::orthogonal;
  double lr = 5e-4;
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 50000;
  int target_refresh = 200;
  double grad_clip = 10.0;
  long learn_start = 1000;
  int train_every = 4;
  bool double_q = true;

  void validate() const;
  bool operator==(const LearnerConfig&) const = default;
};

// achieved -> 1 - beta * t / T_M, else 0. DomainError unless 0 <= t <= T_M.
double intrinsic_reward(bool achieved, int t, int T_M, double beta);

// obs followed by a one-hot block of length n_goals.
std::vector<double> build_low_input(std::span<const double> obs, int goal, int n_goals);

// Lowest index among the maxima.
int argmax(std::span<const double> values);

enum class SelectMode { greedy, sample };

// Q values -> greedy argmax, or a draw from softmax(q / temperature).
int select_from_values(std::span<const double> q, SelectMode mode, double temperature, Rng& rng);
int select_subgoal(const MlpSpec& spec, const ParameterSet& high_params, std::span<const double> obs,
                   SelectMode mode, double temperature, Rng& rng);

int epsilon_greedy(std::span<const double> q, double epsilon, Rng& rng);
int low_action(const MlpSpec& spec, const ParameterSet& low_params, std::span<const double> obs,
               int goal, int n_goals, double epsilon, Rng& rng);

// Online network with a periodically refreshed target copy and its own Adam.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(MlpSpec spec, ParameterSet params, AdamConfig opt, int target_refresh);
  QNetwork(const MlpSpec& spec, Rng& rng, AdamConfig opt, int target_refresh);

  std::vector<double> q(std::span<const double> input) const;
  std::vector<double> q_target(std::span<const double> input) const;

  // Adam step with clipping; refreshes the target every target_refresh updates.
  void apply(GradientRecord grads, double grad_clip);
  void sync_target() { target_ = params_; }

  const MlpSpec& spec() const { return spec_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& target_params() const { return target_; }
  long updates() const { return updates_; }
  int target_refresh() const { return target_refresh_; }

 private:
  MlpSpec spec_;
  ParameterSet params_;
  ParameterSet target_;
  Adam opt_;
  int target_refresh_ = 200;
  long updates_ = 0;
};

// Generic one-step TD sample: y = reward + discount * max_a' Q_target(next_input, a') * (1 - done).
// With double_q the next action is the online argmax, valued by the target.
struct TdSample {
  std::vector<double> input;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_input;
  bool done = false;
};

struct TdResult {
  double loss = 0.0;  // mean squared TD error
  GradientRecord grads;
  std::vector<double> targets;
};

TdResult td_loss_and_grads(const MlpSpec& spec, const ParameterSet& params,
                           const ParameterSet& target_params, const std::vector<TdSample>& batch,
                           double discount, bool double_q = false);

std::vector<TdSample> low_td_samples(const std::vector<LowTransition>& batch, int n_goals);
std::vector<TdSample> high_td_samples(const std::vector<HighTransition>& batch);

// One optimizer step; returns the pre-update loss.
double train_low_batch(QNetwork& low, const std::vector<LowTransition>& batch, int n_goals,
                       double gamma, double grad_clip, bool double_q = false);
// One discount per macro-step (semi-MDP).
double train_high_batch(QNetwork& high, const std::vector<HighTransition>& batch, double gamma,
                        double grad_clip, bool double_q = false);

// ---- segment collection ----

struct Segment {
  int agent = 0;
  int goal = 0;
  std::vector<double> start_obs;
  std::vector<double> end_obs;
  std::vector<LowTransition> lows;
  std::vector<AchievedStep> achieved_log;
  double extrinsic = 0.0;
  bool achieved = false;
  bool proactive = false;  // closed early by the adaptive trigger
  bool preempted = false;  // closed because another agent's segment ended (synchronized mode)
  bool done = false;       // episode ended

  int length() const { return static_cast<int>(lows.size()); }
  HighTransition high() const;
};

struct GoalRequest {
  int agent = 0;
  std::span<const double> obs;
  int previous_goal = -1;  // -1 at episode start
  bool previous_achieved = false;
};

struct RolloutStep {
  int agent = 0;
  int action = 0;
  int goal = 0;
  int segment_step = 0;  // 1-based position in the segment
  double intrinsic = 0.0;
  StepResult result;
  std::vector<Segment> closed;
  std::optional<JointRecord> joint;
};

// Drives one environment with a per-agent goal / action policy pair. A
// segment closes when its goal fires, after c steps, when the episode ends,
// or when the trigger asks for a proactive update. In synchronized mode all
// agents share decision epochs: the first segment to close closes them all
// and every agent receives a new goal at once.
class HierarchicalRollout {
 public:
  using GoalPolicy = std::function<int(const GoalRequest&)>;
  using ActionPolicy = std::function<int(int agent, std::span<const double> obs, int goal)>;
  using Trigger = std::function<bool(int agent, std::span<const double> before,
                                     std::span<const double> after, int goal)>;

  HierarchicalRollout(Environment& env, HrlConfig cfg, GoalPolicy goal_policy,
                      ActionPolicy action_policy, Trigger trigger = nullptr, bool synchronized = false);

  void reset(std::uint64_t seed);
  RolloutStep step();

  bool done() const { return env_.done(); }
  bool started() const { return env_.started(); }
  Environment& env() { return env_; }
  int goal(int agent) const { return open_[static_cast<std::size_t>(agent)].goal; }
  const Segment& open_segment(int agent) const { return open_[static_cast<std::size_t>(agent)]; }
  // Team return (sum over agents) of the current episode so far.
  double episode_return() const { return episode_return_; }
  int episode_length() const { return episode_length_; }
  std::uint64_t proactive_updates() const { return proactive_updates_; }

 private:
  void issue_goal(int agent, int previous_goal, bool previous_achieved);
  void open_epoch();

  Environment& env_;
  HrlConfig cfg_;
  GoalPolicy goal_policy_;
  ActionPolicy action_policy_;
  Trigger trigger_;
  bool synchronized_;
  int n_agents_ = 1;
  int n_goals_ = 1;
  std::vector<Segment> open_;
  double episode_return_ = 0.0;
  int episode_length_ = 0;
  std::uint64_t proactive_updates_ = 0;
  JointRecord epoch_;
};

// Steps the rollout until a segment of `agent` closes and returns it.
// Segments of other agents closed meanwhile are appended to `others` when given.
Segment collect_segment(HierarchicalRollout& rollout, int agent,
                        std::vector<Segment>* others = nullptr);

// For every subgoal other than the issued one that fired during the segment,
// a copy of the transitions up to and including its first firing step, with
// the goal replaced and the reward recomputed at that step (done there).
std::vector<LowTransition> her_relabel(const std::vector<LowTransition>& lows,
                                       const std::vector<AchievedStep>& achieved_log,
                                       int issued_goal, int n_goals, int T_M, double beta);

// Input layout expected by a low-level network for an environment.
MlpSpec low_network_spec(const EnvInfo& info, const LearnerConfig& cfg);
MlpSpec high_network_spec(const EnvInfo& info, const LearnerConfig& cfg);

}  // namespace gmah
