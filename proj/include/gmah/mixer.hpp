#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gmah/checkpoint.hpp"
#include "gmah/hrl.hpp"
#include "gmah/optim.hpp"
#include "gmah/rng.hpp"

namespace gmah {

struct MixerSpec {
  std::size_t n_agents = 3;
  std::size_t state_dim = 100;
  std::size_t hidden_dim = 32;
  std::size_t hyper_hidden = 64;
  // false realizes W1 and W2 without the absolute value (negative controls only).
  bool monotone = true;

  void validate() const;
  bool operator==(const MixerSpec&) const = default;
};

// Realized mixing weights for one state. W1 is n_agents x hidden_dim, row-major.
struct HyperWeights {
  std::vector<double> W1;
  std::vector<double> b1;
  std::vector<double> W2;
  double b2 = 0.0;
};

// Parameters: a shared trunk "hyper" (state -> hyper_hidden, ReLU) feeding
// four linear heads "w1", "b1", "w2", "b2" (each with .weight / .bias).
ParameterSet init_mixer_params(const MixerSpec& spec, Rng& rng);
void validate_mixer_params(const MixerSpec& spec, const ParameterSet& params);

HyperWeights hyper_weights(const MixerSpec& spec, const ParameterSet& params, std::span<const double> state);

// Q_tot = W2 . elu(W1^T q + b1) + b2.
double mix(const MixerSpec& spec, const ParameterSet& params, std::span<const double> q,
           std::span<const double> state);

struct MixGradients {
  std::vector<double> dq;
  GradientRecord params;
};

// Gradient of upstream * Q_tot with respect to q and to every mixer parameter.
// Accumulates into grads.params when it is already populated.
double mix_backward(const MixerSpec& spec, const ParameterSet& params, std::span<const double> q,
                    std::span<const double> state, double upstream, MixGradients& grads);

// Per-agent argmax (lowest index on ties) and the mixed value of that tuple.
std::pair<std::vector<int>, double> joint_max(const MixerSpec& spec, const ParameterSet& params,
                                              const std::vector<std::vector<double>>& tables,
                                              std::span<const double> state);

// Minimum over random states / q of (Q_tot(q + delta e_i) - Q_tot(q)) / delta, delta = 1e-4.
double monotonicity_probe(const MixerSpec& spec, const ParameterSet& params, int trials, Rng& rng);

// Worst relative error of mix_backward (parameters and q) against central differences.
double mixer_gradient_check(const MixerSpec& spec, const ParameterSet& params, int trials, Rng& rng);

class GoalMixer {
 public:
  GoalMixer() = default;
  GoalMixer(MixerSpec spec, ParameterSet params, AdamConfig opt = {}, int target_refresh = 200);
  GoalMixer(const MixerSpec& spec, Rng& rng, AdamConfig opt = {}, int target_refresh = 200);

  double mix(std::span<const double> q, std::span<const double> state) const;
  HyperWeights hyper_weights(std::span<const double> state) const;
  void apply(GradientRecord grads, double grad_clip);

  const MixerSpec& spec() const { return spec_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& target_params() const { return target_; }
  long updates() const { return updates_; }
  int target_refresh() const { return target_refresh_; }
  void sync_target() { target_ = params_; }

  Checkpoint to_checkpoint() const;
  static GoalMixer from_checkpoint(const Checkpoint& ckpt, AdamConfig opt = {}, int target_refresh = 200);

 private:
  MixerSpec spec_;
  ParameterSet params_;
  ParameterSet target_;
  Adam opt_;
  int target_refresh_ = 200;
  long updates_ = 0;
};

struct MixTdResult {
  double loss = 0.0;
  GradientRecord mixer_grads;
  std::vector<GradientRecord> high_grads;  // one per agent
  std::vector<double> targets;
};

// Joint goal TD loss: mean of (R + gamma * Q_tot_target(max-goal values | s') * (1 - done)
// - Q_tot(Q_i(o_i, g_i) | s))^2 with gradients into the mixer and each agent's
// high-level network. Agents may share one network by passing the same pointers.
// With double_q the next goal tuple is the joint argmax under the online networks
// and is valued by the target networks.
MixTdResult mix_td_loss_and_grads(const MixerSpec& spec, const ParameterSet& mixer_params,
                                  const ParameterSet& mixer_target, const MlpSpec& high_spec,
                                  const std::vector<const ParameterSet*>& high_params,
                                  const std::vector<const ParameterSet*>& high_targets,
                                  const std::vector<JointRecord>& batch, double gamma, bool double_q = false);

// One optimizer step on the mixer and every distinct high-level network.
// Asserts the realized weights stay non-negative on the batch states.
double mix_td_update(GoalMixer& mixer, const std::vector<QNetwork*>& highs,
                     const std::vector<JointRecord>& batch, double gamma, double grad_clip,
                     bool double_q = false);

}  // namespace gmah
