#pragma once

#include <span>
#include <vector>

#include "gmah/env.hpp"
#include "gmah/mlp.hpp"
#include "gmah/optim.hpp"
#include "gmah/rng.hpp"

namespace gmah {

struct A2cConfig {
  std::vector<std::size_t> hidden{64, 64};
  double lr = 7e-4;
  int n_steps = 8;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double grad_clip = 0.5;
  double gamma = 0.99;

  void validate() const;
  bool operator==(const A2cConfig&) const = default;
};

struct A2cSample {
  std::vector<double> obs;
  int action = 0;
  double ret = 0.0;        // n-step bootstrapped return
  double advantage = 0.0;  // ret - V(obs) at collection time
};

struct A2cLosses {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // mean policy entropy over the batch (nats)
};

// Mean of (V(obs) - ret)^2 and its parameter gradient.
double a2c_value_loss_and_grads(const MlpSpec& spec, const ParameterSet& params,
                                const std::vector<A2cSample>& batch, GradientRecord& grads);
// Mean of -advantage * log pi(a|obs) - entropy_coef * H(pi(.|obs)) and its gradient.
double a2c_policy_loss_and_grads(const MlpSpec& spec, const ParameterSet& params,
                                 const std::vector<A2cSample>& batch, double entropy_coef,
                                 GradientRecord& grads, double* mean_entropy = nullptr);

// Discounted n-step returns over a trajectory chunk, bootstrapped from `bootstrap`
// unless the chunk ended with done.
std::vector<double> n_step_returns(std::span<const double> rewards, std::span<const bool> dones,
                                   double bootstrap, double gamma);

// Separate policy (softmax head) and value networks, no goal input.
class A2cAgent {
 public:
  A2cAgent() = default;
  A2cAgent(const EnvInfo& info, const A2cConfig& cfg, Rng& rng);
  A2cAgent(MlpSpec policy_spec, ParameterSet policy, MlpSpec value_spec, ParameterSet value, A2cConfig cfg);

  std::vector<double> policy(std::span<const double> obs) const;
  double value(std::span<const double> obs) const;
  int act(std::span<const double> obs, bool greedy, Rng& rng) const;
  A2cLosses update(const std::vector<A2cSample>& batch);

  const MlpSpec& policy_spec() const { return policy_spec_; }
  const MlpSpec& value_spec() const { return value_spec_; }
  const ParameterSet& policy_params() const { return policy_; }
  const ParameterSet& value_params() const { return value_; }
  const A2cConfig& config() const { return cfg_; }

 private:
  A2cConfig cfg_;
  MlpSpec policy_spec_;
  MlpSpec value_spec_;
  ParameterSet policy_;
  ParameterSet value_;
  Adam policy_opt_;
  Adam value_opt_;
};

}  // namespace gmah
