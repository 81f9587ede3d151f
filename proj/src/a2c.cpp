#include "gmah/a2c.hpp"

#include <cmath>

#include "gmah/error.hpp"

namespace gmah {

void A2cConfig::validate() const {
  if (hidden.empty()) throw ConfigError("invalid value for 'a2c.hidden': needs at least one layer");
  if (!(lr > 0.0)) throw ConfigError("invalid value for 'a2c.lr': must be positive");
  if (n_steps < 1) throw ConfigError("invalid value for 'a2c.n_steps': must be positive");
  if (!(entropy_coef >= 0.0)) throw ConfigError("invalid value for 'a2c.entropy_coef': must be nonnegative");
  if (!(value_coef > 0.0)) throw ConfigError("invalid value for 'a2c.value_coef': must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("invalid value for 'a2c.grad_clip': must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("invalid value for 'a2c.gamma': must lie in [0, 1)");
}

double a2c_value_loss_and_grads(const MlpSpec& spec, const ParameterSet& params,
                                const std::vector<A2cSample>& batch, GradientRecord& grads) {
  if (batch.empty()) throw DomainError("A2C batch is empty");
  grads = zeros_like(params);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  MlpTrace trace;
  double loss = 0.0;
  for (const auto& s : batch) {
    const double v = mlp_forward(spec, params, s.obs, trace)[0];
    const double err = v - s.ret;
    loss += err * err * inv_b;
    const double up = 2.0 * err * inv_b;
    backward_into(spec, params, trace, std::span<const double>(&up, 1), grads);
  }
  return loss;
}

double a2c_policy_loss_and_grads(const MlpSpec& spec, const ParameterSet& params,
                                 const std::vector<A2cSample>& batch, double entropy_coef,
                                 GradientRecord& grads, double* mean_entropy) {
  if (batch.empty()) throw DomainError("A2C batch is empty");
  grads = zeros_like(params);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  MlpTrace trace;
  double loss = 0.0, entropy = 0.0;
  std::vector<double> up(spec.output_size());
  for (const auto& s : batch) {
    const auto p = mlp_forward(spec, params, s.obs, trace);
    const auto a = static_cast<std::size_t>(s.action);
    const double pa = std::max(p.at(a), 1e-300);
    double h = 0.0;
    for (double v : p)
      if (v > 0.0) h -= v * std::log(v);
    loss += (-s.advantage * std::log(pa) - entropy_coef * h) * inv_b;
    entropy += h * inv_b;
    // d/dp of -A log p_a - c H, with dH/dp_k = -(log p_k + 1).
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double logp = p[k] > 0.0 ? std::log(p[k]) : -700.0;
      up[k] = entropy_coef * (logp + 1.0) * inv_b;
    }
    up[a] += -s.advantage / pa * inv_b;
    backward_into(spec, params, trace, up, grads);
  }
  if (mean_entropy) *mean_entropy = entropy;
  return loss;
}

std::vector<double> n_step_returns(std::span<const double> rewards, std::span<const bool> dones,
                                   double bootstrap, double gamma) {
  if (rewards.size() != dones.size()) throw DimensionError("rewards and done flags differ in length");
  std::vector<double> out(rewards.size());
  double g = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (dones[i]) g = 0.0;
    g = rewards[i] + gamma * g;
    out[i] = g;
  }
  return out;
}

A2cAgent::A2cAgent(const EnvInfo& info, const A2cConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  policy_spec_.layer_sizes.push_back(static_cast<std::size_t>(info.obs_dim));
  policy_spec_.layer_sizes.insert(policy_spec_.layer_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  value_spec_ = policy_spec_;
  policy_spec_.layer_sizes.push_back(static_cast<std::size_t>(info.action_count));
  policy_spec_.output_head = OutputHead::softmax;
  value_spec_.layer_sizes.push_back(1);
  Rng pr = rng.derive("policy"), vr = rng.derive("value");
  // A small output gain starts the policy near uniform.
  policy_ = init_params(policy_spec_, pr, 0.01);
  value_ = init_params(value_spec_, vr);
  policy_opt_ = Adam(AdamConfig{cfg_.lr});
  value_opt_ = Adam(AdamConfig{cfg_.lr});
}

A2cAgent::A2cAgent(MlpSpec policy_spec, ParameterSet policy, MlpSpec value_spec, ParameterSet value,
                   A2cConfig cfg)
    : cfg_(std::move(cfg)),
      policy_spec_(std::move(policy_spec)),
      value_spec_(std::move(value_spec)),
      policy_(std::move(policy)),
      value_(std::move(value)),
      policy_opt_(AdamConfig{cfg_.lr}),
      value_opt_(AdamConfig{cfg_.lr}) {
  validate_params(policy_spec_, policy_);
  validate_params(value_spec_, value_);
  if (policy_spec_.output_head != OutputHead::softmax) throw ConfigError("A2C policy needs a softmax head");
  if (value_spec_.output_size() != 1) throw ConfigError("A2C value network needs one output");
}

std::vector<double> A2cAgent::policy(std::span<const double> obs) const {
  return mlp_forward(policy_spec_, policy_, obs);
}

double A2cAgent::value(std::span<const double> obs) const { return mlp_forward(value_spec_, value_, obs)[0]; }

int A2cAgent::act(std::span<const double> obs, bool greedy, Rng& rng) const {
  const auto p = policy(obs);
  if (greedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
      if (p[i] > p[best]) best = i;
    return static_cast<int>(best);
  }
  return static_cast<int>(rng.categorical(p));
}

A2cLosses A2cAgent::update(const std::vector<A2cSample>& batch) {
  A2cLosses out;
  GradientRecord pg, vg;
  out.policy = a2c_policy_loss_and_grads(policy_spec_, policy_, batch, cfg_.entropy_coef, pg, &out.entropy);
  out.value = a2c_value_loss_and_grads(value_spec_, value_, batch, vg);
  scale(vg, cfg_.value_coef);
  clip_global_norm(pg, cfg_.grad_clip);
  clip_global_norm(vg, cfg_.grad_clip);
  policy_opt_.step(policy_, pg);
  value_opt_.step(value_, vg);
  return out;
}

}  // namespace gmah
