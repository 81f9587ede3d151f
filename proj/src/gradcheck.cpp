#include "gmah/gradcheck.hpp"

#include <algorithm>

#include "gmah/a2c.hpp"
#include "gmah/adaptive.hpp"
#include "gmah/mixer.hpp"
#include "gmah/mlp.hpp"

namespace gmah {

namespace {

MlpSpec net(std::vector<std::size_t> sizes, Activation act, OutputHead head = OutputHead::linear) {
  MlpSpec s;
  s.layer_sizes = std::move(sizes);
  s.hidden_activation = act;
  s.output_head = head;
  return s;
}

std::vector<double> uniform_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform();
  return v;
}

template <typename Loss>
double sweep(ParameterSet& params, const GradientRecord& analytic, Loss loss, double h) {
  double worst = 0.0;
  for (auto& [name, tensor] : params) {
    const auto& grad = analytic.at(name).values;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor.values[i];
      tensor.values[i] = saved + h;
      const double plus = loss();
      tensor.values[i] = saved - h;
      const double minus = loss();
      tensor.values[i] = saved;
      worst = std::max(worst, relative_error(grad[i], (plus - minus) / (2.0 * h)));
    }
  }
  return worst;
}

double value_head_check(Rng& rng, int trials) {
  const MlpSpec spec = net({12, 16, 16, 1}, Activation::tanh);
  ParameterSet p = init_params(spec, rng);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<A2cSample> batch(4);
    for (auto& s : batch) {
      s.obs = uniform_vec(rng, 12);
      s.ret = rng.normal();
    }
    GradientRecord g, scratch;
    a2c_value_loss_and_grads(spec, p, batch, g);
    worst = std::max(worst, sweep(p, g, [&] { return a2c_value_loss_and_grads(spec, p, batch, scratch); }, 1e-5));
  }
  return worst;
}

double policy_loss_check(Rng& rng, int trials) {
  const MlpSpec spec = net({12, 16, 16, 5}, Activation::tanh, OutputHead::softmax);
  ParameterSet p = init_params(spec, rng);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<A2cSample> batch(4);
    for (auto& s : batch) {
      s.obs = uniform_vec(rng, 12);
      s.action = static_cast<int>(rng.below(5));
      s.advantage = rng.normal();
    }
    GradientRecord g, scratch;
    a2c_policy_loss_and_grads(spec, p, batch, 0.01, g);
    worst = std::max(worst, sweep(p, g, [&] { return a2c_policy_loss_and_grads(spec, p, batch, 0.01, scratch); }, 1e-5));
  }
  return worst;
}

// Joint TD loss with the mixer held fixed, differentiated into the shared
// high-level network through Q_tot.
double joint_td_check(Rng& rng, int trials) {
  MixerSpec ms;
  ms.n_agents = 3;
  ms.state_dim = 6;
  ms.hidden_dim = 8;
  ms.hyper_hidden = 10;
  const ParameterSet mp = init_mixer_params(ms, rng);
  const MlpSpec hs = net({9, 12, 4}, Activation::tanh);
  ParameterSet hp = init_params(hs, rng);
  const ParameterSet ht = init_params(hs, rng);
  const std::vector<const ParameterSet*> params(3, &hp), targets(3, &ht);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<JointRecord> batch(4);
    for (auto& r : batch) {
      for (int i = 0; i < 3; ++i) {
        r.obs.push_back(uniform_vec(rng, 9));
        r.next_obs.push_back(uniform_vec(rng, 9));
        r.goals.push_back(static_cast<int>(rng.below(4)));
      }
      r.state = uniform_vec(rng, 6);
      r.next_state = uniform_vec(rng, 6);
      r.reward = rng.normal();
      r.done = rng.bernoulli(0.25);
    }
    const MixTdResult res = mix_td_loss_and_grads(ms, mp, mp, hs, params, targets, batch, 0.99);
    GradientRecord total = res.high_grads[0];
    for (std::size_t i = 1; i < res.high_grads.size(); ++i)
      for (auto& [name, tensor] : total)
        for (std::size_t k = 0; k < tensor.size(); ++k) tensor.values[k] += res.high_grads[i].at(name).values[k];
    worst = std::max(worst, sweep(hp, total, [&] {
      return mix_td_loss_and_grads(ms, mp, mp, hs, params, targets, batch, 0.99).loss;
    }, 1e-5));
  }
  return worst;
}

}  // namespace

std::vector<GradcheckResult> gradient_integrity(const std::vector<std::uint64_t>& seeds, int trials) {
  std::vector<GradcheckResult> out;
  for (std::uint64_t seed : seeds) {
    Rng root(seed, "gradcheck");
    auto add = [&](const std::string& family, double err) { out.push_back({family, seed, err}); };
    {
      Rng r = root.derive("q_relu");
      const MlpSpec s = net({20, 24, 24, 7}, Activation::relu);
      add("q_network_relu", gradient_check(s, init_params(s, r), trials, r));
    }
    {
      Rng r = root.derive("q_tanh");
      const MlpSpec s = net({20, 24, 24, 4}, Activation::tanh);
      add("q_network_tanh", gradient_check(s, init_params(s, r), trials, r));
    }
    {
      Rng r = root.derive("policy_head");
      const MlpSpec s = net({20, 24, 6}, Activation::relu, OutputHead::softmax);
      add("policy_softmax", gradient_check(s, init_params(s, r), trials, r));
    }
    {
      Rng r = root.derive("policy_loss");
      add("a2c_policy_loss", policy_loss_check(r, trials));
    }
    {
      Rng r = root.derive("value_loss");
      add("a2c_value_loss", value_head_check(r, trials));
    }
    {
      Rng r = root.derive("autoencoder");
      const AutoEncoder ae = AutoEncoder::create(15, 6, {12}, r);
      add("autoencoder_and_reward_head", ae_gradient_check(ae, trials, r));
    }
    {
      Rng r = root.derive("mixer");
      MixerSpec ms;
      ms.n_agents = 3;
      ms.state_dim = 8;
      ms.hidden_dim = 8;
      ms.hyper_hidden = 12;
      add("hypernetwork_mixer", mixer_gradient_check(ms, init_mixer_params(ms, r), trials, r));
    }
    {
      Rng r = root.derive("joint_td");
      add("joint_td_into_high", joint_td_check(r, trials));
    }
  }
  return out;
}

}  // namespace gmah
