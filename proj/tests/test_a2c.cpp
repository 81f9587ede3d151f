#include <doctest.h>

#include <cmath>

#include "gmah/a2c.hpp"
#include "gmah/error.hpp"

using namespace gmah;

namespace {

EnvInfo toy_info(int obs, int actions) {
  EnvInfo info;
  info.name = "toy";
  info.obs_dim = obs;
  info.action_count = actions;
  return info;
}

std::vector<A2cSample> random_samples(Rng& rng, std::size_t n, std::size_t obs, int actions) {
  std::vector<A2cSample> b(n);
  for (auto& s : b) {
    s.obs.resize(obs);
    for (double& v : s.obs) v = rng.uniform();
    s.action = static_cast<int>(rng.below(static_cast<std::uint64_t>(actions)));
    s.ret = rng.normal();
    s.advantage = rng.normal();
  }
  return b;
}

template <typename Loss>
double worst_fd_error(ParameterSet& params, const GradientRecord& grads, Loss loss) {
  constexpr double h = 1e-6;
  double worst = 0.0;
  for (auto& [name, tensor] : params) {
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double saved = tensor.values[i];
      tensor.values[i] = saved + h;
      const double plus = loss();
      tensor.values[i] = saved - h;
      const double minus = loss();
      tensor.values[i] = saved;
      worst = std::max(worst, relative_error(grads.at(name).values[i], (plus - minus) / (2 * h)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("n-step returns match a forward re-evaluation") {
  Rng rng(1, "returns");
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> r(n);
    auto dones = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = rng.normal();
      dones[i] = rng.bernoulli(0.2);
    }
    const double boot = rng.normal(), gamma = 0.9;
    const auto got = n_step_returns(r, std::span<const bool>(dones.get(), n), boot, gamma);
    for (std::size_t i = 0; i < n; ++i) {
      double g = 0.0, disc = 1.0;
      bool ended = false;
      for (std::size_t k = i; k < n; ++k) {
        g += disc * r[k];
        disc *= gamma;
        if (dones[k]) {
          ended = true;
          break;
        }
      }
      if (!ended) g += disc * boot;
      CHECK(got[i] == doctest::Approx(g).epsilon(1e-12));
    }
  }
  const std::vector<double> r{1.0, 0.0};
  const bool d[] = {false, false};
  const auto g = n_step_returns(r, d, 2.0, 0.5);
  CHECK(g[1] == 1.0);
  CHECK(g[0] == 1.5);
  const bool d1[] = {false};
  CHECK_THROWS_AS(n_step_returns(r, d1, 0.0, 0.5), DimensionError);
}

TEST_CASE("value loss gradient agrees with finite differences") {
  Rng rng(2, "value");
  A2cConfig cfg;
  cfg.hidden = {7, 5};
  A2cAgent agent(toy_info(4, 3), cfg, rng);
  ParameterSet params = agent.value_params();
  const auto batch = random_samples(rng, 6, 4, 3);
  GradientRecord g;
  const double loss = a2c_value_loss_and_grads(agent.value_spec(), params, batch, g);
  double ref = 0.0;
  for (const auto& s : batch) {
    const double v = mlp_forward(agent.value_spec(), params, s.obs)[0];
    ref += (v - s.ret) * (v - s.ret) / 6.0;
  }
  CHECK(loss == doctest::Approx(ref).epsilon(1e-12));
  GradientRecord scratch;
  CHECK(worst_fd_error(params, g, [&] {
          return a2c_value_loss_and_grads(agent.value_spec(), params, batch, scratch);
        }) < 1e-4);
}

TEST_CASE("policy loss gradient agrees with finite differences") {
  Rng rng(3, "policy");
  A2cConfig cfg;
  cfg.hidden = {6};
  A2cAgent agent(toy_info(4, 3), cfg, rng);
  ParameterSet params = agent.policy_params();
  for (auto& [name, t] : params)
    for (double& v : t.values) v += 0.3 * rng.normal();
  const auto batch = random_samples(rng, 5, 4, 3);
  GradientRecord g;
  double entropy = 0.0;
  a2c_policy_loss_and_grads(agent.policy_spec(), params, batch, 0.05, g, &entropy);
  CHECK(entropy > 0.0);
  CHECK(entropy <= std::log(3.0) + 1e-12);
  GradientRecord scratch;
  CHECK(worst_fd_error(params, g, [&] {
          return a2c_policy_loss_and_grads(agent.policy_spec(), params, batch, 0.05, scratch);
        }) < 1e-4);
}

TEST_CASE("policy updates on a contextual bandit lower the entropy and find the best arm") {
  Rng rng(4, "bandit");
  A2cConfig cfg;
  cfg.hidden = {16};
  cfg.lr = 5e-3;
  A2cAgent agent(toy_info(2, 3), cfg, rng);
  // The rewarded arm is 0 for context [1,0] and 2 for [0,1].
  auto reward = [](int ctx, int a) { return (ctx == 0 && a == 0) || (ctx == 1 && a == 2) ? 1.0 : 0.0; };
  std::vector<double> entropy;
  for (int it = 0; it < 400; ++it) {
    std::vector<A2cSample> batch(16);
    for (auto& s : batch) {
      const int ctx = static_cast<int>(rng.below(2));
      s.obs = {ctx == 0 ? 1.0 : 0.0, ctx == 1 ? 1.0 : 0.0};
      s.action = agent.act(s.obs, false, rng);
      s.ret = reward(ctx, s.action);
      s.advantage = s.ret - agent.value(s.obs);
    }
    entropy.push_back(agent.update(batch).entropy);
  }
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 40; ++i) {
    first += entropy[i];
    last += entropy[entropy.size() - 1 - i];
  }
  CHECK(last < 0.5 * first);
  CHECK(agent.act(std::vector<double>{1, 0}, true, rng) == 0);
  CHECK(agent.act(std::vector<double>{0, 1}, true, rng) == 2);
  const auto p = agent.policy(std::vector<double>{1, 0});
  CHECK(p.size() == 3);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
}

TEST_CASE("a2c config validation") {
  A2cConfig c;
  c.n_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
