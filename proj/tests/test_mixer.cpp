#include <doctest.h>

#include <cmath>

#include "gmah/error.hpp"
#include "gmah/mixer.hpp"

using namespace gmah;

namespace {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

// state_dim = hyper_hidden = 1 with a unit trunk, so each head's bias is its realized output.
struct HandMixer {
  MixerSpec spec;
  ParameterSet params;
  std::vector<double> state{1.0};

  HandMixer(std::size_t n, std::size_t hidden) {
    spec.n_agents = n;
    spec.state_dim = 1;
    spec.hidden_dim = hidden;
    spec.hyper_hidden = 1;
    Rng rng(1, "hand");
    params = init_mixer_params(spec, rng);
    for (auto& [name, t] : params) std::fill(t.values.begin(), t.values.end(), 0.0);
    params.at("hyper.weight").values[0] = 1.0;
  }
  std::vector<double>& head(const std::string& h) { return params.at(h + ".bias").values; }
};

double reference_mix(const std::vector<double>& W1, const std::vector<double>& b1, const std::vector<double>& W2,
                     double b2, const std::vector<double>& q, std::size_t hidden) {
  double out = b2;
  for (std::size_t j = 0; j < hidden; ++j) {
    double z = b1[j];
    for (std::size_t i = 0; i < q.size(); ++i) z += q[i] * W1[i * hidden + j];
    out += W2[j] * elu(z);
  }
  return out;
}

MixerSpec small_spec(std::size_t n = 3, std::size_t state_dim = 5) {
  MixerSpec s;
  s.n_agents = n;
  s.state_dim = state_dim;
  s.hidden_dim = 8;
  s.hyper_hidden = 12;
  return s;
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform();
  return v;
}

JointRecord random_record(Rng& rng, std::size_t n, std::size_t obs_dim, std::size_t state_dim, int goals) {
  JointRecord r;
  for (std::size_t i = 0; i < n; ++i) {
    r.obs.push_back(random_vec(rng, obs_dim));
    r.next_obs.push_back(random_vec(rng, obs_dim));
    r.goals.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(goals))));
  }
  r.state = random_vec(rng, state_dim);
  r.next_state = random_vec(rng, state_dim);
  r.reward = rng.uniform(-1.0, 1.0);
  r.done = rng.bernoulli(0.2);
  r.length = 4;
  return r;
}

}  // namespace

TEST_CASE("pass-through mixer evaluates by hand") {
  HandMixer m(2, 2);
  m.head("w1") = {1, 0, 0, 1};
  m.head("w2") = {1, 1};
  const std::vector<double> q{0.2, 0.3};
  CHECK(mix(m.spec, m.params, q, m.state) == doctest::Approx(0.5).epsilon(1e-12));
  // Negative inputs go through the exponential branch.
  const std::vector<double> qn{-0.5, 0.3};
  CHECK(mix(m.spec, m.params, qn, m.state) == doctest::Approx(std::expm1(-0.5) + 0.3));
  // Head outputs are realized through abs (W1, W2) and relu (b2).
  m.head("w1") = {-1, 0, 0, -1};
  m.head("w2") = {-1, 1};
  m.head("b2") = {-3.0};
  CHECK(mix(m.spec, m.params, q, m.state) == doctest::Approx(0.5));
  m.head("b2") = {0.25};
  m.head("b1") = {-1.0, 0.0};
  CHECK(mix(m.spec, m.params, q, m.state) == doctest::Approx(elu(-0.8) + 0.3 + 0.25));
}

TEST_CASE("zeroed hypernetwork mixes to zero") {
  HandMixer m(3, 4);
  m.params.at("hyper.weight").values[0] = 0.0;
  const std::vector<double> q{5.0, -2.0, 1.0};
  const HyperWeights w = hyper_weights(m.spec, m.params, m.state);
  for (double v : w.W1) CHECK(v == 0.0);
  for (double v : w.W2) CHECK(v == 0.0);
  CHECK(w.b2 == 0.0);
  CHECK(mix(m.spec, m.params, q, m.state) == 0.0);
}

TEST_CASE("mix matches the reference formula on realized weights") {
  Rng rng(2, "mix");
  const MixerSpec spec = small_spec();
  const ParameterSet p = init_mixer_params(spec, rng);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_vec(rng, spec.state_dim);
    std::vector<double> q(spec.n_agents);
    for (double& v : q) v = 2.0 * rng.normal();
    const HyperWeights w = hyper_weights(spec, p, s);
    CHECK(mix(spec, p, q, s) ==
          doctest::Approx(reference_mix(w.W1, w.b1, w.W2, w.b2, q, spec.hidden_dim)).epsilon(1e-12));
  }
}

TEST_CASE("realized weights are non-negative for every sampled state") {
  Rng rng(3, "mix");
  const MixerSpec spec = small_spec();
  for (int net = 0; net < 5; ++net) {
    const ParameterSet p = init_mixer_params(spec, rng);
    for (int t = 0; t < 200; ++t) {
      auto s = random_vec(rng, spec.state_dim);
      for (double& v : s) v = 4.0 * (v - 0.5);
      const HyperWeights w = hyper_weights(spec, p, s);
      CHECK(*std::min_element(w.W1.begin(), w.W1.end()) >= 0.0);
      CHECK(*std::min_element(w.W2.begin(), w.W2.end()) >= 0.0);
      CHECK(w.b2 >= 0.0);
    }
  }
}

TEST_CASE("raising one agent's value never lowers the mixed value") {
  Rng rng(4, "mix");
  const MixerSpec spec = small_spec();
  const ParameterSet p = init_mixer_params(spec, rng);
  for (int t = 0; t < 1000; ++t) {
    const auto s = random_vec(rng, spec.state_dim);
    std::vector<double> q(spec.n_agents);
    for (double& v : q) v = 2.0 * rng.normal();
    const double base = mix(spec, p, q, s);
    for (std::size_t i = 0; i < q.size(); ++i) {
      auto up = q;
      up[i] += 0.1;
      CHECK(mix(spec, p, up, s) >= base - 1e-12);
    }
  }
  CHECK(monotonicity_probe(spec, p, 200, rng) >= -1e-8);
}

TEST_CASE("negated weight is caught by the monotonicity probe") {
  HandMixer m(2, 2);
  m.spec.monotone = false;
  m.head("w1") = {1, 0, 0, -1};
  m.head("w2") = {1, 1};
  Rng rng(5, "probe");
  CHECK(monotonicity_probe(m.spec, m.params, 50, rng) < 0.0);
  m.spec.monotone = true;
  CHECK(monotonicity_probe(m.spec, m.params, 50, rng) >= -1e-8);
}

TEST_CASE("mixed value is symmetric under agent permutation for symmetric weights") {
  HandMixer m(3, 2);
  m.head("w1") = {0.5, 1.0, 0.5, 1.0, 0.5, 1.0};
  m.head("b1") = {-0.2, 0.1};
  m.head("w2") = {0.7, 1.3};
  const std::vector<double> q{0.4, -1.0, 2.0}, perm{2.0, 0.4, -1.0};
  CHECK(mix(m.spec, m.params, q, m.state) == doctest::Approx(mix(m.spec, m.params, perm, m.state)));
}

TEST_CASE("joint_max agrees with brute force over all 64 tuples") {
  Rng rng(6, "joint");
  const MixerSpec spec = small_spec(3, 4);
  const ParameterSet p = init_mixer_params(spec, rng);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::vector<double>> tables(3, std::vector<double>(4));
    for (auto& tab : tables)
      for (double& v : tab) v = rng.normal();
    const auto s = random_vec(rng, spec.state_dim);
    double best = -1e300;
    std::vector<int> best_tuple;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c) {
          const std::vector<double> q{tables[0][a], tables[1][b], tables[2][c]};
          const double v = mix(spec, p, q, s);
          if (v > best + 1e-12) {
            best = v;
            best_tuple = {a, b, c};
          }
        }
    const auto [tuple, value] = joint_max(spec, p, tables, s);
    CHECK(value == doctest::Approx(best).epsilon(1e-12));
    CHECK(tuple == best_tuple);

    // Adding a constant to one agent's table keeps the choice.
    auto shifted = tables;
    for (double& v : shifted[1]) v += 3.0;
    CHECK(joint_max(spec, p, shifted, s).first == tuple);
  }
}

TEST_CASE("joint_max breaks ties by lowest index") {
  Rng rng(7, "joint");
  const MixerSpec spec = small_spec(3, 4);
  const ParameterSet p = init_mixer_params(spec, rng);
  const std::vector<std::vector<double>> tables{{0.1, 0.5, 0.2, 0.0}, {1, 1, 1, 1}, {0, 2, 2, 1}};
  const auto [tuple, value] = joint_max(spec, p, tables, random_vec(rng, 4));
  CHECK(tuple == std::vector<int>{1, 0, 1});
  const std::vector<std::vector<double>> bad{{0.1, NAN, 0, 0}, {1, 1, 1, 1}, {0, 2, 2, 1}};
  CHECK_THROWS_AS(joint_max(spec, p, bad, random_vec(rng, 4)), NumericError);
}

TEST_CASE("mixer dimension errors") {
  Rng rng(8, "dims");
  const MixerSpec spec = small_spec();
  const ParameterSet p = init_mixer_params(spec, rng);
  CHECK_THROWS_AS(mix(spec, p, std::vector<double>{1, 2}, random_vec(rng, 5)), DimensionError);
  CHECK_THROWS_AS(mix(spec, p, std::vector<double>{1, 2, 3}, random_vec(rng, 4)), DimensionError);
  CHECK_THROWS_AS(hyper_weights(spec, p, random_vec(rng, 6)), DimensionError);
}

TEST_CASE("mixer gradients agree with finite differences") {
  Rng rng(9, "grad");
  const MixerSpec spec = small_spec();
  const ParameterSet p = init_mixer_params(spec, rng);
  CHECK(mixer_gradient_check(spec, p, 5, rng) < 1e-4);
}

TEST_CASE("joint TD targets and high-level gradients") {
  Rng rng(10, "td");
  const MixerSpec spec = small_spec(3, 5);
  const ParameterSet mp = init_mixer_params(spec, rng);
  MlpSpec hs;
  hs.layer_sizes = {6, 10, 4};
  hs.hidden_activation = Activation::tanh;
  ParameterSet hp = init_params(hs, rng);
  const ParameterSet ht = init_params(hs, rng);
  const std::vector<const ParameterSet*> params(3, &hp), targets(3, &ht);
  std::vector<JointRecord> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(random_record(rng, 3, 6, 5, 4));
  batch[0].done = true;
  batch[1].done = false;

  const MixTdResult r = mix_td_loss_and_grads(spec, mp, mp, hs, params, targets, batch, 0.9);
  CHECK(r.targets[0] == batch[0].reward);
  std::vector<std::vector<double>> tables;
  for (const auto& o : batch[1].next_obs) tables.push_back(mlp_forward(hs, ht, o));
  CHECK(r.targets[1] == doctest::Approx(batch[1].reward + 0.9 * joint_max(spec, mp, tables, batch[1].next_state).second));

  SUBCASE("gradient into the shared high-level network matches finite differences") {
    // Agents share hp, so the total gradient is the sum over agents.
    GradientRecord total = zeros_like(hp);
    for (const auto& g : r.high_grads)
      for (auto& [name, t] : total)
        for (std::size_t i = 0; i < t.size(); ++i) t.values[i] += g.at(name).values[i];
    constexpr double h = 1e-6;
    double worst = 0.0;
    for (auto& [name, tensor] : hp) {
      for (std::size_t i = 0; i < tensor.size(); i += 3) {
        const double saved = tensor.values[i];
        tensor.values[i] = saved + h;
        const double plus = mix_td_loss_and_grads(spec, mp, mp, hs, params, targets, batch, 0.9).loss;
        tensor.values[i] = saved - h;
        const double minus = mix_td_loss_and_grads(spec, mp, mp, hs, params, targets, batch, 0.9).loss;
        tensor.values[i] = saved;
        worst = std::max(worst, relative_error(total.at(name).values[i], (plus - minus) / (2 * h)));
      }
    }
    CHECK(worst < 1e-4);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(mix_td_loss_and_grads(spec, mp, mp, hs, params, targets, {}, 0.9), DomainError);
    auto bad = batch;
    bad[0].goals.pop_back();
    CHECK_THROWS_AS(mix_td_loss_and_grads(spec, mp, mp, hs, params, targets, bad, 0.9), DimensionError);
  }
}

TEST_CASE("joint TD update overfits a fixed batch and keeps the mixer monotone") {
  Rng rng(11, "overfit");
  const MixerSpec spec = small_spec(3, 5);
  GoalMixer mixer(spec, rng, AdamConfig{1e-3}, 200);
  MlpSpec hs;
  hs.layer_sizes = {6, 16, 4};
  QNetwork high(hs, rng, AdamConfig{1e-3}, 200);
  std::vector<JointRecord> batch;
  for (int i = 0; i < 32; ++i) {
    batch.push_back(random_record(rng, 3, 6, 5, 4));
    batch.back().done = true;
  }
  const std::vector<QNetwork*> highs(3, &high);
  const double first = mix_td_update(mixer, highs, batch, 0.99, 10.0);
  double last = first;
  for (int i = 0; i < 1000; ++i) last = mix_td_update(mixer, highs, batch, 0.99, 10.0);
  CHECK(last <= 0.1 * first);
  CHECK(mixer.updates() == 1001);
  CHECK(high.updates() == 1001);
  CHECK(monotonicity_probe(spec, mixer.params(), 200, rng) >= -1e-8);
}

TEST_CASE("monotonicity survives 10k training updates") {
  Rng rng(12, "long");
  MixerSpec spec = small_spec(2, 3);
  spec.hidden_dim = 4;
  spec.hyper_hidden = 8;
  GoalMixer mixer(spec, rng, AdamConfig{3e-3}, 200);
  MlpSpec hs;
  hs.layer_sizes = {3, 8, 3};
  QNetwork high(hs, rng, AdamConfig{1e-3}, 200);
  const std::vector<QNetwork*> highs(2, &high);
  std::vector<JointRecord> pool;
  for (int i = 0; i < 256; ++i) pool.push_back(random_record(rng, 2, 3, 3, 3));
  std::vector<JointRecord> batch(4);
  for (int step = 0; step < 10000; ++step) {
    for (auto& b : batch) b = pool[rng.below(pool.size())];
    mix_td_update(mixer, highs, batch, 0.9, 10.0);
  }
  CHECK(monotonicity_probe(spec, mixer.params(), 500, rng) >= -1e-8);
}

TEST_CASE("mixer checkpoint round trip") {
  Rng rng(13, "ckpt");
  const GoalMixer m(small_spec(), rng);
  const GoalMixer back = GoalMixer::from_checkpoint(m.to_checkpoint());
  const std::vector<double> q{0.1, 0.2, -0.3};
  const auto s = random_vec(rng, 5);
  CHECK(back.mix(q, s) == m.mix(q, s));
  CHECK(back.spec() == m.spec());
}
