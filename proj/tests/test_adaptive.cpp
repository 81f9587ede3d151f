#include <doctest.h>

#include <cmath>

#include "gmah/adaptive.hpp"
#include "gmah/doorkey.hpp"
#include "gmah/error.hpp"

using namespace gmah;

namespace {

MlpSpec linear_spec(std::size_t in, std::size_t out) {
  MlpSpec s;
  s.layer_sizes = {in, out};
  return s;
}

ParameterSet linear_params(std::size_t in, std::size_t out, std::vector<double> w) {
  ParameterSet p;
  p.emplace(weight_name(0), Tensor({out, in}, std::move(w)));
  p.emplace(bias_name(0), Tensor({out}, std::vector<double>(out, 0.0)));
  return p;
}

// Identity encoder and decoder on two inputs: features are the observation itself.
AutoEncoder identity_ae() {
  return AutoEncoder(linear_spec(2, 2), linear_params(2, 2, {1, 0, 0, 1}), linear_spec(2, 2),
                     linear_params(2, 2, {1, 0, 0, 1}), {0.0, 0.0});
}

// Sharp preference for goal 0 on [1,0] and goal 2 on [0,1].
struct HighNet {
  MlpSpec spec = linear_spec(2, 3);
  ParameterSet params = linear_params(2, 3, {10, 0, 0, 0, 0, 10});
};

double reference_kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  return s;
}

std::vector<double> random_simplex(Rng& rng, std::size_t n, bool sparse) {
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) {
    x = (sparse && rng.bernoulli(0.3)) ? 0.0 : -std::log(1.0 - rng.uniform());
    s += x;
  }
  if (s == 0.0) {
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= s;
  return v;
}

std::vector<AeSample> random_batch(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<AeSample> b(n);
  for (auto& s : b) {
    s.obs.resize(dim);
    for (double& v : s.obs) v = rng.uniform();
    s.reward = rng.uniform(-1.0, 1.0);
  }
  return b;
}

}  // namespace

TEST_CASE("cosine similarity examples") {
  const std::vector<double> a{1, 0}, b{1, 1}, c{0, 3};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, c) == doctest::Approx(0.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.70710678).epsilon(1e-4));
  const std::vector<double> zero{0, 0};
  CHECK(cosine_similarity(zero, b) == 1.0);
  const std::vector<double> d{1, 2, 3};
  CHECK_THROWS_AS(cosine_similarity(a, d), DimensionError);
}

TEST_CASE("cosine similarity is bounded and scale invariant") {
  Rng rng(11, "cosine");
  for (int t = 0; t < 500; ++t) {
    std::vector<double> u(5), v(5);
    for (double& x : u) x = rng.normal();
    for (double& x : v) x = rng.normal();
    const double s = cosine_similarity(u, v);
    CHECK(s >= -1.0 - 1e-12);
    CHECK(s <= 1.0 + 1e-12);
    const double k1 = 0.01 + 50.0 * rng.uniform(), k2 = 0.01 + 50.0 * rng.uniform();
    auto us = u, vs = v;
    for (double& x : us) x *= k1;
    for (double& x : vs) x *= k2;
    CHECK(cosine_similarity(us, vs) == doctest::Approx(s).epsilon(1e-10));
  }
}

TEST_CASE("KL divergence examples") {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  const double pq = kl_divergence(p, q);
  CHECK(pq == doctest::Approx(0.1438).epsilon(1e-3));
  CHECK(pq == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75)));
  const double qp = kl_divergence(q, p);
  CHECK(qp == doctest::Approx(0.25 * std::log(0.5) + 0.75 * std::log(1.5)));
  CHECK(std::abs(pq - qp) > 1e-3);
  CHECK(kl_divergence(p, p) == 0.0);
}

TEST_CASE("KL divergence rejects non-probability input") {
  const std::vector<double> ok{0.5, 0.5};
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{0.7, 0.7}, ok), DomainError);
  CHECK_THROWS_AS(kl_divergence(ok, std::vector<double>{-0.5, 1.5}), DomainError);
  CHECK_THROWS_AS(kl_divergence(ok, std::vector<double>{1.0}), DomainError);
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{}, std::vector<double>{}), DomainError);
}

TEST_CASE("KL divergence property: nonnegative, zero iff equal, matches reference") {
  Rng rng(12, "kl");
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.below(6);
    const auto p = random_simplex(rng, n, t % 2 == 0);
    const auto q = random_simplex(rng, n, false);
    const double kl = kl_divergence(p, q);
    CHECK(kl >= -1e-12);
    CHECK(kl == doctest::Approx(reference_kl(p, q)).epsilon(1e-9));
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-12));
  }
  // q floored at 1e-12 where p has mass and q has none.
  const std::vector<double> p{1.0, 0.0}, q{0.0, 1.0};
  CHECK(kl_divergence(p, q) == doctest::Approx(std::log(1e12)));
}

TEST_CASE("trigger fixtures") {
  const AutoEncoder ae = identity_ae();
  const HighNet high;
  TriggerConfig cfg;
  const std::vector<double> a{1, 0}, b{0, 1}, a2{2, 0};

  SUBCASE("identical observations never fire") {
    const auto d = evaluate_trigger(ae, high.spec, high.params, a, a, cfg);
    CHECK(d.similarity == doctest::Approx(1.0));
    CHECK_FALSE(d.kl.has_value());
    CHECK_FALSE(d.fired);
  }
  SUBCASE("orthogonal features and disjoint preferences fire") {
    const auto d = evaluate_trigger(ae, high.spec, high.params, a, b, cfg);
    CHECK(d.similarity == doctest::Approx(0.0));
    REQUIRE(d.kl.has_value());
    CHECK(*d.kl > cfg.eps2);
    CHECK(d.fired);
    CHECK(should_update_goal(ae, high.spec, high.params, a, b, cfg));
  }
  SUBCASE("orthogonal features with identical preferences do not fire") {
    HighNet flat;
    flat.params = linear_params(2, 3, {0, 0, 0, 0, 0, 0});
    const auto d = evaluate_trigger(ae, flat.spec, flat.params, a, b, cfg);
    REQUIRE(d.kl.has_value());
    CHECK(*d.kl == doctest::Approx(0.0));
    CHECK_FALSE(d.fired);
  }
  SUBCASE("parallel features skip the KL gate even when preferences move") {
    const auto d = evaluate_trigger(ae, high.spec, high.params, a, a2, cfg);
    CHECK(d.similarity == doctest::Approx(1.0));
    CHECK_FALSE(d.kl.has_value());
    CHECK_FALSE(d.fired);
  }
}

TEST_CASE("trigger fires exactly when both gates fail, and counts its KL evaluations") {
  Rng rng(13, "trigger");
  AutoEncoder ae = AutoEncoder::create(4, 3, {6}, rng);
  MlpSpec hs;
  hs.layer_sizes = {4, 8, 3};
  ParameterSet hp = init_params(hs, rng, 3.0);
  TriggerConfig cfg;
  cfg.eps1 = 0.95;
  cfg.eps2 = 0.05;
  AdaptiveTrigger trigger(ae, hs, hp, cfg);
  std::uint64_t expected_failures = 0, expected_fired = 0;
  for (int t = 0; t < 400; ++t) {
    std::vector<double> o1(4), o2(4);
    for (double& v : o1) v = rng.uniform();
    for (double& v : o2) v = rng.bernoulli(0.3) ? rng.uniform() : 0.0;
    if (t % 5 == 0) o2 = o1;
    const double sim = cosine_similarity(ae.encode(o1), ae.encode(o2));
    bool want = false;
    if (sim < cfg.eps1) {
      ++expected_failures;
      auto lp = mlp_forward(hs, hp, o1), lq = mlp_forward(hs, hp, o2);
      for (double& v : lp) v /= cfg.temperature;
      for (double& v : lq) v /= cfg.temperature;
      want = reference_kl(softmax(lp), softmax(lq)) > cfg.eps2;
    }
    if (want) ++expected_fired;
    trigger.set_clock(t);
    CHECK(trigger(o1, o2) == want);
    if (t % 5 == 0) CHECK_FALSE(trigger.log().back().fired);
  }
  CHECK(trigger.stage1_evaluations() == 400);
  CHECK(trigger.stage1_failures() == expected_failures);
  CHECK(trigger.stage2_evaluations() == expected_failures);
  CHECK(trigger.fired() == expected_fired);
  CHECK(expected_failures > 0);
  CHECK(expected_fired > 0);
  CHECK(trigger.log().size() == 400);
  CHECK(trigger.log()[7].t == 7);
}

TEST_CASE("trigger config validation") {
  TriggerConfig c;
  c.eps1 = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.eps1 = 1.0;
  CHECK_NOTHROW(c.validate());
  c.eps2 = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("autoencoder shapes and determinism") {
  Rng rng(14, "ae");
  const AutoEncoder ae = AutoEncoder::create(10, 4, {8}, rng);
  std::vector<double> x(10, 0.3);
  const auto f = encode(ae, x);
  CHECK(f.size() == 4);
  CHECK(ae.omega().size() == 4);
  CHECK(decode(ae, f).size() == 10);
  CHECK(encode(ae, x) == f);
  CHECK_THROWS(encode(ae, std::vector<double>(9, 0.0)));
}

TEST_CASE("zero-reward batch with zero reward head has zero successor loss") {
  Rng rng(15, "ae");
  const AutoEncoder ae = AutoEncoder::create(6, 3, {5}, rng);
  auto batch = random_batch(rng, 8, 6);
  for (auto& s : batch) s.reward = 0.0;
  CHECK(ae.losses(batch).sr == 0.0);
  CHECK_THROWS_AS(ae.losses({}), DomainError);
}

TEST_CASE("reward head gradient matches the closed form") {
  Rng rng(16, "ae");
  AutoEncoder ae = AutoEncoder::create(5, 3, {4}, rng);
  for (double& v : ae.sr_params().at("omega").values) v = rng.normal();
  const auto batch = random_batch(rng, 4, 5);
  AeGradients g;
  ae.loss_and_grads(batch, g);
  std::vector<double> expected(3, 0.0);
  for (const auto& s : batch) {
    const auto f = ae.encode(s.obs);
    double pred = 0.0;
    for (std::size_t k = 0; k < 3; ++k) pred += f[k] * ae.omega()[k];
    for (std::size_t k = 0; k < 3; ++k) expected[k] += 2.0 * (pred - s.reward) * f[k] / 4.0;
  }
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(g.sr.at("omega").values[k] == doctest::Approx(expected[k]).epsilon(1e-12));
}

TEST_CASE("autoencoder gradients agree with finite differences") {
  Rng rng(17, "ae");
  const AutoEncoder ae = AutoEncoder::create(6, 3, {5}, rng);
  CHECK(ae_gradient_check(ae, 3, rng) < 1e-4);
}

TEST_CASE("autoencoder overfits a 16-sample batch") {
  Rng rng(18, "ae");
  AutoEncoder ae = AutoEncoder::create(12, 16, {32}, rng);
  const auto batch = random_batch(rng, 16, 12);
  const AeLosses first = ae.losses(batch);
  AeLosses l;
  for (int i = 0; i < 2000; ++i) l = ae.update(batch);
  l = ae.losses(batch);
  CHECK(l.recon < 1e-3);
  CHECK(l.recon < first.recon);
  CHECK(l.sr < first.sr);
}

TEST_CASE("pretraining on Door-Key observations") {
  auto env = make_env("doorkey");
  const auto data = collect_random_observations(*env, 3000, 5);
  REQUIRE(data.size() == 3000);
  CHECK(data[0].obs.size() == static_cast<std::size_t>(env->info().obs_dim));
  CHECK(collect_random_observations(*env, 3000, 5)[2999].obs == data[2999].obs);

  const std::vector<AeSample> train(data.begin(), data.begin() + 2400);
  const std::vector<AeSample> holdout(data.begin() + 2400, data.end());
  PretrainConfig pc;
  pc.max_steps = 1500;
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed, "pretrain");
    AutoEncoder ae = AutoEncoder::create(static_cast<std::size_t>(env->info().obs_dim), 16, {64}, rng);
    const auto result = pretrain(ae, train, pc, rng);
    return std::make_pair(std::move(ae), result);
  };
  auto [ae, result] = run(3);
  CHECK(result.steps == pc.max_steps);

  SUBCASE("smoothed loss curve does not increase") {
    // Means over blocks of 150 steps.
    std::vector<double> blocks;
    for (std::size_t b = 0; b + 150 <= result.recon_curve.size(); b += 150) {
      double s = 0.0;
      for (std::size_t i = b; i < b + 150; ++i) s += result.recon_curve[i];
      blocks.push_back(s / 150.0);
    }
    for (std::size_t i = 1; i < blocks.size(); ++i) CHECK(blocks[i] <= blocks[i - 1] * 1.01);
    CHECK(blocks.back() < 0.5 * blocks.front());
  }
  SUBCASE("held-out reconstruction is within 2x of training") {
    const double tr = ae.losses(train).recon, ho = ae.losses(holdout).recon;
    CHECK(ho <= 2.0 * tr);
  }
  SUBCASE("seed determinism") {
    auto [again, result2] = run(3);
    CHECK(result2.recon_curve == result.recon_curve);
    CHECK(again.encode(data[0].obs) == ae.encode(data[0].obs));
  }
  SUBCASE("stop threshold ends pretraining early") {
    PretrainConfig early = pc;
    early.stop_loss = 1e9;
    Rng rng(4, "pretrain");
    AutoEncoder fresh = AutoEncoder::create(static_cast<std::size_t>(env->info().obs_dim), 16, {64}, rng);
    CHECK(pretrain(fresh, train, early, rng).steps == 1);
  }
}

TEST_CASE("autoencoder checkpoint round trip") {
  Rng rng(19, "ae");
  AutoEncoder ae = AutoEncoder::create(7, 3, {5}, rng);
  for (double& v : ae.sr_params().at("omega").values) v = rng.normal();
  const AutoEncoder back = AutoEncoder::from_checkpoint(ae.to_checkpoint());
  const std::vector<double> x(7, 0.25);
  CHECK(back.encode(x) == ae.encode(x));
  CHECK(back.omega() == ae.omega());
}
