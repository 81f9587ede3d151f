#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gmah/checkpoint.hpp"
#include "gmah/error.hpp"
#include "gmah/mlp.hpp"
#include "gmah/optim.hpp"

using namespace gmah;

namespace {

// Independent scalar-by-scalar forward pass used as an oracle.
std::vector<double> scalar_forward(const MlpSpec& spec, const ParameterSet& p, std::vector<double> x) {
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto& w = p.at("l" + std::to_string(l) + ".weight");
    const auto& b = p.at("l" + std::to_string(l) + ".bias");
    const std::size_t out = w.shape[0], in = w.shape[1];
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = b.values[o];
      for (std::size_t i = 0; i < in; ++i) s += w.values[o * in + i] * x[i];
      if (l + 1 < spec.layer_count())
        s = spec.hidden_activation == Activation::tanh ? std::tanh(s) : (s > 0 ? s : 0);
      y[o] = s;
    }
    x = y;
  }
  if (spec.output_head == OutputHead::softmax) {
    double m = x[0];
    for (double v : x) m = std::max(m, v);
    double z = 0;
    for (double& v : x) z += (v = std::exp(v - m));
    for (double& v : x) v /= z;
  }
  return x;
}

MlpSpec make_spec(std::vector<std::size_t> sizes, Activation a, OutputHead h = OutputHead::linear,
                  InitScheme init = InitScheme::uniform_scaled) {
  return MlpSpec{std::move(sizes), a, h, init};
}

}  // namespace

TEST_CASE("identity linear layer passes input through") {
  const MlpSpec spec = make_spec({2, 2}, Activation::relu);
  ParameterSet p;
  p.emplace("l0.weight", Tensor({2, 2}, {1, 0, 0, 1}));
  p.emplace("l0.bias", Tensor({2}));
  const auto y = mlp_forward(spec, p, std::vector<double>{1, 2});
  CHECK(y == std::vector<double>{1, 2});
}

TEST_CASE("softmax head on equal logits is uniform") {
  const MlpSpec spec = make_spec({2, 2}, Activation::relu, OutputHead::softmax);
  ParameterSet p;
  p.emplace("l0.weight", Tensor({2, 2}));
  p.emplace("l0.bias", Tensor({2}));
  const auto y = mlp_forward(spec, p, std::vector<double>{3, -1});
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.5));
}

TEST_CASE("2-3-2 tanh forward matches the scalar oracle") {
  const MlpSpec spec = make_spec({2, 3, 2}, Activation::tanh);
  Rng rng(0, "params");
  const ParameterSet p = init_params(spec, rng);
  const auto got = mlp_forward(spec, p, std::vector<double>{1, 0});
  const auto want = scalar_forward(spec, p, {1, 0});
  REQUIRE(got.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("forward rejects mismatched input") {
  const MlpSpec spec = make_spec({3, 2}, Activation::relu);
  Rng rng(1, "p");
  const ParameterSet p = init_params(spec, rng);
  CHECK_THROWS_AS(mlp_forward(spec, p, std::vector<double>{1, 2}), DimensionError);
}

TEST_CASE("linear layer gradient is the outer product") {
  const MlpSpec spec = make_spec({3, 2}, Activation::relu);
  Rng rng(2, "p");
  const ParameterSet p = init_params(spec, rng);
  const std::vector<double> x{0.5, -1.0, 2.0}, u{3.0, -2.0};
  const GradientRecord g = backward(spec, p, x, u);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(g.at("l0.weight").values[o * 3 + i] == u[o] * x[i]);
    CHECK(g.at("l0.bias").values[o] == u[o]);
  }
}

TEST_CASE("zero upstream yields zero gradients") {
  const MlpSpec spec = make_spec({4, 5, 3}, Activation::tanh);
  Rng rng(3, "p");
  const ParameterSet p = init_params(spec, rng);
  const GradientRecord g = backward(spec, p, std::vector<double>{1, 2, 3, 4}, std::vector<double>(3, 0.0));
  for (const auto& [_, t] : g)
    for (double v : t.values) CHECK(v == 0.0);
}

TEST_CASE("backward matches central finite differences for every supported spec") {
  const std::vector<MlpSpec> specs = {
      make_spec({3, 5, 4, 2}, Activation::tanh),
      make_spec({3, 5, 4, 2}, Activation::relu),
      make_spec({4, 6, 3}, Activation::tanh, OutputHead::softmax),
      make_spec({4, 6, 6, 3}, Activation::relu, OutputHead::softmax, InitScheme::orthogonal),
  };
  for (const auto& spec : specs) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed, "gradcheck");
      const ParameterSet p = init_params(spec, rng);
      CHECK(gradient_check(spec, p, 2, rng) < 1e-4);
    }
  }
}

TEST_CASE("gradient_check on a linear net is essentially exact") {
  const MlpSpec spec = make_spec({5, 3}, Activation::relu);
  Rng rng(4, "p");
  const ParameterSet p = init_params(spec, rng);
  CHECK(gradient_check(spec, p, 3, rng) < 1e-8);
}

TEST_CASE("gradient_check rejects zero trials") {
  const MlpSpec spec = make_spec({2, 2}, Activation::relu);
  Rng rng(5, "p");
  const ParameterSet p = init_params(spec, rng);
  CHECK_THROWS_AS(gradient_check(spec, p, 0, rng), DomainError);
}

TEST_CASE("softmax examples") {
  auto a = softmax(std::vector<double>{0, 0, 0});
  for (double v : a) CHECK(v == doctest::Approx(1.0 / 3.0));
  auto b = softmax(std::vector<double>{std::log(1.0), std::log(3.0)});
  CHECK(b[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(b[1] == doctest::Approx(0.75).epsilon(1e-14));
  auto c = softmax(std::vector<double>{1000, 0});
  CHECK(c[0] == doctest::Approx(1.0));
  CHECK(c[1] >= 0.0);
  CHECK(c[1] < 1e-300);
  CHECK_THROWS_AS(softmax(std::vector<double>{NAN, 0}), NumericError);
  CHECK_THROWS_AS(softmax(std::vector<double>{}), DimensionError);
}

TEST_CASE("softmax is a probability vector invariant to shifts") {
  Rng rng(6, "logits");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(1 + rng.below(8));
    for (double& v : z) v = 20.0 * rng.normal();
    const double shift = 50.0 * rng.normal();
    std::vector<double> zs = z;
    for (double& v : zs) v += shift;
    const auto p = softmax(z);
    const auto q = softmax(zs);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-9));
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParameterSet p{{"w", Tensor({3}, {1, -2, 3})}};
  GradientRecord g{{"w", Tensor({3})}};
  AdamState st;
  const ParameterSet out = adam_step(p, g, 0.1, 0.9, 0.999, 1e-8, 1, st);
  CHECK(out == p);
}

TEST_CASE("adam: first step on w=0, g=1 moves to -lr") {
  // m = 0.1, v = 0.001, mhat = 1, vhat = 1 -> w = -0.1 / (1 + 1e-8).
  ParameterSet p{{"w", Tensor({1}, {0.0})}};
  GradientRecord g{{"w", Tensor({1}, {1.0})}};
  AdamState st;
  const ParameterSet out = adam_step(p, g, 0.1, 0.9, 0.999, 1e-8, 1, st);
  CHECK(out.at("w").values[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam: constant gradient converges to lr-sized steps in the gradient sign") {
  // With constant g the bias-corrected moments are exactly g and g^2, so every
  // step is lr * g / (|g| + eps).
  ParameterSet p{{"w", Tensor({2}, {0.0, 0.0})}};
  GradientRecord g{{"w", Tensor({2}, {0.3, -2.0})}};
  AdamState st;
  for (long t = 1; t <= 200; ++t) {
    const ParameterSet next = adam_step(p, g, 0.01, 0.9, 0.999, 1e-8, t, st);
    if (t == 200) {
      CHECK(next.at("w").values[0] - p.at("w").values[0] == doctest::Approx(-0.01).epsilon(1e-6));
      CHECK(next.at("w").values[1] - p.at("w").values[1] == doctest::Approx(0.01).epsilon(1e-6));
    }
    p = next;
  }
}

TEST_CASE("adam: missing gradient is a consistency error; steps are deterministic") {
  ParameterSet p{{"a", Tensor({1}, {1.0})}, {"b", Tensor({1}, {2.0})}};
  GradientRecord g{{"a", Tensor({1}, {0.5})}};
  AdamState st;
  CHECK_THROWS_AS(adam_step(p, g, 0.1, 0.9, 0.999, 1e-8, 1, st), ConsistencyError);

  GradientRecord full{{"a", Tensor({1}, {0.5})}, {"b", Tensor({1}, {-0.25})}};
  AdamState s1, s2;
  const auto r1 = adam_step(p, full, 0.01, 0.9, 0.999, 1e-8, 1, s1);
  const auto r2 = adam_step(p, full, 0.01, 0.9, 0.999, 1e-8, 1, s2);
  CHECK(r1 == r2);
  CHECK(s1.m == s2.m);
  CHECK_THROWS_AS(adam_step(p, full, 0.01, 0.9, 0.999, 1e-8, 0, s1), DomainError);
}

TEST_CASE("orthogonal init gives W W^T = I for square layers") {
  const MlpSpec spec{{16, 16, 16}, Activation::relu, OutputHead::linear, InitScheme::orthogonal};
  Rng rng(8, "ortho");
  const ParameterSet p = init_params(spec, rng);
  for (const char* name : {"l0.weight", "l1.weight"}) {
    const auto& w = p.at(name).values;
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < 16; ++k) dot += w[i * 16 + k] * w[j * 16 + k];
        CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-6);
      }
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  const MlpSpec spec{{4, 8, 3}, Activation::tanh, OutputHead::softmax, InitScheme::orthogonal};
  Rng rng(9, "ckpt");
  const ParameterSet p = init_params(spec, rng);
  const auto path = std::filesystem::temp_directory_path() / "gmah_test_ckpt.json";
  save_checkpoint(path, mlp_checkpoint(spec, p));
  const auto [spec2, p2] = mlp_from_checkpoint(load_checkpoint(path));
  CHECK(spec2 == spec);
  CHECK(p2 == p);
  const auto doc = read_json_file(path);
  CHECK(doc.at("version") == "gmah-ckpt-1");
  std::filesystem::remove(path);
}

TEST_CASE("validate_params catches shape and name problems") {
  const MlpSpec spec{{3, 2}, Activation::relu, OutputHead::linear, InitScheme::orthogonal};
  Rng rng(10, "v");
  ParameterSet p = init_params(spec, rng);
  CHECK_NOTHROW(validate_params(spec, p));
  ParameterSet bad = p;
  bad.at("l0.weight") = Tensor({3, 2});
  CHECK_THROWS_AS(validate_params(spec, bad), DimensionError);
  bad = p;
  bad.erase("l0.bias");
  CHECK_THROWS_AS(validate_params(spec, bad), ConsistencyError);
}
