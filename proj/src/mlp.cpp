#include "gmah/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "gmah/error.hpp"

namespace gmah {

const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
const char* to_string(OutputHead h) { return h == OutputHead::linear ? "linear" : "softmax"; }
const char* to_string(InitScheme i) {
  return i == InitScheme::orthogonal ? "orthogonal" : "uniform_scaled";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

OutputHead parse_output_head(const std::string& s) {
  if (s == "linear") return OutputHead::linear;
  if (s == "softmax") return OutputHead::softmax;
  throw ConfigError("unknown output head '" + s + "'");
}

InitScheme parse_init_scheme(const std::string& s) {
  if (s == "orthogonal") return InitScheme::orthogonal;
  if (s == "uniform_scaled") return InitScheme::uniform_scaled;
  throw ConfigError("unknown init scheme '" + s + "'");
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l + 1] * layer_sizes[l] + layer_sizes[l + 1];
  return n;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("MlpSpec needs at least 2 layer sizes");
  for (std::size_t s : layer_sizes)
    if (s == 0) throw ConfigError("MlpSpec layer sizes must be positive");
}

std::string weight_name(std::size_t layer) { return "l" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "l" + std::to_string(layer) + ".bias"; }

namespace {

// Gram-Schmidt on the smaller dimension of a Gaussian matrix.
std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> a(rows * cols);
  for (double& v : a) v = rng.normal();
  const bool by_rows = rows <= cols;
  const std::size_t count = by_rows ? rows : cols;
  const std::size_t len = by_rows ? cols : rows;
  auto at = [&](std::size_t vec, std::size_t k) -> double& {
    return by_rows ? a[vec * cols + k] : a[k * cols + vec];
  };
  for (std::size_t i = 0; i < count; ++i) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += at(i, k) * at(j, k);
        for (std::size_t k = 0; k < len; ++k) at(i, k) -= dot * at(j, k);
      }
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < len; ++k) norm += at(i, k) * at(i, k);
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < len; ++k) at(i, k) /= norm;
  }
  return a;
}

double activate(Activation a, double z) { return a == Activation::relu ? std::max(z, 0.0) : std::tanh(z); }

// Derivative expressed through the pre-activation z and output y.
double activate_grad(Activation a, double z, double y) {
  if (a == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
  return 1.0 - y * y;
}

void softmax_inplace(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : v) x /= sum;
}

}  // namespace

ParameterSet init_params(const MlpSpec& spec, Rng& rng, double output_gain) {
  spec.validate();
  ParameterSet params;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    std::vector<double> w;
    if (spec.init == InitScheme::orthogonal) {
      w = orthogonal_matrix(out, in, rng);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      w.resize(out * in);
      for (double& v : w) v = rng.uniform(-bound, bound);
    }
    if (l + 1 == spec.layer_count())
      for (double& v : w) v *= output_gain;
    params.emplace(weight_name(l), Tensor({out, in}, std::move(w)));
    params.emplace(bias_name(l), Tensor({out}));
  }
  return params;
}

void validate_params(const MlpSpec& spec, const ParameterSet& params) {
  spec.validate();
  if (params.size() != 2 * spec.layer_count())
    throw ConsistencyError("parameter set has " + std::to_string(params.size()) +
                           " entries, spec expects " + std::to_string(2 * spec.layer_count()));
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    auto w = params.find(weight_name(l));
    auto b = params.find(bias_name(l));
    if (w == params.end() || b == params.end())
      throw ConsistencyError("missing parameters for layer " + std::to_string(l));
    if (w->second.shape != std::vector<std::size_t>{out, in} ||
        b->second.shape != std::vector<std::size_t>{out})
      throw DimensionError("parameter shape mismatch at layer " + std::to_string(l));
    w->second.validate(w->first);
    b->second.validate(b->first);
  }
}

std::vector<double> mlp_forward(const MlpSpec& spec, const ParameterSet& params,
                                std::span<const double> input, MlpTrace& trace) {
  if (input.size() != spec.input_size())
    throw DimensionError("mlp input has length " + std::to_string(input.size()) + ", expected " +
                         std::to_string(spec.input_size()));
  const std::size_t layers = spec.layer_count();
  trace.activations.resize(layers + 1);
  trace.preactivations.resize(layers);
  trace.activations[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const auto& w = params.at(weight_name(l)).values;
    const auto& b = params.at(bias_name(l)).values;
    const auto& x = trace.activations[l];
    auto& z = trace.preactivations[l];
    z.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w.data() + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      z[o] = acc;
    }
    auto& y = trace.activations[l + 1];
    y = z;
    if (l + 1 < layers) {
      for (double& v : y) v = activate(spec.hidden_activation, v);
    } else if (spec.output_head == OutputHead::softmax) {
      softmax_inplace(y);
    }
  }
  return trace.activations.back();
}

std::vector<double> mlp_forward(const MlpSpec& spec, const ParameterSet& params,
                                std::span<const double> input) {
  MlpTrace trace;
  return mlp_forward(spec, params, input, trace);
}

std::vector<double> backward_into(const MlpSpec& spec, const ParameterSet& params,
                                  const MlpTrace& trace, std::span<const double> upstream,
                                  GradientRecord& grads) {
  const std::size_t layers = spec.layer_count();
  if (upstream.size() != spec.output_size())
    throw DimensionError("upstream has length " + std::to_string(upstream.size()) +
                         ", expected " + std::to_string(spec.output_size()));

  // delta = d(loss)/d(preactivation) of the current layer.
  std::vector<double> delta(upstream.begin(), upstream.end());
  if (spec.output_head == OutputHead::softmax) {
    const auto& p = trace.activations.back();
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += upstream[i] * p[i];
    for (std::size_t i = 0; i < p.size(); ++i) delta[i] = p[i] * (upstream[i] - dot);
  }

  std::vector<double> dx;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = spec.layer_sizes[l];
    const std::size_t out = spec.layer_sizes[l + 1];
    const auto& w = params.at(weight_name(l)).values;
    const auto& x = trace.activations[l];
    auto& gw = grads.at(weight_name(l)).values;
    auto& gb = grads.at(bias_name(l)).values;
    dx.assign(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      gb[o] += d;
      double* grow = gw.data() + o * in;
      const double* wrow = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        grow[i] += d * x[i];
        dx[i] += d * wrow[i];
      }
    }
    if (!all_finite(dx)) throw NumericError("non-finite gradient at layer " + std::to_string(l));
    if (l > 0) {
      const auto& z = trace.preactivations[l - 1];
      const auto& y = trace.activations[l];
      for (std::size_t i = 0; i < in; ++i) dx[i] *= activate_grad(spec.hidden_activation, z[i], y[i]);
      delta.swap(dx);
    }
  }
  return dx;
}

GradientRecord backward(const MlpSpec& spec, const ParameterSet& params,
                        std::span<const double> input, std::span<const double> upstream) {
  MlpTrace trace;
  mlp_forward(spec, params, input, trace);
  GradientRecord grads = zeros_like(params);
  backward_into(spec, params, trace, upstream, grads);
  return grads;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax of an empty vector");
  if (!all_finite(logits)) throw NumericError("softmax received a non-finite logit");
  std::vector<double> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) throw DimensionError("softmax expects a rank-1 tensor");
  return Tensor::vector(softmax(logits.span()));
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double gradient_check(const MlpSpec& spec, const ParameterSet& params, int trials, Rng& rng) {
  if (trials < 1) throw DomainError("gradient_check needs at least one trial");
  constexpr double h = 1e-5;
  ParameterSet probe = params;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<double> input(spec.input_size());
    std::vector<double> upstream(spec.output_size());
    // ReLU is not differentiable at 0; redraw until every hidden unit sits
    // comfortably away from its kink.
    for (int attempt = 0;; ++attempt) {
      for (double& v : input) v = rng.normal();
      if (spec.hidden_activation != Activation::relu || attempt > 100) break;
      MlpTrace trace;
      mlp_forward(spec, params, input, trace);
      bool near_kink = false;
      for (std::size_t l = 0; l + 1 < spec.layer_count(); ++l)
        for (double z : trace.preactivations[l]) near_kink |= std::abs(z) < 1e-3;
      if (!near_kink) break;
    }
    for (double& v : upstream) v = rng.normal();

    const GradientRecord analytic = backward(spec, params, input, upstream);
    auto loss = [&](const ParameterSet& p) {
      const auto out = mlp_forward(spec, p, input);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += upstream[i] * out[i];
      return s;
    };
    for (auto& [name, tensor] : probe) {
      const auto& grad = analytic.at(name).values;
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        const double saved = tensor.values[i];
        tensor.values[i] = saved + h;
        const double plus = loss(probe);
        tensor.values[i] = saved - h;
        const double minus = loss(probe);
        tensor.values[i] = saved;
        worst = std::max(worst, relative_error(grad[i], (plus - minus) / (2.0 * h)));
      }
    }
  }
  return worst;
}

}  // namespace gmah
