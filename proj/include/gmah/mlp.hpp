#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gmah/rng.hpp"
#include "gmah/tensor.hpp"

namespace gmah {

enum class Activation { relu, tanh };
enum class OutputHead { linear, softmax };
enum class InitScheme { orthogonal, uniform_scaled };

const char* to_string(Activation a);
const char* to_string(OutputHead h);
const char* to_string(InitScheme i);
Activation parse_activation(const std::string& s);
OutputHead parse_output_head(const std::string& s);
InitScheme parse_init_scheme(const std::string& s);

// Fully connected network. Layer l maps layer_sizes[l] -> layer_sizes[l+1]
// with parameters "l<l>.weight" (out x in, row-major) and "l<l>.bias".
struct MlpSpec {
  std::vector<std::size_t> layer_sizes;
  Activation hidden_activation = Activation::relu;
  OutputHead output_head = OutputHead::linear;
  InitScheme init = InitScheme::orthogonal;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
  std::size_t parameter_count() const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);

// Biases start at zero. The last layer's weights are multiplied by output_gain.
ParameterSet init_params(const MlpSpec& spec, Rng& rng, double output_gain = 1.0);

// Throws ConsistencyError/DimensionError if params do not fit spec.
void validate_params(const MlpSpec& spec, const ParameterSet& params);

// Intermediate values of one forward pass, needed by backward.
struct MlpTrace {
  std::vector<std::vector<double>> activations;  // [0] = input, [L] = output
  std::vector<std::vector<double>> preactivations;
};

std::vector<double> mlp_forward(const MlpSpec& spec, const ParameterSet& params,
                                std::span<const double> input);
std::vector<double> mlp_forward(const MlpSpec& spec, const ParameterSet& params,
                                std::span<const double> input, MlpTrace& trace);

// Gradient of dot(upstream, output) with respect to every parameter.
GradientRecord backward(const MlpSpec& spec, const ParameterSet& params,
                        std::span<const double> input, std::span<const double> upstream);

// Adds the parameter gradient of dot(upstream, output) into grads (which must
// already hold an entry per parameter) and returns the gradient with respect
// to the input.
std::vector<double> backward_into(const MlpSpec& spec, const ParameterSet& params,
                                  const MlpTrace& trace, std::span<const double> upstream,
                                  GradientRecord& grads);

std::vector<double> softmax(std::span<const double> logits);
Tensor softmax(const Tensor& logits);

// Worst relative error between backward() and central finite differences
// (h = 1e-5) over `trials` random inputs and upstream vectors.
double gradient_check(const MlpSpec& spec, const ParameterSet& params, int trials, Rng& rng);

// |a - n| / max(|a|, |n|, floor); floor keeps near-zero entries from dominating.
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace gmah
