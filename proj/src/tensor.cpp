#include "gmah/tensor.hpp"

#include <cmath>
#include <numeric>

#include "gmah/error.hpp"

namespace gmah {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape_)
    : shape(std::move(shape_)), values(shape_product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  if (shape_product(shape) != values.size())
    throw DimensionError("tensor shape does not match value count");
}

Tensor Tensor::vector(std::vector<double> values_) {
  const std::size_t n = values_.size();
  return Tensor({n}, std::move(values_));
}

void Tensor::validate(const std::string& what) const {
  for (std::size_t d : shape)
    if (d == 0) throw DimensionError(what + ": zero-sized dimension");
  if (shape_product(shape) != values.size())
    throw DimensionError(what + ": shape does not match value count");
  if (!all_finite(values)) throw NumericError(what + ": non-finite value");
}

bool all_finite(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

GradientRecord zeros_like(const ParameterSet& params) {
  GradientRecord out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape));
  return out;
}

void add_scaled(GradientRecord& into, const GradientRecord& from, double scale) {
  for (const auto& [name, t] : from) {
    auto it = into.find(name);
    if (it == into.end()) {
      Tensor copy = t;
      for (double& v : copy.values) v *= scale;
      into.emplace(name, std::move(copy));
      continue;
    }
    if (it->second.size() != t.size()) throw DimensionError("gradient shape mismatch for " + name);
    for (std::size_t i = 0; i < t.size(); ++i) it->second.values[i] += scale * t.values[i];
  }
}

void scale(GradientRecord& grads, double factor) {
  for (auto& [_, t] : grads)
    for (double& v : t.values) v *= factor;
}

double global_norm(const GradientRecord& grads) {
  double sq = 0.0;
  for (const auto& [_, t] : grads)
    for (double v : t.values) sq += v * v;
  return std::sqrt(sq);
}

double clip_global_norm(GradientRecord& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) scale(grads, max_norm / norm);
  return norm;
}

}  // namespace gmah
