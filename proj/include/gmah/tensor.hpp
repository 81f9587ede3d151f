#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gmah {

// Dense row-major array of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_);
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

  static Tensor vector(std::vector<double> values_);

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }

  // Throws DimensionError when product(shape) != size, NumericError on NaN/Inf.
  void validate(const std::string& what) const;

  bool operator==(const Tensor&) const = default;
};

std::size_t shape_product(std::span<const std::size_t> shape);

// Named tensors. std::map keeps iteration (and therefore serialization and
// optimizer order) deterministic.
using ParameterSet = std::map<std::string, Tensor>;
using GradientRecord = std::map<std::string, Tensor>;

// Zero-valued record with one entry per parameter.
GradientRecord zeros_like(const ParameterSet& params);

void add_scaled(GradientRecord& into, const GradientRecord& from, double scale);
void scale(GradientRecord& grads, double factor);
double global_norm(const GradientRecord& grads);
// Rescales so the global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(GradientRecord& grads, double max_norm);

bool all_finite(std::span<const double> values);

}  // namespace gmah
