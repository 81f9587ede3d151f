#pragma once

#include "gmah/tensor.hpp"

namespace gmah {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates, one entry per parameter.
struct AdamState {
  GradientRecord m;
  GradientRecord v;
  long t = 0;
};

// One bias-corrected adaptive-moment update at step t (t >= 1). The moments in
// `state` are updated in place; the returned set holds the new parameters.
// Throws ConsistencyError when a parameter has no gradient.
ParameterSet adam_step(const ParameterSet& params, const GradientRecord& grads, double lr,
                       double beta1, double beta2, double eps, long t, AdamState& state);

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // In-place variant of adam_step that advances the internal step counter.
  void step(ParameterSet& params, const GradientRecord& grads);

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamState& state() const { return state_; }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

}  // namespace gmah
