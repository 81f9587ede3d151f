#include "gmah/optim.hpp"

#include <cmath>

#include "gmah/error.hpp"

namespace gmah {

namespace {

void update_inplace(ParameterSet& params, const GradientRecord& grads, const AdamConfig& cfg,
                    long t, AdamState& state) {
  if (t < 1) throw DomainError("adam step index must be >= 1");
  if (!(cfg.lr > 0.0)) throw DomainError("adam learning rate must be positive");
  for (const auto& [name, _] : params)
    if (!grads.contains(name)) throw ConsistencyError("missing gradient for parameter " + name);

  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name).values;
    if (g.size() != p.size()) throw DimensionError("gradient shape mismatch for " + name);
    auto m_it = state.m.try_emplace(name, Tensor(p.shape)).first;
    auto v_it = state.v.try_emplace(name, Tensor(p.shape)).first;
    auto& m = m_it->second.values;
    auto& v = v_it->second.values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p.values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  state.t = t;
}

}  // namespace

ParameterSet adam_step(const ParameterSet& params, const GradientRecord& grads, double lr,
                       double beta1, double beta2, double eps, long t, AdamState& state) {
  ParameterSet out = params;
  update_inplace(out, grads, AdamConfig{lr, beta1, beta2, eps}, t, state);
  return out;
}

void Adam::step(ParameterSet& params, const GradientRecord& grads) {
  update_inplace(params, grads, cfg_, state_.t + 1, state_);
}

}  // namespace gmah
