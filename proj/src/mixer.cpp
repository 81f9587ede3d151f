#include "gmah/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gmah/error.hpp"

namespace gmah {

namespace {

constexpr const char* kHeads[] = {"w1", "b1", "w2", "b2"};

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

std::size_t head_size(const MixerSpec& spec, const std::string& head) {
  if (head == "w1") return spec.n_agents * spec.hidden_dim;
  if (head == "b1" || head == "w2") return spec.hidden_dim;
  return 1;
}

// y = W x + b for a [out, in] weight.
void affine(const Tensor& w, const Tensor& b, std::span<const double> x, std::vector<double>& y) {
  const std::size_t out = w.shape[0], in = w.shape[1];
  y.assign(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w.values.data() + o * in;
    double acc = b.values[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

struct HyperTrace {
  std::vector<double> pre;  // trunk preactivation
  std::vector<double> h;    // trunk output
  std::map<std::string, std::vector<double>> raw;  // head outputs before abs / relu
};

HyperWeights hyper_forward(const MixerSpec& spec, const ParameterSet& p, std::span<const double> state,
                           HyperTrace& tr) {
  if (state.size() != spec.state_dim)
    throw DimensionError("mixer state has length " + std::to_string(state.size()) + ", expected " +
                         std::to_string(spec.state_dim));
  affine(p.at("hyper.weight"), p.at("hyper.bias"), state, tr.pre);
  tr.h = tr.pre;
  for (double& v : tr.h) v = std::max(v, 0.0);
  for (const char* head : kHeads)
    affine(p.at(std::string(head) + ".weight"), p.at(std::string(head) + ".bias"), tr.h, tr.raw[head]);
  HyperWeights w;
  w.W1 = tr.raw["w1"];
  w.b1 = tr.raw["b1"];
  w.W2 = tr.raw["w2"];
  if (spec.monotone) {
    for (double& v : w.W1) v = std::abs(v);
    for (double& v : w.W2) v = std::abs(v);
  }
  w.b2 = std::max(tr.raw["b2"][0], 0.0);
  return w;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

void MixerSpec::validate() const {
  if (n_agents == 0 || state_dim == 0 || hidden_dim == 0 || hyper_hidden == 0)
    throw ConfigError("mixer sizes must all be positive");
}

ParameterSet init_mixer_params(const MixerSpec& spec, Rng& rng) {
  spec.validate();
  ParameterSet p;
  auto layer = [&](const std::string& name, std::size_t out, std::size_t in) {
    Tensor w({out, in});
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : w.values) v = rng.uniform(-bound, bound);
    p.emplace(name + ".weight", std::move(w));
    p.emplace(name + ".bias", Tensor({out}));
  };
  layer("hyper", spec.hyper_hidden, spec.state_dim);
  for (const char* head : kHeads) layer(head, head_size(spec, head), spec.hyper_hidden);
  // Small positive bias on b2's pre-ReLU head keeps its gradient alive at init.
  p.at("b2.bias").values[0] = 0.1;
  return p;
}

void validate_mixer_params(const MixerSpec& spec, const ParameterSet& params) {
  auto expect = [&](const std::string& name, std::vector<std::size_t> shape) {
    const auto it = params.find(name);
    if (it == params.end()) throw ConsistencyError("mixer parameter '" + name + "' is missing");
    if (it->second.shape != shape) throw DimensionError("mixer parameter '" + name + "' has the wrong shape");
    it->second.validate(name);
  };
  expect("hyper.weight", {spec.hyper_hidden, spec.state_dim});
  expect("hyper.bias", {spec.hyper_hidden});
  for (const char* head : kHeads) {
    expect(std::string(head) + ".weight", {head_size(spec, head), spec.hyper_hidden});
    expect(std::string(head) + ".bias", {head_size(spec, head)});
  }
  if (params.size() != 10) throw ConsistencyError("mixer parameter set has unexpected entries");
}

HyperWeights hyper_weights(const MixerSpec& spec, const ParameterSet& params, std::span<const double> state) {
  HyperTrace tr;
  return hyper_forward(spec, params, state, tr);
}

double mix(const MixerSpec& spec, const ParameterSet& params, std::span<const double> q,
           std::span<const double> state) {
  if (q.size() != spec.n_agents)
    throw DimensionError("mixer got " + std::to_string(q.size()) + " agent values, expected " +
                         std::to_string(spec.n_agents));
  const HyperWeights w = hyper_weights(spec, params, state);
  double out = w.b2;
  for (std::size_t j = 0; j < spec.hidden_dim; ++j) {
    double z = w.b1[j];
    for (std::size_t i = 0; i < spec.n_agents; ++i) z += q[i] * w.W1[i * spec.hidden_dim + j];
    out += w.W2[j] * elu(z);
  }
  return out;
}

double mix_backward(const MixerSpec& spec, const ParameterSet& params, std::span<const double> q,
                    std::span<const double> state, double upstream, MixGradients& grads) {
  if (q.size() != spec.n_agents) throw DimensionError("mixer agent value count mismatch");
  if (grads.params.empty()) grads.params = zeros_like(params);
  HyperTrace tr;
  const HyperWeights w = hyper_forward(spec, params, state, tr);
  const std::size_t H = spec.hidden_dim, n = spec.n_agents;

  std::vector<double> z(H), e(H);
  double out = w.b2;
  for (std::size_t j = 0; j < H; ++j) {
    z[j] = w.b1[j];
    for (std::size_t i = 0; i < n; ++i) z[j] += q[i] * w.W1[i * H + j];
    e[j] = elu(z[j]);
    out += w.W2[j] * e[j];
  }

  // Gradients with respect to the realized weights.
  std::map<std::string, std::vector<double>> d_real;
  d_real["w2"].resize(H);
  d_real["b1"].resize(H);
  d_real["w1"].resize(n * H);
  d_real["b2"] = {upstream};
  grads.dq.assign(n, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    d_real["w2"][j] = upstream * e[j];
    const double dz = upstream * w.W2[j] * elu_grad(z[j]);
    d_real["b1"][j] = dz;
    for (std::size_t i = 0; i < n; ++i) {
      d_real["w1"][i * H + j] = dz * q[i];
      grads.dq[i] += dz * w.W1[i * H + j];
    }
  }

  // Back through abs / relu to the raw head outputs, then through the heads.
  std::vector<double> dh(spec.hyper_hidden, 0.0);
  for (const char* head : kHeads) {
    const auto& raw = tr.raw[head];
    auto& d = d_real[head];
    const std::string hs(head);
    for (std::size_t k = 0; k < raw.size(); ++k) {
      if (hs == "b2") d[k] *= raw[k] > 0.0 ? 1.0 : 0.0;
      else if (spec.monotone && (hs == "w1" || hs == "w2")) d[k] *= sign(raw[k]);
    }
    const Tensor& W = params.at(hs + ".weight");
    auto& dW = grads.params.at(hs + ".weight").values;
    auto& db = grads.params.at(hs + ".bias").values;
    const std::size_t in = spec.hyper_hidden;
    for (std::size_t o = 0; o < raw.size(); ++o) {
      if (d[o] == 0.0) continue;
      db[o] += d[o];
      const double* row = W.values.data() + o * in;
      double* drow = dW.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        drow[i] += d[o] * tr.h[i];
        dh[i] += d[o] * row[i];
      }
    }
  }
  auto& dHw = grads.params.at("hyper.weight").values;
  auto& dHb = grads.params.at("hyper.bias").values;
  for (std::size_t k = 0; k < spec.hyper_hidden; ++k) {
    if (tr.pre[k] <= 0.0) continue;
    dHb[k] += dh[k];
    for (std::size_t i = 0; i < spec.state_dim; ++i) dHw[k * spec.state_dim + i] += dh[k] * state[i];
  }
  return out;
}

std::pair<std::vector<int>, double> joint_max(const MixerSpec& spec, const ParameterSet& params,
                                              const std::vector<std::vector<double>>& tables,
                                              std::span<const double> state) {
  if (tables.size() != spec.n_agents) throw DimensionError("one value table per agent is required");
  std::vector<int> goals;
  std::vector<double> q;
  for (const auto& t : tables) {
    for (double v : t)
      if (!std::isfinite(v)) throw NumericError("non-finite goal value in joint_max");
    goals.push_back(argmax(t));
    q.push_back(t[static_cast<std::size_t>(goals.back())]);
  }
  return {goals, mix(spec, params, q, state)};
}

double monotonicity_probe(const MixerSpec& spec, const ParameterSet& params, int trials, Rng& rng) {
  if (trials < 1) throw DomainError("monotonicity probe needs at least one trial");
  constexpr double delta = 1e-4;
  double worst = std::numeric_limits<double>::infinity();
  std::vector<double> state(spec.state_dim), q(spec.n_agents);
  for (int trial = 0; trial < trials; ++trial) {
    for (double& v : state) v = rng.uniform();
    for (double& v : q) v = 2.0 * rng.normal();
    const double base = mix(spec, params, q, state);
    for (std::size_t i = 0; i < spec.n_agents; ++i) {
      auto bumped = q;
      bumped[i] += delta;
      worst = std::min(worst, (mix(spec, params, bumped, state) - base) / delta);
    }
  }
  return worst;
}

double mixer_gradient_check(const MixerSpec& spec, const ParameterSet& params, int trials, Rng& rng) {
  if (trials < 1) throw DomainError("gradient check needs at least one trial");
  constexpr double h = 1e-5;
  double worst = 0.0;
  ParameterSet probe = params;
  std::vector<double> state(spec.state_dim), q(spec.n_agents);
  for (int trial = 0; trial < trials; ++trial) {
    // Redraw until no kink (trunk ReLU, abs, b2 ReLU, elu at 0) is within reach of h.
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (double& v : state) v = rng.uniform();
      for (double& v : q) v = rng.normal();
      HyperTrace tr;
      const HyperWeights w = hyper_forward(spec, probe, state, tr);
      bool near = false;
      for (double v : tr.pre) near |= std::abs(v) < 1e-3;
      for (const auto& [_, raw] : tr.raw)
        for (double v : raw) near |= std::abs(v) < 1e-3;
      for (std::size_t j = 0; j < spec.hidden_dim && !near; ++j) {
        double z = w.b1[j];
        for (std::size_t i = 0; i < spec.n_agents; ++i) z += q[i] * w.W1[i * spec.hidden_dim + j];
        near |= std::abs(z) < 1e-3;
      }
      if (!near) break;
    }
    const double upstream = rng.normal();
    MixGradients g;
    mix_backward(spec, probe, q, state, upstream, g);
    auto loss = [&]() { return upstream * mix(spec, probe, q, state); };
    for (auto& [name, tensor] : probe) {
      const auto& grad = g.params.at(name).values;
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        const double saved = tensor.values[i];
        tensor.values[i] = saved + h;
        const double plus = loss();
        tensor.values[i] = saved - h;
        const double minus = loss();
        tensor.values[i] = saved;
        worst = std::max(worst, relative_error(grad[i], (plus - minus) / (2.0 * h)));
      }
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double saved = q[i];
      q[i] = saved + h;
      const double plus = loss();
      q[i] = saved - h;
      const double minus = loss();
      q[i] = saved;
      worst = std::max(worst, relative_error(g.dq[i], (plus - minus) / (2.0 * h)));
    }
  }
  return worst;
}

// ---- GoalMixer ----

GoalMixer::GoalMixer(MixerSpec spec, ParameterSet params, AdamConfig opt, int target_refresh)
    : spec_(spec), params_(std::move(params)), opt_(opt), target_refresh_(target_refresh) {
  spec_.validate();
  validate_mixer_params(spec_, params_);
  if (target_refresh_ < 1) throw ConfigError("target refresh interval must be positive");
  target_ = params_;
}

GoalMixer::GoalMixer(const MixerSpec& spec, Rng& rng, AdamConfig opt, int target_refresh)
    : GoalMixer(spec, init_mixer_params(spec, rng), opt, target_refresh) {}

double GoalMixer::mix(std::span<const double> q, std::span<const double> state) const {
  return gmah::mix(spec_, params_, q, state);
}

HyperWeights GoalMixer::hyper_weights(std::span<const double> state) const {
  return gmah::hyper_weights(spec_, params_, state);
}

void GoalMixer::apply(GradientRecord grads, double grad_clip) {
  clip_global_norm(grads, grad_clip);
  opt_.step(params_, grads);
  ++updates_;
  if (updates_ % target_refresh_ == 0) sync_target();
}

Checkpoint GoalMixer::to_checkpoint() const {
  Checkpoint c;
  c.kind = "mixer";
  c.spec = {{"n_agents", spec_.n_agents},     {"state_dim", spec_.state_dim},
            {"hidden_dim", spec_.hidden_dim}, {"hyper_hidden", spec_.hyper_hidden},
            {"monotone", spec_.monotone},     {"hidden_activation", "elu"}};
  c.params = params_;
  return c;
}

GoalMixer GoalMixer::from_checkpoint(const Checkpoint& ckpt, AdamConfig opt, int target_refresh) {
  if (ckpt.kind != "mixer") throw SchemaError("checkpoint kind '" + ckpt.kind + "' is not a mixer");
  MixerSpec spec;
  try {
    spec.n_agents = ckpt.spec.at("n_agents").get<std::size_t>();
    spec.state_dim = ckpt.spec.at("state_dim").get<std::size_t>();
    spec.hidden_dim = ckpt.spec.at("hidden_dim").get<std::size_t>();
    spec.hyper_hidden = ckpt.spec.at("hyper_hidden").get<std::size_t>();
    spec.monotone = ckpt.spec.value("monotone", true);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed mixer checkpoint: ") + e.what());
  }
  return GoalMixer(spec, ckpt.params, opt, target_refresh);
}

// ---- joint TD ----

MixTdResult mix_td_loss_and_grads(const MixerSpec& spec, const ParameterSet& mixer_params,
                                  const ParameterSet& mixer_target, const MlpSpec& high_spec,
                                  const std::vector<const ParameterSet*>& high_params,
                                  const std::vector<const ParameterSet*>& high_targets,
                                  const std::vector<JointRecord>& batch, double gamma, bool double_q) {
  if (batch.empty()) throw DomainError("joint TD batch is empty");
  const std::size_t n = spec.n_agents;
  if (high_params.size() != n || high_targets.size() != n)
    throw DimensionError("one high-level network per agent is required");
  MixTdResult out;
  out.mixer_grads = zeros_like(mixer_params);
  for (std::size_t i = 0; i < n; ++i) out.high_grads.push_back(zeros_like(*high_params[i]));
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<MlpTrace> traces(n);
  std::vector<double> q(n);
  std::vector<double> up(high_spec.output_size());
  for (const auto& rec : batch) {
    if (rec.obs.size() != n || rec.goals.size() != n || rec.next_obs.size() != n)
      throw DimensionError("joint record does not match the agent count");
    double y = rec.reward;
    if (!rec.done) {
      std::vector<std::vector<double>> tables;
      for (std::size_t i = 0; i < n; ++i) tables.push_back(mlp_forward(high_spec, *high_targets[i], rec.next_obs[i]));
      if (double_q) {
        std::vector<std::vector<double>> online;
        for (std::size_t i = 0; i < n; ++i) online.push_back(mlp_forward(high_spec, *high_params[i], rec.next_obs[i]));
        const std::vector<int> pick = joint_max(spec, mixer_params, online, rec.next_state).first;
        std::vector<double> qn(n);
        for (std::size_t i = 0; i < n; ++i) qn[i] = tables[i].at(static_cast<std::size_t>(pick[i]));
        y += gamma * mix(spec, mixer_target, qn, rec.next_state);
      } else {
        y += gamma * joint_max(spec, mixer_target, tables, rec.next_state).second;
      }
    }
    out.targets.push_back(y);
    for (std::size_t i = 0; i < n; ++i) {
      const auto qi = mlp_forward(high_spec, *high_params[i], rec.obs[i], traces[i]);
      q[i] = qi.at(static_cast<std::size_t>(rec.goals[i]));
    }
    const double qtot = mix(spec, mixer_params, q, rec.state);
    const double err = qtot - y;
    out.loss += err * err * inv_b;
    MixGradients mg;
    mg.params = std::move(out.mixer_grads);
    mix_backward(spec, mixer_params, q, rec.state, 2.0 * err * inv_b, mg);
    out.mixer_grads = std::move(mg.params);
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(up.begin(), up.end(), 0.0);
      up[static_cast<std::size_t>(rec.goals[i])] = mg.dq[i];
      backward_into(high_spec, *high_params[i], traces[i], up, out.high_grads[i]);
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("joint TD loss is not finite");
  return out;
}

double mix_td_update(GoalMixer& mixer, const std::vector<QNetwork*>& highs,
                     const std::vector<JointRecord>& batch, double gamma, double grad_clip,
                     bool double_q) {
  if (highs.empty()) throw DimensionError("no high-level networks given");
  std::vector<const ParameterSet*> params, targets;
  for (auto* h : highs) {
    params.push_back(&h->params());
    targets.push_back(&h->target_params());
  }
  MixTdResult r = mix_td_loss_and_grads(mixer.spec(), mixer.params(), mixer.target_params(), highs[0]->spec(),
                                        params, targets, batch, gamma, double_q);
  mixer.apply(std::move(r.mixer_grads), grad_clip);
  // Shared networks receive the sum of their agents' gradients in one step.
  std::vector<std::pair<QNetwork*, GradientRecord>> distinct;
  for (std::size_t i = 0; i < highs.size(); ++i) {
    auto it = std::find_if(distinct.begin(), distinct.end(), [&](const auto& d) { return d.first == highs[i]; });
    if (it == distinct.end()) {
      distinct.emplace_back(highs[i], std::move(r.high_grads[i]));
    } else {
      add_scaled(it->second, r.high_grads[i], 1.0);
    }
  }
  for (auto& [net, g] : distinct) net->apply(std::move(g), grad_clip);
  if (mixer.spec().monotone) {
    for (const auto& rec : batch) {
      const HyperWeights w = mixer.hyper_weights(rec.state);
      const bool ok = std::all_of(w.W1.begin(), w.W1.end(), [](double v) { return v >= 0.0; }) &&
                      std::all_of(w.W2.begin(), w.W2.end(), [](double v) { return v >= 0.0; });
      if (!ok) throw ConsistencyError("realized mixing weights became negative");
    }
  }
  return r.loss;
}

}  // namespace gmah
