#include "gmah/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gmah/error.hpp"

namespace gmah {

void TriggerConfig::validate() const {
  if (!(eps1 > -1.0 && eps1 <= 1.0)) throw ConfigError("invalid value for 'trigger.eps1': must lie in (-1, 1]");
  if (!(eps2 >= 0.0)) throw ConfigError("invalid value for 'trigger.eps2': must be nonnegative");
  if (d_f == 0) throw ConfigError("invalid value for 'trigger.d_f': must be positive");
  if (!(temperature > 0.0)) throw ConfigError("invalid value for 'trigger.temperature': must be positive");
}

AutoEncoder::AutoEncoder(MlpSpec encoder_spec, ParameterSet encoder, MlpSpec decoder_spec,
                         ParameterSet decoder, std::vector<double> omega, AdamConfig opt)
    : encoder_spec_(std::move(encoder_spec)),
      decoder_spec_(std::move(decoder_spec)),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      encoder_opt_(opt),
      decoder_opt_(opt),
      sr_opt_(opt) {
  encoder_spec_.validate();
  decoder_spec_.validate();
  validate_params(encoder_spec_, encoder_);
  validate_params(decoder_spec_, decoder_);
  if (encoder_spec_.output_head != OutputHead::linear || decoder_spec_.output_head != OutputHead::linear)
    throw ConfigError("autoencoder networks need linear heads");
  if (decoder_spec_.input_size() != encoder_spec_.output_size() ||
      decoder_spec_.output_size() != encoder_spec_.input_size())
    throw DimensionError("decoder shape does not mirror the encoder");
  if (omega.size() != encoder_spec_.output_size())
    throw DimensionError("reward head length differs from the feature width");
  const std::size_t n = omega.size();
  sr_.emplace("omega", Tensor({n}, std::move(omega)));
}

AutoEncoder AutoEncoder::create(std::size_t obs_dim, std::size_t d_f,
                                const std::vector<std::size_t>& hidden, Rng& rng, AdamConfig opt) {
  MlpSpec enc;
  enc.layer_sizes.push_back(obs_dim);
  enc.layer_sizes.insert(enc.layer_sizes.end(), hidden.begin(), hidden.end());
  enc.layer_sizes.push_back(d_f);
  enc.hidden_activation = Activation::relu;
  enc.init = InitScheme::orthogonal;
  MlpSpec dec = enc;
  std::reverse(dec.layer_sizes.begin(), dec.layer_sizes.end());
  Rng e = rng.derive("encoder"), d = rng.derive("decoder");
  ParameterSet ep = init_params(enc, e);
  ParameterSet dp = init_params(dec, d);
  return AutoEncoder(enc, std::move(ep), dec, std::move(dp), std::vector<double>(d_f, 0.0), opt);
}

std::vector<double> AutoEncoder::encode(std::span<const double> obs) const {
  return mlp_forward(encoder_spec_, encoder_, obs);
}

std::vector<double> AutoEncoder::decode(std::span<const double> f) const {
  return mlp_forward(decoder_spec_, decoder_, f);
}

AeLosses AutoEncoder::losses(const std::vector<AeSample>& batch) const {
  AeGradients unused;
  unused.encoder = zeros_like(encoder_);
  unused.decoder = zeros_like(decoder_);
  unused.sr = zeros_like(sr_);
  return loss_and_grads(batch, unused);
}

AeLosses AutoEncoder::loss_and_grads(const std::vector<AeSample>& batch, AeGradients& grads) const {
  if (batch.empty()) throw DomainError("autoencoder batch is empty");
  grads.encoder = zeros_like(encoder_);
  grads.decoder = zeros_like(decoder_);
  grads.sr = zeros_like(sr_);
  const auto& w = sr_.at("omega").values;
  auto& dw = grads.sr.at("omega").values;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double inv_d = 1.0 / static_cast<double>(obs_dim());
  AeLosses out;
  MlpTrace enc_trace, dec_trace;
  std::vector<double> up(obs_dim());
  for (const auto& s : batch) {
    const auto f = mlp_forward(encoder_spec_, encoder_, s.obs, enc_trace);
    const auto xhat = mlp_forward(decoder_spec_, decoder_, f, dec_trace);
    double recon = 0.0;
    for (std::size_t i = 0; i < xhat.size(); ++i) {
      const double d = xhat[i] - s.obs[i];
      recon += d * d * inv_d;
      up[i] = 2.0 * d * inv_d * inv_b;
    }
    double pred = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) pred += f[k] * w[k];
    const double err = pred - s.reward;
    out.recon += recon * inv_b;
    out.sr += err * err * inv_b;

    auto df = backward_into(decoder_spec_, decoder_, dec_trace, up, grads.decoder);
    for (std::size_t k = 0; k < f.size(); ++k) {
      dw[k] += 2.0 * err * f[k] * inv_b;
      df[k] += 2.0 * err * w[k] * inv_b;
    }
    backward_into(encoder_spec_, encoder_, enc_trace, df, grads.encoder);
  }
  if (!std::isfinite(out.recon) || !std::isfinite(out.sr))
    throw NumericError("autoencoder loss is not finite");
  return out;
}

AeLosses AutoEncoder::update(const std::vector<AeSample>& batch) {
  AeGradients g;
  const AeLosses l = loss_and_grads(batch, g);
  encoder_opt_.step(encoder_, g.encoder);
  decoder_opt_.step(decoder_, g.decoder);
  sr_opt_.step(sr_, g.sr);
  return l;
}

Checkpoint AutoEncoder::to_checkpoint() const {
  Checkpoint c;
  c.kind = "autoencoder";
  c.spec = {{"encoder", to_json(encoder_spec_)}, {"decoder", to_json(decoder_spec_)},
            {"d_f", feature_dim()}};
  insert_prefixed(c.params, "encoder", encoder_);
  insert_prefixed(c.params, "decoder", decoder_);
  insert_prefixed(c.params, "sr", sr_);
  return c;
}

AutoEncoder AutoEncoder::from_checkpoint(const Checkpoint& ckpt, AdamConfig opt) {
  if (ckpt.kind != "autoencoder") throw SchemaError("checkpoint kind '" + ckpt.kind + "' is not an autoencoder");
  try {
    const auto sr = extract_prefixed(ckpt.params, "sr");
    return AutoEncoder(mlp_spec_from_json(ckpt.spec.at("encoder")), extract_prefixed(ckpt.params, "encoder"),
                       mlp_spec_from_json(ckpt.spec.at("decoder")), extract_prefixed(ckpt.params, "decoder"),
                       sr.at("omega").values, opt);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed autoencoder checkpoint: ") + e.what());
  } catch (const std::out_of_range&) {
    throw SchemaError("autoencoder checkpoint lacks the reward head");
  }
}

std::vector<double> encode(const AutoEncoder& ae, std::span<const double> obs) { return ae.encode(obs); }
std::vector<double> decode(const AutoEncoder& ae, std::span<const double> f) { return ae.decode(f); }
AeLosses ae_update(AutoEncoder& ae, const std::vector<AeSample>& batch) { return ae.update(batch); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine similarity of vectors with different lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

void check_probability(std::span<const double> p, const char* name) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string(name) + " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError(std::string(name) + " does not sum to 1");
}

std::vector<double> policy_distribution(const MlpSpec& spec, const ParameterSet& params,
                                        std::span<const double> obs, double temperature) {
  auto q = mlp_forward(spec, params, obs);
  for (double& v : q) v /= temperature;
  return softmax(q);
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.empty() || p.size() != q.size()) throw DomainError("KL inputs must be nonempty and of equal length");
  check_probability(p, "p");
  check_probability(q, "q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / std::max(q[i], 1e-12));
  return std::max(kl, 0.0);
}

TriggerDecision evaluate_trigger(const AutoEncoder& ae, const MlpSpec& high_spec,
                                 const ParameterSet& high_params, std::span<const double> obs_t,
                                 std::span<const double> obs_t1, const TriggerConfig& cfg) {
  TriggerDecision d;
  d.similarity = cosine_similarity(ae.encode(obs_t), ae.encode(obs_t1));
  if (d.similarity >= cfg.eps1) return d;
  const auto p = policy_distribution(high_spec, high_params, obs_t, cfg.temperature);
  const auto q = policy_distribution(high_spec, high_params, obs_t1, cfg.temperature);
  d.kl = kl_divergence(p, q);
  d.fired = *d.kl > cfg.eps2;
  return d;
}

bool should_update_goal(const AutoEncoder& ae, const MlpSpec& high_spec, const ParameterSet& high_params,
                        std::span<const double> obs_t, std::span<const double> obs_t1,
                        const TriggerConfig& cfg) {
  return evaluate_trigger(ae, high_spec, high_params, obs_t, obs_t1, cfg).fired;
}

AdaptiveTrigger::AdaptiveTrigger(const AutoEncoder& ae, const MlpSpec& high_spec,
                                 const ParameterSet& high_params, TriggerConfig cfg, bool keep_log)
    : ae_(&ae), high_spec_(&high_spec), high_params_(&high_params), cfg_(cfg), keep_log_(keep_log) {
  cfg_.validate();
}

bool AdaptiveTrigger::operator()(std::span<const double> obs_t, std::span<const double> obs_t1) {
  const TriggerDecision d = evaluate_trigger(*ae_, *high_spec_, *high_params_, obs_t, obs_t1, cfg_);
  ++stage1_evals_;
  if (d.kl) {
    ++stage1_failures_;
    ++stage2_evals_;
  }
  if (d.fired) ++fired_;
  if (keep_log_) log_.push_back({clock_, d.similarity, d.kl, d.fired});
  return d.fired;
}

void write_trigger_log(const std::filesystem::path& path, const std::vector<TriggerLogRow>& rows) {
  std::string text = "t,similarity,kl,fired\n";
  char buf[128];
  for (const auto& r : rows) {
    if (r.kl) {
      std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%d\n", r.t, r.similarity, *r.kl, r.fired ? 1 : 0);
    } else {
      std::snprintf(buf, sizeof buf, "%ld,%.17g,nan,%d\n", r.t, r.similarity, r.fired ? 1 : 0);
    }
    text += buf;
  }
  write_text_file(path, text);
}

PretrainResult pretrain(AutoEncoder& ae, const std::vector<AeSample>& dataset, const PretrainConfig& cfg,
                        Rng& rng) {
  if (dataset.empty()) throw DomainError("pretraining dataset is empty");
  PretrainResult out;
  std::vector<AeSample> batch(cfg.batch_size);
  for (long step = 0; step < cfg.max_steps; ++step) {
    for (auto& s : batch) s = dataset[rng.below(dataset.size())];
    const AeLosses l = ae.update(batch);
    out.recon_curve.push_back(l.recon);
    out.sr_curve.push_back(l.sr);
    out.steps = step + 1;
    if (cfg.stop_loss > 0.0 && l.recon < cfg.stop_loss) break;
  }
  return out;
}

std::vector<AeSample> collect_random_observations(Environment& env, std::size_t count,
                                                  std::uint64_t seed) {
  Rng rng(seed, "ae-random-play");
  const int actions = env.info().action_count;
  std::vector<AeSample> out;
  out.reserve(count);
  std::uint64_t episode = 0;
  env.reset(Rng(seed, "ae-episodes").derive(episode)());
  while (out.size() < count) {
    if (env.done()) env.reset(Rng(seed, "ae-episodes").derive(++episode)());
    const int agent = env.current_agent();
    AeSample s;
    s.obs = env.observe(agent);
    s.reward = env.step(agent, rng.below(actions)).reward;
    out.push_back(std::move(s));
  }
  return out;
}

double ae_gradient_check(const AutoEncoder& ae, int trials, Rng& rng) {
  if (trials < 1) throw DomainError("gradient check needs at least one trial");
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<AeSample> batch(3);
    for (auto& s : batch) {
      s.obs.resize(ae.obs_dim());
      for (double& v : s.obs) v = rng.uniform();
      s.reward = rng.normal();
    }
    AutoEncoder probe = ae;
    // A random reward head so the omega path carries gradient.
    for (double& v : probe.sr_params().at("omega").values) v = 0.5 * rng.normal();
    AeGradients g;
    probe.loss_and_grads(batch, g);
    auto total = [&]() {
      const AeLosses l = probe.losses(batch);
      return l.recon + l.sr;
    };
    auto sweep = [&](ParameterSet& params, const GradientRecord& analytic) {
      for (auto& [name, tensor] : params) {
        const auto& grad = analytic.at(name).values;
        for (std::size_t i = 0; i < tensor.size(); ++i) {
          const double saved = tensor.values[i];
          tensor.values[i] = saved + h;
          const double plus = total();
          tensor.values[i] = saved - h;
          const double minus = total();
          tensor.values[i] = saved;
          worst = std::max(worst, relative_error(grad[i], (plus - minus) / (2.0 * h)));
        }
      }
    };
    sweep(probe.encoder_params(), g.encoder);
    sweep(probe.decoder_params(), g.decoder);
    sweep(probe.sr_params(), g.sr);
  }
  return worst;
}

}  // namespace gmah
