#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gmah/checkpoint.hpp"
#include "gmah/env.hpp"
#include "gmah/mlp.hpp"
#include "gmah/optim.hpp"
#include "gmah/rng.hpp"

namespace gmah {

struct TriggerConfig {
  double eps1 = 0.9;         // cosine similarity gate
  double eps2 = 0.2;         // KL gate, nats
  std::size_t d_f = 16;      // feature width
  double temperature = 0.5;  // softmax temperature over high-level values in the KL gate

  void validate() const;
  bool operator==(const TriggerConfig&) const = default;
};

// One observation with the high-level reward that followed it.
struct AeSample {
  std::vector<double> obs;
  double reward = 0.0;
};

struct AeLosses {
  double recon = 0.0;  // mean over the batch of the per-element squared reconstruction error
  double sr = 0.0;     // mean over the batch of (f . omega - R)^2
};

struct AeGradients {
  GradientRecord encoder;
  GradientRecord decoder;
  GradientRecord sr;  // single entry "omega"
};

// Encoder obs -> f (linear head of width d_f), decoder f -> obs, and a
// linear reward head omega on f that shapes the encoder during training.
class AutoEncoder {
 public:
  AutoEncoder() = default;
  AutoEncoder(MlpSpec encoder_spec, ParameterSet encoder, MlpSpec decoder_spec, ParameterSet decoder,
              std::vector<double> omega, AdamConfig opt = {});

  static AutoEncoder create(std::size_t obs_dim, std::size_t d_f, const std::vector<std::size_t>& hidden,
                            Rng& rng, AdamConfig opt = {});

  std::vector<double> encode(std::span<const double> obs) const;
  std::vector<double> decode(std::span<const double> f) const;

  AeLosses losses(const std::vector<AeSample>& batch) const;
  AeLosses loss_and_grads(const std::vector<AeSample>& batch, AeGradients& grads) const;
  // One joint optimizer step on recon + sr; returns the pre-update losses.
  AeLosses update(const std::vector<AeSample>& batch);

  const MlpSpec& encoder_spec() const { return encoder_spec_; }
  const MlpSpec& decoder_spec() const { return decoder_spec_; }
  const ParameterSet& encoder_params() const { return encoder_; }
  const ParameterSet& decoder_params() const { return decoder_; }
  const std::vector<double>& omega() const { return sr_.at("omega").values; }
  ParameterSet& encoder_params() { return encoder_; }
  ParameterSet& decoder_params() { return decoder_; }
  ParameterSet& sr_params() { return sr_; }
  std::size_t feature_dim() const { return encoder_spec_.output_size(); }
  std::size_t obs_dim() const { return encoder_spec_.input_size(); }

  Checkpoint to_checkpoint() const;
  static AutoEncoder from_checkpoint(const Checkpoint& ckpt, AdamConfig opt = {});

 private:
  MlpSpec encoder_spec_;
  MlpSpec decoder_spec_;
  ParameterSet encoder_;
  ParameterSet decoder_;
  ParameterSet sr_;
  Adam encoder_opt_;
  Adam decoder_opt_;
  Adam sr_opt_;
};

std::vector<double> encode(const AutoEncoder& ae, std::span<const double> obs);
std::vector<double> decode(const AutoEncoder& ae, std::span<const double> f);
AeLosses ae_update(AutoEncoder& ae, const std::vector<AeSample>& batch);

// Zero-norm input returns 1 (treated as "no change").
double cosine_similarity(std::span<const double> a, std::span<const double> b);
// Sum p ln(p / q) with q floored at 1e-12. DomainError unless both are probability vectors.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct TriggerDecision {
  double similarity = 1.0;
  std::optional<double> kl;  // only computed when the similarity gate fails
  bool fired = false;
};

TriggerDecision evaluate_trigger(const AutoEncoder& ae, const MlpSpec& high_spec,
                                 const ParameterSet& high_params, std::span<const double> obs_t,
                                 std::span<const double> obs_t1, const TriggerConfig& cfg);
bool should_update_goal(const AutoEncoder& ae, const MlpSpec& high_spec, const ParameterSet& high_params,
                        std::span<const double> obs_t, std::span<const double> obs_t1,
                        const TriggerConfig& cfg);

struct TriggerLogRow {
  long t = 0;
  double similarity = 1.0;
  std::optional<double> kl;
  bool fired = false;
};

// Stateful trigger that counts gate evaluations and keeps a decision log.
// Reads the high-level parameters through a pointer so it follows training.
class AdaptiveTrigger {
 public:
  AdaptiveTrigger(const AutoEncoder& ae, const MlpSpec& high_spec, const ParameterSet& high_params,
                  TriggerConfig cfg, bool keep_log = true);

  bool operator()(std::span<const double> obs_t, std::span<const double> obs_t1);
  void set_clock(long t) { clock_ = t; }

  std::uint64_t stage1_evaluations() const { return stage1_evals_; }
  std::uint64_t stage1_failures() const { return stage1_failures_; }
  std::uint64_t stage2_evaluations() const { return stage2_evals_; }
  std::uint64_t fired() const { return fired_; }
  const std::vector<TriggerLogRow>& log() const { return log_; }

 private:
  const AutoEncoder* ae_;
  const MlpSpec* high_spec_;
  const ParameterSet* high_params_;
  TriggerConfig cfg_;
  bool keep_log_;
  long clock_ = 0;
  std::uint64_t stage1_evals_ = 0;
  std::uint64_t stage1_failures_ = 0;
  std::uint64_t stage2_evals_ = 0;
  std::uint64_t fired_ = 0;
  std::vector<TriggerLogRow> log_;
};

// CSV with header "t,similarity,kl,fired"; kl is "nan" when stage 2 was skipped.
void write_trigger_log(const std::filesystem::path& path, const std::vector<TriggerLogRow>& rows);

struct PretrainConfig {
  long max_steps = 2000;
  std::size_t batch_size = 32;
  double stop_loss = 0.0;  // stop once the recon loss of a step falls below this (0 disables)

  bool operator==(const PretrainConfig&) const = default;
};

struct PretrainResult {
  std::vector<double> recon_curve;
  std::vector<double> sr_curve;
  long steps = 0;
};

PretrainResult pretrain(AutoEncoder& ae, const std::vector<AeSample>& dataset,
                        const PretrainConfig& cfg, Rng& rng);

// Uniform-random play; each sample pairs the acting agent's observation with
// the reward of the step taken from it.
std::vector<AeSample> collect_random_observations(Environment& env, std::size_t count,
                                                  std::uint64_t seed);

// Worst relative error of the autoencoder's analytic gradients (encoder,
// decoder and omega) against central finite differences.
double ae_gradient_check(const AutoEncoder& ae, int trials, Rng& rng);

}  // namespace gmah
