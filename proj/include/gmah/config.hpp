#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmah/a2c.hpp"
#include "gmah/adaptive.hpp"
#include "gmah/hrl.hpp"

namespace gmah {

struct AutoEncoderConfig {
  std::vector<std::size_t> hidden{64};
  std::size_t samples = 4000;  // random-play observations for pretraining
  PretrainConfig pretrain;
  double lr = 1e-3;

  bool operator==(const AutoEncoderConfig&) const = default;
};

struct MixerConfig {
  std::size_t hidden_dim = 32;
  std::size_t hyper_hidden = 64;
  double lr = 1e-4;
  int target_refresh = 2000;  // mixer and fine-tuned high-level target copies
  std::size_t batch_size = 32;
  std::size_t buffer_capacity = 20000;
  double grad_clip = 10.0;
  long learn_start = 500;
  int train_every = 8;
  bool double_q = true;

  bool operator==(const MixerConfig&) const = default;
};

struct EvalConfig {
  long interval = 5000;      // env steps between evaluations during training (0 disables)
  int episodes = 20;         // episodes per periodic evaluation
  bool plateau_stop = true;  // stop a stage once the evaluation metric plateaus
  double plateau_rel = 0.02;
  int plateau_count = 3;
  double plateau_after = 0.5;  // fraction of the budget before plateau stopping may trigger

  bool operator==(const EvalConfig&) const = default;
};

struct RunConfig {
  std::string env = "doorkey";
  nlohmann::json env_config = nlohmann::json::object();
  std::string stage = "low";  // low | high | mix | a2c
  long total_steps = 50000;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "runs/default";
  std::string from;  // directory holding earlier-stage artifacts; empty means out_dir
  double smoothing = 0.89;
  bool adapt = true;
  long log_interval = 1000;
  double frozen_low_epsilon = 0.05;  // behavior exploration of the frozen low level
  // When stage 1 draws a new subgoal: once per episode ("episode"), after an
  // achievement ("achieved") or at every segment end ("segment").
  std::string stage1_resample = "segment";
  HrlConfig hrl;
  LearnerConfig learner;       // low level
  LearnerConfig high_learner;  // high level
  TriggerConfig trigger;
  AutoEncoderConfig autoencoder;
  MixerConfig mixer;
  A2cConfig a2c;
  EvalConfig eval;

  std::filesystem::path artifact_dir() const { return from.empty() ? out_dir : from; }
  // Sets the budget and stretches the epsilon and temperature schedules over its first half.
  void set_total_steps(long steps);
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

RunConfig default_run_config(const std::string& env = "doorkey");

// Unknown keys and invalid values raise ConfigError naming the key.
RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const RunConfig& cfg);

// Parses JSON text; malformed input raises ParseError with the line number.
nlohmann::json parse_json_text(const std::string& text, const std::string& origin);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config(const std::filesystem::path& path);

// Writes the fully resolved configuration as pretty JSON.
void echo_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace gmah
