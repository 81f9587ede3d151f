#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmah/a2c.hpp"
#include "gmah/adaptive.hpp"
#include "gmah/config.hpp"
#include "gmah/env.hpp"
#include "gmah/hrl.hpp"
#include "gmah/mixer.hpp"

namespace gmah {

// ---- metrics ----

// One aggregated row; NaN means "not applicable" and is written as "nan".
struct MetricsRow {
  long step = 0;
  long episode = 0;
  double reward_mean = 0.0;
  double reward_min = 0.0;
  double intrinsic_reward_mean = 0.0;
  std::vector<double> success;  // per subgoal
  double loss_low = 0.0;
  double loss_high = 0.0;
  double loss_mix = 0.0;
  double epsilon = 0.0;
  double temperature = 0.0;
  double entropy = 0.0;
};

std::vector<std::string> metrics_columns(int n_goals);

class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, int n_goals);
  ~MetricsWriter();
  MetricsWriter(const MetricsWriter&) = delete;
  MetricsWriter& operator=(const MetricsWriter&) = delete;

  void write(const MetricsRow& row);
  long rows() const { return rows_; }

 private:
  std::FILE* file_ = nullptr;
  int n_goals_;
  long rows_ = 0;
  long last_step_ = -1;
};

// %.17g, or "nan".
std::string format_number(double v);

// ---- evaluation ----

struct EvalOptions {
  std::string mode = "gmah";  // gmah | low | a2c | stay
  int episodes = 100;
  std::uint64_t seed = 0;
  bool adapt = true;  // use the trigger in gmah mode when an autoencoder is available
  bool keep_trace = true;
};

struct EpisodeSummary {
  std::uint64_t seed = 0;
  double reward = 0.0;
  int length = 0;
  std::vector<int> first_goals;  // per agent, -1 when no goal was issued
  std::optional<bool> box_same_room;
  std::uint64_t proactive_updates = 0;
};

struct TraceRow {
  int episode = 0;
  int step = 0;
  int agent = 0;
  int goal = -1;
  int action = 0;
  double reward = 0.0;
  std::vector<int> achieved;
  int x = 0;
  int y = 0;
};

struct EvalReport {
  std::string env;
  std::string mode;
  int episodes = 0;
  double mean_reward = 0.0;
  double min_reward = 0.0;
  double mean_length = 0.0;
  std::vector<std::string> subgoal_names;
  // Fraction of episodes whose first issuance of the subgoal was achieved within c steps.
  std::vector<double> subgoal_success;
  std::vector<int> subgoal_issued;  // episodes in which the subgoal was issued at all
  int grid_width = 0;
  int grid_height = 0;
  // Per agent, row-major height x width: position of the acting agent after each step.
  std::vector<std::vector<long>> heatmaps;
  std::vector<EpisodeSummary> episode_summaries;
  std::vector<TraceRow> trace;
  std::uint64_t proactive_updates = 0;

  long heatmap_total() const;
  // Distinct cells visited by any agent.
  int distinct_cells() const;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
// eval_report.json (without the trace) and trace.csv.
void write_eval_report(const EvalReport& report, const std::filesystem::path& dir);

// Everything a mode needs to act. Loaded from checkpoints or taken from a
// live trainer.
struct PolicyBundle {
  std::string mode = "gmah";
  MlpSpec low_spec;
  ParameterSet low;
  MlpSpec high_spec;
  ParameterSet high;
  std::optional<AutoEncoder> ae;
  TriggerConfig trigger;
  std::optional<A2cAgent> a2c;
};

// Reads the checkpoints a mode needs from dir. Missing files and checkpoints
// that do not fit the environment raise DependencyError.
PolicyBundle load_policies(const RunConfig& cfg, const std::filesystem::path& dir, const std::string& mode,
                           bool adapt);

EvalReport evaluate_policies(Environment& env, const HrlConfig& hrl, const PolicyBundle& policies,
                             const EvalOptions& opts);
// Loads from cfg.artifact_dir() (or its seed_<n> subdirectory for multi-seed configs).
EvalReport evaluate(const RunConfig& cfg, const EvalOptions& opts);

// ---- training ----

struct StageOutcome {
  std::string stage;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  long steps = 0;
  long episodes = 0;
  bool plateau_stopped = false;
  std::uint64_t proactive_updates = 0;
};

// Relative change below rel across `count` consecutive evaluations.
// A change from 0 to 0 does not count as a plateau.
bool plateaued(const std::vector<double>& history, double rel, int count);

// Output directory of one seed: out_dir itself for single-seed runs, else out_dir/seed_<n>.
std::filesystem::path seed_dir(const std::filesystem::path& base, const RunConfig& cfg, std::uint64_t seed);

StageOutcome stage1_low(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out);
StageOutcome stage2_high(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out,
                         const std::filesystem::path& from);
StageOutcome stage3_mix(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out,
                        const std::filesystem::path& from);
StageOutcome a2c_baseline(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& out);

// Runs cfg.stage for every seed and echoes the resolved config next to the outputs.
std::vector<StageOutcome> train(const RunConfig& cfg);

std::uint64_t episode_seed(std::uint64_t run_seed, long episode);
std::uint64_t eval_seed(std::uint64_t run_seed, long episode);

}  // namespace gmah
