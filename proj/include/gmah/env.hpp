#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace gmah {

struct EnvInfo {
  std::string name;
  int n_agents = 1;
  int action_count = 1;
  int obs_dim = 1;
  std::vector<int> state_shape;
  int subgoal_count = 1;
  int max_steps = 1;  // T
};

struct StepResult {
  std::vector<double> obs;  // next observation of the acting agent
  double reward = 0.0;
  bool done = false;
  std::vector<int> achieved_subgoals;
};

struct ResetResult {
  std::vector<std::vector<double>> observations;  // one per agent
  std::vector<double> state;                      // normalized global state
};

// Agents act in a fixed cyclic order.
class AgentCursor {
 public:
  AgentCursor() = default;
  explicit AgentCursor(int n_agents);
  int current() const { return order_[index_]; }
  std::size_t index() const { return index_; }
  // Returns true when the cursor wrapped back to the first agent.
  bool advance();
  void reset() { index_ = 0; }
  const std::vector<int>& order() const { return order_; }

 private:
  std::vector<int> order_{0};
  std::size_t index_ = 0;
};

// Multi-agent sequential environment. The public step() enforces the
// turn/action/lifecycle contract and then dispatches to do_step().
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvInfo info() const = 0;
  ResetResult reset(std::uint64_t seed);
  StepResult step(int agent_id, int action);

  virtual std::vector<double> observe(int agent_id) const = 0;
  virtual std::vector<double> global_state() const = 0;
  virtual std::string render_ascii() const = 0;
  virtual std::vector<std::string> subgoal_names() const = 0;
  // The intended subgoal order for solving the task; used by low-level evaluation.
  virtual std::vector<int> canonical_plan() const = 0;
  virtual int grid_width() const = 0;
  virtual int grid_height() const = 0;
  virtual std::pair<int, int> agent_position(int agent_id) const = 0;
  virtual nlohmann::json config_json() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  int current_agent() const { return cursor_.current(); }
  bool done() const { return done_; }
  bool started() const { return started_; }

 protected:
  virtual void do_reset(std::uint64_t seed) = 0;
  virtual StepResult do_step(int agent_id, int action) = 0;
  // True while the acting agent is the last one of the current round.
  bool last_in_round() const { return cursor_.index() + 1 == cursor_.order().size(); }
  void init_cursor(int n_agents) { cursor_ = AgentCursor(n_agents); }
  // For crafted layouts: behave as if freshly reset.
  void mark_live() {
    cursor_.reset();
    done_ = false;
    started_ = true;
  }

 private:
  AgentCursor cursor_;
  bool done_ = false;
  bool started_ = false;
};

std::unique_ptr<Environment> make_env(const std::string& name,
                                      const nlohmann::json& env_config = nlohmann::json::object());

// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const nlohmann::json& config);

// ---- conformance ----

struct ConformanceCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::string env_name;
  std::vector<ConformanceCheck> checks;
  bool all_passed() const;
  std::string to_text() const;
};

struct ConformanceOptions {
  std::uint64_t seed = 7;
  int episodes = 3;
  int expected_obs_dim = 0;  // 0 = only check against info().obs_dim
};

ConformanceReport conformance_suite(Environment& env, const ConformanceOptions& opts = {});

// ---- trajectory replay ----

struct ReplayRecord {
  std::uint64_t seed = 0;
  int agent_id = 0;
  int action = 0;
};

struct ReplayFile {
  std::string env_name;
  std::string config_hash;
  std::vector<ReplayRecord> records;
};

// Text format: "# gmah-replay env=<name> config_hash=<hex>" header, a
// "seed,agent_id,action" column line, then one record per line.
void save_replay(const std::filesystem::path& path, const ReplayFile& file);
ReplayFile load_replay(const std::filesystem::path& path);

// Re-executes the records. A new seed (or a finished episode) triggers reset.
std::vector<StepResult> replay(Environment& env, const std::vector<ReplayRecord>& records);

}  // namespace gmah
