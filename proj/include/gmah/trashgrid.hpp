#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "gmah/env.hpp"

namespace gmah {

struct TrashGridConfig {
  int T = 128;
  int n_agents = 3;
  int k_small = 5;
  int k_big = 5;
  int max_load = 3;
  double beta = 0.5;
  double collision_penalty = -0.1;
  double step_penalty = -0.01;

  bool operator==(const TrashGridConfig&) const = default;
};

TrashGridConfig trashgrid_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrashGridConfig& cfg);

namespace tg_action {
inline constexpr int forward = 0, left = 1, right = 2, pickup = 3, putdown = 4, split = 5;
inline constexpr int count = 6;
}  // namespace tg_action

namespace tg_subgoal {
inline constexpr int find_trash = 0, pickup_small = 1, pickup_big = 2, put_trash = 3;
inline constexpr int count = 4;
}  // namespace tg_subgoal

enum class TrashKind { small, big };

struct TgAgent {
  int x = 0;
  int y = 0;
  int dir = 1;  // 0 right, 1 down, 2 left, 3 up
  int load = 0;
  int splits = 0;  // successful Split actions so far
  int drops = 0;   // successful station Putdowns so far

  bool operator==(const TgAgent&) const = default;
};

struct TgTrash {
  int x = 0;
  int y = 0;
  TrashKind kind = TrashKind::small;
  bool alive = true;

  bool operator==(const TgTrash&) const = default;
};

struct TrashGridState {
  static constexpr int kSize = 10;
  std::vector<TgAgent> agents;
  std::vector<TgTrash> trash;  // fixed slot order from reset
  int t = 0;                   // round index; one round = every agent acts once
  int T = 128;
  int max_load = 3;
  int recycled = 0;            // units delivered to the station

  static bool in_bounds(int x, int y) { return x >= 0 && y >= 0 && x < kSize && y < kSize; }
  static bool is_station(int x, int y);
  // Index of the agent / alive trash occupying a cell, or -1.
  int agent_at(int x, int y) const;
  int trash_at(int x, int y) const;
  std::pair<int, int> front(int agent) const;
  bool faces_trash(int agent) const;
  // small units + big units on the board, carried load and recycled units.
  int total_mass() const;
  bool cleared() const;

  void validate() const;

  bool operator==(const TrashGridState&) const = default;
};

// The 2x4 recycling station in the bottom-right corner, row-major.
const std::vector<std::pair<int, int>>& tg_station_cells();

// N*4 + (K1+K2)*3 + 8*2.
int trashgrid_obs_dim(const TrashGridConfig& cfg);

std::vector<double> tg_observe(const TrashGridState& state, int agent);

bool tg_subgoal_achieved(int agent, int g, const TrashGridState& prev, const TrashGridState& next);

// Integer cell codes (empty 0, agent 1, small 2, big 3, station 4), row-major.
std::vector<int> tg_global_codes(const TrashGridState& state);

// '.' empty, 's' small, 'B' big, '=' station, agents as their index digit.
std::string tg_render_ascii(const TrashGridState& state);
nlohmann::json tg_sidecar(const TrashGridState& state);
// Rebuilds from the sidecar and checks the glyph grid agrees with it.
TrashGridState tg_parse_ascii(const std::string& text, const nlohmann::json& sidecar);

TrashGridState tg_generate(std::uint64_t seed, const TrashGridConfig& cfg);

double tg_drop_reward(int t, int units, const TrashGridConfig& cfg);

class TrashGridEnv : public Environment {
 public:
  explicit TrashGridEnv(TrashGridConfig cfg = {});

  EnvInfo info() const override;
  std::vector<double> observe(int agent_id) const override;
  std::vector<double> global_state() const override;
  std::string render_ascii() const override { return tg_render_ascii(state_); }
  std::vector<std::string> subgoal_names() const override;
  std::vector<int> canonical_plan() const override;
  int grid_width() const override { return TrashGridState::kSize; }
  int grid_height() const override { return TrashGridState::kSize; }
  std::pair<int, int> agent_position(int agent_id) const override;
  nlohmann::json config_json() const override { return to_json(cfg_); }
  std::unique_ptr<Environment> clone() const override;

  const TrashGridState& state() const { return state_; }
  const TrashGridConfig& config() const { return cfg_; }
  void load_state(const TrashGridState& state);

 protected:
  void do_reset(std::uint64_t seed) override;
  StepResult do_step(int agent_id, int action) override;

 private:
  TrashGridConfig cfg_;
  TrashGridState state_;
};

}  // namespace gmah
