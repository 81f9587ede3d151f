#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmah/env.hpp"

namespace gmah {

struct DoorKeyConfig {
  int T = 64;
  double beta = 0.5;
  double reward_scale = 1.0;          // R
  double box_same_room_prob = 0.2;

  bool operator==(const DoorKeyConfig&) const = default;
};

DoorKeyConfig doorkey_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DoorKeyConfig& cfg);

enum class DkCell : std::uint8_t { empty, wall, door_locked, door_open, key, box };

namespace dk_action {
inline constexpr int forward = 0, left = 1, right = 2, pickup = 3, drop = 4, toggle = 5, done = 6;
inline constexpr int count = 7;
}  // namespace dk_action

namespace dk_subgoal {
inline constexpr int pickup_key = 0, open_door = 1, toggle_box = 2;
inline constexpr int count = 3;
}  // namespace dk_subgoal

// Directions: 0 right, 1 down, 2 left, 3 up (y grows downward).
struct DoorKeyState {
  static constexpr int kSize = 8;
  std::array<DkCell, kSize * kSize> grid{};
  int agent_x = 1;
  int agent_y = 1;
  int dir = 0;
  bool carrying_key = false;
  bool box_toggled = false;
  int t = 0;
  int T = 64;

  DkCell at(int x, int y) const { return grid[static_cast<std::size_t>(y * kSize + x)]; }
  DkCell& at(int x, int y) { return grid[static_cast<std::size_t>(y * kSize + x)]; }
  static bool in_bounds(int x, int y) { return x >= 0 && y >= 0 && x < kSize && y < kSize; }
  std::pair<int, int> front() const;
  bool door_open() const;
  int wall_column() const;  // -1 when absent

  // Throws ConsistencyError if a layout invariant is broken.
  void validate() const;

  bool operator==(const DoorKeyState&) const = default;
};

// Egocentric 7x7x3 window, index ((row * 7) + col) * 3 + channel. Row 6 is the
// agent's row (agent at col 3), row 0 is farthest ahead. Channels: object type,
// object state, reserved 0; all divided by their maximum id.
namespace dk_obs {
inline constexpr int kView = 7;
inline constexpr int kDim = kView * kView * 3;
inline constexpr int invisible = 0, empty = 1, wall = 2, door = 3, key = 4, box = 5;
inline constexpr int kMaxType = 5;
inline constexpr int state_locked = 1;
inline constexpr int kMaxState = 1;
}  // namespace dk_obs

std::vector<double> dk_observe(const DoorKeyState& state);

bool dk_subgoal_achieved(int g, const DoorKeyState& prev, const DoorKeyState& next);

// 8 lines of 8 glyphs: '#' wall, '.' empty, 'L' locked door, '_' open door,
// 'K' key, 'B' box, agent as '>' 'v' '<' '^'.
std::string dk_render_ascii(const DoorKeyState& state);
// Sidecar carries what the glyphs cannot: T, t, flags and the cell under the agent.
nlohmann::json dk_sidecar(const DoorKeyState& state);
DoorKeyState dk_parse_ascii(const std::string& text, const nlohmann::json& sidecar);

// Layout generation for a seed; used by reset.
DoorKeyState dk_generate(std::uint64_t seed, const DoorKeyConfig& cfg);

double dk_toggle_reward(int t, const DoorKeyConfig& cfg);

class DoorKeyEnv : public Environment {
 public:
  explicit DoorKeyEnv(DoorKeyConfig cfg = {});

  EnvInfo info() const override;
  std::vector<double> observe(int agent_id) const override;
  std::vector<double> global_state() const override;
  std::string render_ascii() const override { return dk_render_ascii(state_); }
  std::vector<std::string> subgoal_names() const override;
  std::vector<int> canonical_plan() const override;
  int grid_width() const override { return DoorKeyState::kSize; }
  int grid_height() const override { return DoorKeyState::kSize; }
  std::pair<int, int> agent_position(int agent_id) const override;
  nlohmann::json config_json() const override { return to_json(cfg_); }
  std::unique_ptr<Environment> clone() const override;

  const DoorKeyState& state() const { return state_; }
  const DoorKeyConfig& config() const { return cfg_; }
  // Replaces the live state (after reset) with a crafted layout.
  void load_state(const DoorKeyState& state);
  // True when the box was placed in the agent's starting room.
  bool box_in_agent_room() const;

 protected:
  void do_reset(std::uint64_t seed) override;
  StepResult do_step(int agent_id, int action) override;

 private:
  DoorKeyConfig cfg_;
  DoorKeyState state_;
};

}  // namespace gmah
