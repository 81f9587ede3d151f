#include "gmah/doorkey.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "gmah/error.hpp"
#include "gmah/rng.hpp"

namespace gmah {

namespace {

constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};
constexpr char kAgentGlyph[4] = {'>', 'v', '<', '^'};

char glyph(DkCell c) {
  switch (c) {
    case DkCell::empty: return '.';
    case DkCell::wall: return '#';
    case DkCell::door_locked: return 'L';
    case DkCell::door_open: return '_';
    case DkCell::key: return 'K';
    case DkCell::box: return 'B';
  }
  return '?';
}

DkCell cell_from_glyph(char g) {
  switch (g) {
    case '.': return DkCell::empty;
    case '#': return DkCell::wall;
    case 'L': return DkCell::door_locked;
    case '_': return DkCell::door_open;
    case 'K': return DkCell::key;
    case 'B': return DkCell::box;
  }
  throw ParseError(std::string("unknown Door-Key glyph '") + g + "'");
}

bool transparent(DkCell c) { return c != DkCell::wall && c != DkCell::door_locked; }
bool passable(DkCell c) { return c == DkCell::empty || c == DkCell::door_open; }

int count_cells(const DoorKeyState& s, DkCell kind) {
  return static_cast<int>(std::count(s.grid.begin(), s.grid.end(), kind));
}

}  // namespace

DoorKeyConfig doorkey_config_from_json(const nlohmann::json& j) {
  DoorKeyConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw ConfigError("env_config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "T") cfg.T = value.get<int>();
      else if (key == "beta") cfg.beta = value.get<double>();
      else if (key == "reward_scale") cfg.reward_scale = value.get<double>();
      else if (key == "box_same_room_prob") cfg.box_same_room_prob = value.get<double>();
      else throw ConfigError("unknown key 'env_config." + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("invalid value for 'env_config." + key + "'");
    }
  }
  if (cfg.T < 1) throw ConfigError("invalid value for 'env_config.T': must be positive");
  if (cfg.beta < 0.0 || cfg.beta > 1.0) throw ConfigError("invalid value for 'env_config.beta'");
  if (cfg.reward_scale <= 0.0) throw ConfigError("invalid value for 'env_config.reward_scale'");
  if (cfg.box_same_room_prob < 0.0 || cfg.box_same_room_prob > 1.0)
    throw ConfigError("invalid value for 'env_config.box_same_room_prob'");
  return cfg;
}

nlohmann::json to_json(const DoorKeyConfig& cfg) {
  return {{"T", cfg.T},
          {"beta", cfg.beta},
          {"reward_scale", cfg.reward_scale},
          {"box_same_room_prob", cfg.box_same_room_prob}};
}

std::pair<int, int> DoorKeyState::front() const { return {agent_x + kDx[dir], agent_y + kDy[dir]}; }

bool DoorKeyState::door_open() const { return count_cells(*this, DkCell::door_open) == 1; }

int DoorKeyState::wall_column() const {
  for (int x = 1; x < kSize - 1; ++x) {
    bool column = true;
    for (int y = 1; y < kSize - 1 && column; ++y) {
      const DkCell c = at(x, y);
      column = c == DkCell::wall || c == DkCell::door_locked || c == DkCell::door_open;
    }
    if (column) return x;
  }
  return -1;
}

void DoorKeyState::validate() const {
  if (dir < 0 || dir > 3) throw ConsistencyError("agent direction out of range");
  if (!in_bounds(agent_x, agent_y)) throw ConsistencyError("agent outside the grid");
  if (!passable(at(agent_x, agent_y))) throw ConsistencyError("agent inside a non-walkable cell");
  const int doors = count_cells(*this, DkCell::door_locked) + count_cells(*this, DkCell::door_open);
  if (doors != 1) throw ConsistencyError("expected exactly one door");
  const int col = wall_column();
  if (col < 0) throw ConsistencyError("no dividing wall column");
  const int keys = count_cells(*this, DkCell::key);
  if (keys + (carrying_key ? 1 : 0) > 1) throw ConsistencyError("more than one key");
  if (count_cells(*this, DkCell::box) != 1) throw ConsistencyError("expected exactly one box");
  if (T < 1 || t < 0) throw ConsistencyError("invalid time counters");
}

double dk_toggle_reward(int t, const DoorKeyConfig& cfg) {
  return (1.0 - cfg.beta * static_cast<double>(t) / static_cast<double>(cfg.T)) * cfg.reward_scale;
}

DoorKeyState dk_generate(std::uint64_t seed, const DoorKeyConfig& cfg) {
  constexpr int n = DoorKeyState::kSize;
  Rng rng(seed, "doorkey-layout");
  DoorKeyState s;
  s.T = cfg.T;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      s.at(x, y) = (x == 0 || y == 0 || x == n - 1 || y == n - 1) ? DkCell::wall : DkCell::empty;

  const int wall_col = 2 + rng.below(4);
  for (int y = 1; y < n - 1; ++y) s.at(wall_col, y) = DkCell::wall;
  s.at(wall_col, 1 + rng.below(n - 2)) = DkCell::door_locked;

  auto free_cell = [&](int x_lo, int x_hi) {
    std::vector<std::pair<int, int>> cells;
    for (int y = 1; y < n - 1; ++y)
      for (int x = x_lo; x <= x_hi; ++x)
        if (s.at(x, y) == DkCell::empty && !(x == s.agent_x && y == s.agent_y)) cells.emplace_back(x, y);
    return cells[static_cast<std::size_t>(rng.below(static_cast<int>(cells.size())))];
  };

  s.agent_x = -1;
  s.agent_y = -1;
  const auto agent = free_cell(1, wall_col - 1);
  s.agent_x = agent.first;
  s.agent_y = agent.second;
  s.dir = rng.below(4);
  const auto key = free_cell(1, wall_col - 1);
  s.at(key.first, key.second) = DkCell::key;
  const bool same_room = rng.bernoulli(cfg.box_same_room_prob);
  const auto box = same_room ? free_cell(1, wall_col - 1) : free_cell(wall_col + 1, n - 2);
  s.at(box.first, box.second) = DkCell::box;
  return s;
}

std::vector<double> dk_observe(const DoorKeyState& s) {
  using namespace dk_obs;
  constexpr int v = kView;
  const int fx = kDx[s.dir], fy = kDy[s.dir];
  const int rx = kDx[(s.dir + 1) % 4], ry = kDy[(s.dir + 1) % 4];
  auto world = [&](int row, int col) {
    const int ahead = v - 1 - row;
    const int lateral = col - v / 2;
    return std::pair{s.agent_x + fx * ahead + rx * lateral, s.agent_y + fy * ahead + ry * lateral};
  };

  // Flood fill from the agent through transparent cells; opaque cells are
  // seen but stop propagation.
  std::array<bool, v * v> visible{};
  std::deque<std::pair<int, int>> frontier;
  visible[(v - 1) * v + v / 2] = true;
  frontier.emplace_back(v - 1, v / 2);
  while (!frontier.empty()) {
    const auto [row, col] = frontier.front();
    frontier.pop_front();
    const auto [wx, wy] = world(row, col);
    const bool is_agent = row == v - 1 && col == v / 2;
    if (!is_agent && !transparent(s.at(wx, wy))) continue;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int r2 = row + dr, c2 = col + dc;
        if (r2 < 0 || c2 < 0 || r2 >= v || c2 >= v || visible[r2 * v + c2]) continue;
        const auto [x2, y2] = world(r2, c2);
        if (!DoorKeyState::in_bounds(x2, y2)) continue;
        visible[r2 * v + c2] = true;
        frontier.emplace_back(r2, c2);
      }
    }
  }

  std::vector<double> obs(kDim, 0.0);
  for (int row = 0; row < v; ++row) {
    for (int col = 0; col < v; ++col) {
      if (!visible[row * v + col]) continue;
      const auto [wx, wy] = world(row, col);
      DkCell c = s.at(wx, wy);
      if (row == v - 1 && col == v / 2 && s.carrying_key) c = DkCell::key;
      int type = empty, state = 0;
      switch (c) {
        case DkCell::empty: type = empty; break;
        case DkCell::wall: type = wall; break;
        case DkCell::door_locked: type = door; state = state_locked; break;
        case DkCell::door_open: type = door; break;
        case DkCell::key: type = key; break;
        case DkCell::box: type = box; break;
      }
      const std::size_t base = static_cast<std::size_t>((row * v + col) * 3);
      obs[base] = static_cast<double>(type) / kMaxType;
      obs[base + 1] = static_cast<double>(state) / kMaxState;
    }
  }
  return obs;
}

bool dk_subgoal_achieved(int g, const DoorKeyState& prev, const DoorKeyState& next) {
  switch (g) {
    case dk_subgoal::pickup_key: return !prev.carrying_key && next.carrying_key;
    case dk_subgoal::open_door: return !prev.door_open() && next.door_open();
    case dk_subgoal::toggle_box: return !prev.box_toggled && next.box_toggled;
  }
  throw DomainError("Door-Key subgoal index out of range");
}

std::string dk_render_ascii(const DoorKeyState& s) {
  std::string out;
  for (int y = 0; y < DoorKeyState::kSize; ++y) {
    for (int x = 0; x < DoorKeyState::kSize; ++x)
      out += (x == s.agent_x && y == s.agent_y) ? kAgentGlyph[s.dir] : glyph(s.at(x, y));
    out += '\n';
  }
  return out;
}

nlohmann::json dk_sidecar(const DoorKeyState& s) {
  return {{"agent", {{"x", s.agent_x}, {"y", s.agent_y}, {"dir", s.dir}}},
          {"under_agent", std::string(1, glyph(s.at(s.agent_x, s.agent_y)))},
          {"carrying_key", s.carrying_key},
          {"box_toggled", s.box_toggled},
          {"t", s.t},
          {"T", s.T}};
}

DoorKeyState dk_parse_ascii(const std::string& text, const nlohmann::json& sidecar) {
  DoorKeyState s;
  std::istringstream in(text);
  std::string line;
  int y = 0;
  int ax = -1, ay = -1, adir = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (y >= DoorKeyState::kSize || static_cast<int>(line.size()) != DoorKeyState::kSize)
      throw ParseError("Door-Key layout must be 8 lines of 8 glyphs");
    for (int x = 0; x < DoorKeyState::kSize; ++x) {
      const char g = line[static_cast<std::size_t>(x)];
      const auto* hit = std::find(std::begin(kAgentGlyph), std::end(kAgentGlyph), g);
      if (hit != std::end(kAgentGlyph)) {
        ax = x;
        ay = y;
        adir = static_cast<int>(hit - std::begin(kAgentGlyph));
        s.at(x, y) = DkCell::empty;
      } else {
        s.at(x, y) = cell_from_glyph(g);
      }
    }
    ++y;
  }
  if (y != DoorKeyState::kSize) throw ParseError("Door-Key layout must be 8 lines of 8 glyphs");
  if (ax < 0) throw ParseError("Door-Key layout has no agent glyph");
  try {
    s.agent_x = ax;
    s.agent_y = ay;
    s.dir = adir;
    if (sidecar.contains("under_agent"))
      s.at(ax, ay) = cell_from_glyph(sidecar.at("under_agent").get<std::string>().at(0));
    s.carrying_key = sidecar.value("carrying_key", false);
    s.box_toggled = sidecar.value("box_toggled", false);
    s.t = sidecar.value("t", 0);
    s.T = sidecar.value("T", 64);
    if (sidecar.contains("agent")) {
      const auto& a = sidecar.at("agent");
      if (a.value("x", ax) != ax || a.value("y", ay) != ay || a.value("dir", adir) != adir)
        throw ParseError("sidecar agent pose disagrees with the layout");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed Door-Key sidecar: ") + e.what());
  }
  return s;
}

DoorKeyEnv::DoorKeyEnv(DoorKeyConfig cfg) : cfg_(cfg) {
  init_cursor(1);
  state_.T = cfg_.T;
}

EnvInfo DoorKeyEnv::info() const {
  EnvInfo i;
  i.name = "doorkey";
  i.n_agents = 1;
  i.action_count = dk_action::count;
  i.obs_dim = dk_obs::kDim;
  i.state_shape = {DoorKeyState::kSize, DoorKeyState::kSize};
  i.subgoal_count = dk_subgoal::count;
  i.max_steps = cfg_.T;
  return i;
}

std::vector<double> DoorKeyEnv::observe(int agent_id) const {
  if (agent_id != 0) throw DomainError("Door-Key has a single agent");
  return dk_observe(state_);
}

std::vector<double> DoorKeyEnv::global_state() const {
  // Codes: empty 0, wall 1, locked door 2, open door 3, key 4, box 5, agent 6.
  std::vector<double> out(state_.grid.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(state_.grid[i]) / 6.0;
  out[static_cast<std::size_t>(state_.agent_y * DoorKeyState::kSize + state_.agent_x)] = 1.0;
  return out;
}

std::vector<std::string> DoorKeyEnv::subgoal_names() const {
  return {"pickup_key", "open_door", "toggle_box"};
}

std::vector<int> DoorKeyEnv::canonical_plan() const {
  return {dk_subgoal::pickup_key, dk_subgoal::open_door, dk_subgoal::toggle_box};
}

std::pair<int, int> DoorKeyEnv::agent_position(int) const { return {state_.agent_x, state_.agent_y}; }

std::unique_ptr<Environment> DoorKeyEnv::clone() const { return std::make_unique<DoorKeyEnv>(*this); }

void DoorKeyEnv::load_state(const DoorKeyState& state) {
  state.validate();
  state_ = state;
  cfg_.T = state.T;
  mark_live();
}

bool DoorKeyEnv::box_in_agent_room() const {
  const int col = state_.wall_column();
  for (int y = 0; y < DoorKeyState::kSize; ++y)
    for (int x = 0; x < DoorKeyState::kSize; ++x)
      if (state_.at(x, y) == DkCell::box) return (x < col) == (state_.agent_x < col);
  return false;
}

void DoorKeyEnv::do_reset(std::uint64_t seed) { state_ = dk_generate(seed, cfg_); }

StepResult DoorKeyEnv::do_step(int, int action) {
  const DoorKeyState prev = state_;
  DoorKeyState& s = state_;
  const int t = s.t;
  const auto [fx, fy] = s.front();
  const bool front_ok = DoorKeyState::in_bounds(fx, fy);
  StepResult r;

  switch (action) {
    case dk_action::forward:
      if (front_ok && passable(s.at(fx, fy))) {
        s.agent_x = fx;
        s.agent_y = fy;
      }
      break;
    case dk_action::left: s.dir = (s.dir + 3) % 4; break;
    case dk_action::right: s.dir = (s.dir + 1) % 4; break;
    case dk_action::pickup:
      if (front_ok && !s.carrying_key && s.at(fx, fy) == DkCell::key) {
        s.carrying_key = true;
        s.at(fx, fy) = DkCell::empty;
      }
      break;
    case dk_action::drop:
      if (front_ok && s.carrying_key && s.at(fx, fy) == DkCell::empty) {
        s.carrying_key = false;
        s.at(fx, fy) = DkCell::key;
      }
      break;
    case dk_action::toggle:
      if (!front_ok) break;
      if (s.at(fx, fy) == DkCell::door_locked && s.carrying_key) {
        s.at(fx, fy) = DkCell::door_open;
      } else if (s.at(fx, fy) == DkCell::box) {
        s.box_toggled = true;
        r.reward = dk_toggle_reward(t, cfg_);
        r.done = true;
      }
      break;
    case dk_action::done: break;
  }

  // Actions are indexed t = 0..T; the one at t = T is the last.
  if (!r.done && t >= s.T) r.done = true;
  s.t = t + 1;

  for (int g = 0; g < dk_subgoal::count; ++g)
    if (dk_subgoal_achieved(g, prev, s)) r.achieved_subgoals.push_back(g);
  r.obs = dk_observe(s);
  return r;
}

}  // namespace gmah
