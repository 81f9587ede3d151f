#include "gmah/trashgrid.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "gmah/error.hpp"
#include "gmah/rng.hpp"

namespace gmah {

namespace {

constexpr int kDx[4] = {1, 0, -1, 0};
constexpr int kDy[4] = {0, 1, 0, -1};
constexpr int kN = TrashGridState::kSize;

}  // namespace

TrashGridConfig trashgrid_config_from_json(const nlohmann::json& j) {
  TrashGridConfig cfg;
  if (j.is_null()) return cfg;
  if (!j.is_object()) throw ConfigError("env_config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "T") cfg.T = value.get<int>();
      else if (key == "n_agents") cfg.n_agents = value.get<int>();
      else if (key == "k_small") cfg.k_small = value.get<int>();
      else if (key == "k_big") cfg.k_big = value.get<int>();
      else if (key == "max_load") cfg.max_load = value.get<int>();
      else if (key == "beta") cfg.beta = value.get<double>();
      else if (key == "collision_penalty") cfg.collision_penalty = value.get<double>();
      else if (key == "step_penalty") cfg.step_penalty = value.get<double>();
      else throw ConfigError("unknown key 'env_config." + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("invalid value for 'env_config." + key + "'");
    }
  }
  if (cfg.T < 1) throw ConfigError("invalid value for 'env_config.T'");
  if (cfg.n_agents < 1 || cfg.n_agents > kN) throw ConfigError("invalid value for 'env_config.n_agents'");
  if (cfg.k_small < 0 || cfg.k_big < 0 || cfg.k_small + cfg.k_big < 1 ||
      cfg.k_small + cfg.k_big > kN * (kN - 1) - 8)
    throw ConfigError("invalid value for 'env_config.k_small'/'k_big'");
  if (cfg.max_load < 1) throw ConfigError("invalid value for 'env_config.max_load'");
  if (cfg.beta < 0.0 || cfg.beta > 1.0) throw ConfigError("invalid value for 'env_config.beta'");
  if (cfg.collision_penalty > 0.0) throw ConfigError("invalid value for 'env_config.collision_penalty'");
  if (cfg.step_penalty > 0.0) throw ConfigError("invalid value for 'env_config.step_penalty'");
  return cfg;
}

nlohmann::json to_json(const TrashGridConfig& cfg) {
  return {{"T", cfg.T},
          {"n_agents", cfg.n_agents},
          {"k_small", cfg.k_small},
          {"k_big", cfg.k_big},
          {"max_load", cfg.max_load},
          {"beta", cfg.beta},
          {"collision_penalty", cfg.collision_penalty},
          {"step_penalty", cfg.step_penalty}};
}

const std::vector<std::pair<int, int>>& tg_station_cells() {
  static const std::vector<std::pair<int, int>> cells = [] {
    std::vector<std::pair<int, int>> c;
    for (int y = kN - 2; y < kN; ++y)
      for (int x = kN - 4; x < kN; ++x) c.emplace_back(x, y);
    return c;
  }();
  return cells;
}

bool TrashGridState::is_station(int x, int y) { return y >= kN - 2 && y < kN && x >= kN - 4 && x < kN; }

int TrashGridState::agent_at(int x, int y) const {
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i].x == x && agents[i].y == y) return static_cast<int>(i);
  return -1;
}

int TrashGridState::trash_at(int x, int y) const {
  for (std::size_t i = 0; i < trash.size(); ++i)
    if (trash[i].alive && trash[i].x == x && trash[i].y == y) return static_cast<int>(i);
  return -1;
}

std::pair<int, int> TrashGridState::front(int agent) const {
  const auto& a = agents[static_cast<std::size_t>(agent)];
  return {a.x + kDx[a.dir], a.y + kDy[a.dir]};
}

bool TrashGridState::faces_trash(int agent) const {
  const auto [fx, fy] = front(agent);
  return in_bounds(fx, fy) && trash_at(fx, fy) >= 0;
}

int TrashGridState::total_mass() const {
  int mass = recycled;
  for (const auto& tr : trash) mass += tr.alive ? 1 : 0;
  for (const auto& a : agents) mass += a.load;
  return mass;
}

bool TrashGridState::cleared() const {
  return std::none_of(trash.begin(), trash.end(), [](const auto& tr) { return tr.alive; }) &&
         std::all_of(agents.begin(), agents.end(), [](const auto& a) { return a.load == 0; });
}

void TrashGridState::validate() const {
  std::vector<int> occupancy(kN * kN, 0);
  for (const auto& a : agents) {
    if (!in_bounds(a.x, a.y)) throw ConsistencyError("agent outside the grid");
    if (a.dir < 0 || a.dir > 3 || a.load < 0 || a.load > max_load) throw ConsistencyError("invalid agent pose or load");
    ++occupancy[static_cast<std::size_t>(a.y * kN + a.x)];
  }
  for (const auto& tr : trash) {
    if (!tr.alive) continue;
    if (!in_bounds(tr.x, tr.y) || is_station(tr.x, tr.y))
      throw ConsistencyError("trash outside the grid or on the station");
    ++occupancy[static_cast<std::size_t>(tr.y * kN + tr.x)];
  }
  if (std::any_of(occupancy.begin(), occupancy.end(), [](int c) { return c > 1; }))
    throw ConsistencyError("two entities share a cell");
}

int trashgrid_obs_dim(const TrashGridConfig& cfg) {
  return cfg.n_agents * 4 + (cfg.k_small + cfg.k_big) * 3 + 8 * 2;
}

std::vector<double> tg_observe(const TrashGridState& s, int agent) {
  const int n = static_cast<int>(s.agents.size());
  if (agent < 0 || agent >= n) throw DomainError("agent index out of range");
  constexpr double span = kN - 1;
  std::vector<double> obs;
  obs.reserve(static_cast<std::size_t>(n * 4) + s.trash.size() * 3 + 16);
  auto load_feature = [&](int load) { return static_cast<double>(load) / s.max_load; };
  const auto& self = s.agents[static_cast<std::size_t>(agent)];
  obs.push_back(self.x / span);
  obs.push_back(self.y / span);
  obs.push_back(load_feature(self.load));
  obs.push_back(self.dir / 3.0);
  for (int k = 1; k < n; ++k) {
    const auto& o = s.agents[static_cast<std::size_t>((agent + k) % n)];
    obs.push_back((o.x - self.x + span) / (2 * span));
    obs.push_back((o.y - self.y + span) / (2 * span));
    obs.push_back(load_feature(o.load));
    obs.push_back(o.dir / 3.0);
  }
  for (const auto& tr : s.trash) {
    if (!tr.alive) {
      obs.insert(obs.end(), {0.0, 0.0, 0.0});
      continue;
    }
    obs.push_back(tr.x / span);
    obs.push_back(tr.y / span);
    obs.push_back(tr.kind == TrashKind::small ? 0.5 : 1.0);
  }
  for (const auto& [x, y] : tg_station_cells()) {
    obs.push_back(x / span);
    obs.push_back(y / span);
  }
  return obs;
}

bool tg_subgoal_achieved(int agent, int g, const TrashGridState& prev, const TrashGridState& next) {
  const auto i = static_cast<std::size_t>(agent);
  switch (g) {
    case tg_subgoal::find_trash: return !prev.faces_trash(agent) && next.faces_trash(agent);
    case tg_subgoal::pickup_small: return next.agents[i].load > prev.agents[i].load;
    case tg_subgoal::pickup_big: return next.agents[i].splits > prev.agents[i].splits;
    case tg_subgoal::put_trash: return next.agents[i].drops > prev.agents[i].drops;
  }
  throw DomainError("Trash-Grid subgoal index out of range");
}

std::vector<int> tg_global_codes(const TrashGridState& s) {
  std::vector<int> codes(kN * kN, 0);
  for (const auto& [x, y] : tg_station_cells()) codes[static_cast<std::size_t>(y * kN + x)] = 4;
  for (const auto& tr : s.trash)
    if (tr.alive) codes[static_cast<std::size_t>(tr.y * kN + tr.x)] = tr.kind == TrashKind::small ? 2 : 3;
  for (const auto& a : s.agents) codes[static_cast<std::size_t>(a.y * kN + a.x)] = 1;
  return codes;
}

std::string tg_render_ascii(const TrashGridState& s) {
  static constexpr char kGlyph[5] = {'.', '?', 's', 'B', '='};
  const auto codes = tg_global_codes(s);
  std::string out;
  for (int y = 0; y < kN; ++y) {
    for (int x = 0; x < kN; ++x) {
      const int a = s.agent_at(x, y);
      out += a >= 0 ? static_cast<char>('0' + a) : kGlyph[codes[static_cast<std::size_t>(y * kN + x)]];
    }
    out += '\n';
  }
  return out;
}

nlohmann::json tg_sidecar(const TrashGridState& s) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : s.agents)
    agents.push_back({{"x", a.x}, {"y", a.y}, {"dir", a.dir}, {"load", a.load},
                      {"splits", a.splits}, {"drops", a.drops}});
  nlohmann::json trash = nlohmann::json::array();
  for (const auto& tr : s.trash)
    trash.push_back({{"x", tr.x}, {"y", tr.y}, {"kind", tr.kind == TrashKind::small ? "small" : "big"},
                     {"alive", tr.alive}});
  return {{"agents", agents}, {"trash", trash}, {"t", s.t}, {"T", s.T}, {"max_load", s.max_load},
          {"recycled", s.recycled}};
}

TrashGridState tg_parse_ascii(const std::string& text, const nlohmann::json& sidecar) {
  TrashGridState s;
  try {
    for (const auto& a : sidecar.at("agents"))
      s.agents.push_back({a.at("x").get<int>(), a.at("y").get<int>(), a.at("dir").get<int>(),
                          a.value("load", 0), a.value("splits", 0), a.value("drops", 0)});
    for (const auto& tr : sidecar.at("trash"))
      s.trash.push_back({tr.at("x").get<int>(), tr.at("y").get<int>(),
                         tr.at("kind").get<std::string>() == "small" ? TrashKind::small : TrashKind::big,
                         tr.value("alive", true)});
    s.t = sidecar.value("t", 0);
    s.T = sidecar.value("T", 128);
    s.max_load = sidecar.value("max_load", 3);
    s.recycled = sidecar.value("recycled", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed Trash-Grid sidecar: ") + e.what());
  }
  std::string normalized;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) normalized += line + "\n";
  if (normalized != tg_render_ascii(s)) throw ParseError("Trash-Grid layout disagrees with its sidecar");
  return s;
}

double tg_drop_reward(int t, int units, const TrashGridConfig& cfg) {
  return (1.0 - cfg.beta * static_cast<double>(t) / static_cast<double>(cfg.T)) * units;
}

TrashGridState tg_generate(std::uint64_t seed, const TrashGridConfig& cfg) {
  Rng rng(seed, "trashgrid-layout");
  TrashGridState s;
  s.T = cfg.T;
  s.max_load = cfg.max_load;
  std::vector<int> columns(kN);
  std::iota(columns.begin(), columns.end(), 0);
  rng.shuffle(columns.begin(), columns.end());
  for (int i = 0; i < cfg.n_agents; ++i) s.agents.push_back({columns[static_cast<std::size_t>(i)], 0, 1});

  std::vector<std::pair<int, int>> cells;
  for (int y = 0; y < kN; ++y)
    for (int x = 0; x < kN; ++x)
      if (!TrashGridState::is_station(x, y) && s.agent_at(x, y) < 0) cells.emplace_back(x, y);
  rng.shuffle(cells.begin(), cells.end());
  const int total = cfg.k_small + cfg.k_big;
  for (int i = 0; i < total; ++i) {
    const auto [x, y] = cells[static_cast<std::size_t>(i)];
    s.trash.push_back({x, y, i < cfg.k_small ? TrashKind::small : TrashKind::big, true});
  }
  return s;
}

TrashGridEnv::TrashGridEnv(TrashGridConfig cfg) : cfg_(cfg) {
  init_cursor(cfg_.n_agents);
  state_ = tg_generate(0, cfg_);
}

EnvInfo TrashGridEnv::info() const {
  EnvInfo i;
  i.name = "trashgrid";
  i.n_agents = cfg_.n_agents;
  i.action_count = tg_action::count;
  i.obs_dim = trashgrid_obs_dim(cfg_);
  i.state_shape = {kN, kN};
  i.subgoal_count = tg_subgoal::count;
  i.max_steps = cfg_.T;
  return i;
}

std::vector<double> TrashGridEnv::observe(int agent_id) const { return tg_observe(state_, agent_id); }

std::vector<double> TrashGridEnv::global_state() const {
  const auto codes = tg_global_codes(state_);
  std::vector<double> out(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = codes[i] / 4.0;
  return out;
}

std::vector<std::string> TrashGridEnv::subgoal_names() const {
  return {"FindTrash", "PickupSTrash", "PickupBTrash", "PutTrash"};
}

std::vector<int> TrashGridEnv::canonical_plan() const {
  return {tg_subgoal::find_trash, tg_subgoal::pickup_small, tg_subgoal::put_trash};
}

std::pair<int, int> TrashGridEnv::agent_position(int agent_id) const {
  const auto& a = state_.agents.at(static_cast<std::size_t>(agent_id));
  return {a.x, a.y};
}

std::unique_ptr<Environment> TrashGridEnv::clone() const { return std::make_unique<TrashGridEnv>(*this); }

void TrashGridEnv::load_state(const TrashGridState& state) {
  state.validate();
  if (static_cast<int>(state.agents.size()) != cfg_.n_agents)
    throw ConsistencyError("loaded state has the wrong number of agents");
  if (static_cast<int>(state.trash.size()) != cfg_.k_small + cfg_.k_big)
    throw ConsistencyError("loaded state has the wrong number of trash slots");
  state_ = state;
  cfg_.T = state.T;
  cfg_.max_load = state.max_load;
  mark_live();
}

void TrashGridEnv::do_reset(std::uint64_t seed) { state_ = tg_generate(seed, cfg_); }

StepResult TrashGridEnv::do_step(int agent_id, int action) {
  const TrashGridState prev = state_;
  TrashGridState& s = state_;
  auto& a = s.agents[static_cast<std::size_t>(agent_id)];
  const auto [fx, fy] = s.front(agent_id);
  const bool front_ok = TrashGridState::in_bounds(fx, fy);
  StepResult r;
  r.reward = cfg_.step_penalty;

  switch (action) {
    case tg_action::forward:
      if (!front_ok || s.agent_at(fx, fy) >= 0 || s.trash_at(fx, fy) >= 0) {
        r.reward += cfg_.collision_penalty;
      } else {
        a.x = fx;
        a.y = fy;
      }
      break;
    case tg_action::left: a.dir = (a.dir + 3) % 4; break;
    case tg_action::right: a.dir = (a.dir + 1) % 4; break;
    case tg_action::pickup: {
      const int idx = front_ok ? s.trash_at(fx, fy) : -1;
      if (idx >= 0 && s.trash[static_cast<std::size_t>(idx)].kind == TrashKind::small &&
          a.load < cfg_.max_load) {
        s.trash[static_cast<std::size_t>(idx)].alive = false;
        ++a.load;
      }
      break;
    }
    case tg_action::putdown:
      if (TrashGridState::is_station(a.x, a.y) && a.load > 0) {
        r.reward += tg_drop_reward(s.t, a.load, cfg_);
        s.recycled += a.load;
        a.load = 0;
        ++a.drops;
      }
      break;
    case tg_action::split: {
      const int idx = front_ok ? s.trash_at(fx, fy) : -1;
      if (idx >= 0 && s.trash[static_cast<std::size_t>(idx)].kind == TrashKind::big) {
        s.trash[static_cast<std::size_t>(idx)].kind = TrashKind::small;
        ++a.splits;
      }
      break;
    }
  }

  if (s.cleared()) r.done = true;
  if (last_in_round()) {
    // Rounds are indexed t = 0..T; round T is the last.
    if (s.t >= s.T) r.done = true;
    ++s.t;
  }

  for (int g = 0; g < tg_subgoal::count; ++g)
    if (tg_subgoal_achieved(agent_id, g, prev, s)) r.achieved_subgoals.push_back(g);
  r.obs = tg_observe(s, agent_id);
  return r;
}

}  // namespace gmah
