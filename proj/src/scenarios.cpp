#include "opacity/scenarios.hpp"

#include <algorithm>
#include <set>

namespace opacity {

SensorModelConfig illustrative_config(double budget) {
  SensorModelConfig cfg;
  cfg.states = {"s0", "s1", "s2", "s3", "s4", "s5", "s6"};
  cfg.transition = Matrix::Zero(7, 7);
  for (int s : {1, 2, 3}) cfg.transition(0, s) = 1.0 / 3.0;
  cfg.transition(1, 4) = 1.0;
  cfg.transition(2, 5) = 1.0;
  cfg.transition(3, 6) = 1.0;
  for (int s : {4, 5, 6}) cfg.transition(s, s) = 1.0;

  cfg.sensors = {{"R", {1}, 0.85, 0.0}, {"G", {3}, 0.85, 0.0}, {"P", {4}, 0.85, 0.0}, {"B", {6}, 0.85, 0.0}};
  cfg.mask_actions = {{"R", {0}}, {"G", {1}}, {"P", {2}}, {"B", {3}}, {"N", {}}};
  cfg.costs.base = {10.0, 10.0, 10.0, 30.0, 0.0};
  cfg.costs.repeat_factor = 0.5;
  cfg.costs.no_mask_cost = 0.0;
  cfg.initial_dist = Vector::Zero(7);
  cfg.initial_dist(0) = 1.0;
  cfg.initial_config = 4;  // N
  cfg.secret_set = {4, 6};
  cfg.horizon = 2;
  cfg.discount = 1.0;
  cfg.budget = budget;
  cfg.mask_visible = true;
  return cfg;
}

HmmSpec build_illustrative(double budget) { return validate(build_sensor_hmm(illustrative_config(budget))); }

MoveDistribution uniform_moves(std::initializer_list<Move> moves) {
  MoveDistribution d{0.0, 0.0, 0.0, 0.0};
  for (Move m : moves) d[static_cast<std::size_t>(m)] += 1.0 / static_cast<double>(moves.size());
  return d;
}

GridworldConfig default_gridworld_config(double detection_prob, double budget) {
  using enum Move;
  GridworldConfig cfg;
  cfg.rows = 6;
  cfg.cols = 6;
  cfg.walls = {17, 19};
  cfg.hazards = {1, 13, 15, 35};
  cfg.secrets = {9, 20, 23};
  cfg.absorbing_cells = {9, 20, 23};
  cfg.slip_prob = 0.8;
  cfg.sensors = {{"A", {3, 4, 9, 10}, detection_prob, 0.0},
                 {"B", {21, 22, 28}, detection_prob, 0.0},
                 {"C", {23, 29, 35}, detection_prob, 0.0},
                 {"D", {6, 7, 8, 12, 13, 14}, detection_prob, 0.0}};
  cfg.mask_costs = {20.0, 25.0, 15.0, 10.0};
  cfg.repeat_factor = 0.5;
  cfg.initial_cells = {12, 30};
  cfg.horizon = 10;
  cfg.discount = 0.97;
  cfg.budget = budget;
  cfg.mask_visible = true;

  // Hand transcription of the goal policy arrows; cells with several arrows
  // mix uniformly.
  auto& p = cfg.robot_policy;
  p[0] = uniform_moves({south});
  p[2] = uniform_moves({south});
  p[3] = uniform_moves({south});
  p[4] = uniform_moves({west});
  p[5] = uniform_moves({south});
  p[6] = uniform_moves({east});
  p[7] = uniform_moves({east});
  p[8] = uniform_moves({east});
  p[10] = uniform_moves({north});
  p[11] = uniform_moves({west});
  p[12] = uniform_moves({north, south});
  p[14] = uniform_moves({north});
  p[16] = uniform_moves({north});
  p[18] = uniform_moves({north});
  p[21] = uniform_moves({west});
  p[22] = uniform_moves({west});
  p[24] = uniform_moves({east});
  p[25] = uniform_moves({east});
  p[26] = uniform_moves({north, east});
  p[27] = uniform_moves({north});
  p[28] = uniform_moves({north});
  p[29] = uniform_moves({north});
  p[30] = uniform_moves({north});
  p[31] = uniform_moves({east});
  p[32] = uniform_moves({north});
  p[33] = uniform_moves({north});
  p[34] = uniform_moves({north});
  return cfg;
}

namespace {

bool contains(const std::vector<std::size_t>& v, std::size_t x) { return std::find(v.begin(), v.end(), x) != v.end(); }

void check_cells(const GridworldConfig& cfg, const std::vector<std::size_t>& cells, const char* what) {
  for (std::size_t c : cells) {
    if (c >= cfg.rows * cfg.cols) throw Error(std::string(what) + " cell " + std::to_string(c) + " is outside the grid");
  }
}

}  // namespace

SensorModelConfig gridworld_sensor_config(const GridworldConfig& cfg) {
  const std::size_t cells = cfg.rows * cfg.cols;
  if (cells == 0) throw Error("gridworld has no cells");
  check_cells(cfg, cfg.walls, "wall");
  check_cells(cfg, cfg.hazards, "hazard");
  check_cells(cfg, cfg.secrets, "secret");
  check_cells(cfg, cfg.absorbing_cells, "absorbing");
  check_cells(cfg, cfg.initial_cells, "initial");
  for (std::size_t c : cfg.walls) {
    if (contains(cfg.hazards, c) || contains(cfg.secrets, c)) throw Error("wall cell " + std::to_string(c) + " overlaps a hazard or secret");
  }
  for (std::size_t c : cfg.hazards) {
    if (contains(cfg.secrets, c)) throw Error("hazard cell " + std::to_string(c) + " is also a secret");
  }
  if (!(cfg.slip_prob > 0.0 && cfg.slip_prob <= 1.0)) throw Error("intended-move probability must lie in (0, 1]");
  if (cfg.mask_costs.size() != cfg.sensors.size()) throw Error("need one masking cost per sensor");
  if (cfg.initial_cells.empty()) throw Error("gridworld needs at least one initial cell");

  const auto R = static_cast<std::ptrdiff_t>(cfg.rows);
  const auto C = static_cast<std::ptrdiff_t>(cfg.cols);
  auto target = [&](std::size_t cell, Move m) -> std::size_t {
    std::ptrdiff_t r = static_cast<std::ptrdiff_t>(cell) / C;
    std::ptrdiff_t c = static_cast<std::ptrdiff_t>(cell) % C;
    switch (m) {
      case Move::north: --r; break;
      case Move::south: ++r; break;
      case Move::east: ++c; break;
      case Move::west: --c; break;
    }
    if (r < 0 || r >= R || c < 0 || c >= C) return cell;
    const auto next = static_cast<std::size_t>(r * C + c);
    return contains(cfg.walls, next) ? cell : next;
  };
  auto laterals = [](Move m) -> std::array<Move, 2> {
    if (m == Move::north || m == Move::south) return {Move::east, Move::west};
    return {Move::north, Move::south};
  };
  auto is_sink = [&](std::size_t c) {
    return contains(cfg.walls, c) || contains(cfg.hazards, c) || contains(cfg.absorbing_cells, c);
  };

  Matrix P = Matrix::Zero(cells, cells);
  for (std::size_t c = 0; c < cells; ++c) {
    if (is_sink(c)) {
      P(c, c) = 1.0;
      continue;
    }
    auto it = cfg.robot_policy.find(c);
    if (it == cfg.robot_policy.end()) continue;  // filled below if unreachable
    const auto& dist = it->second;
    double sum = 0.0;
    for (double w : dist) {
      if (w < 0.0) throw InvalidPolicyRow("robot policy at cell " + std::to_string(c) + " has a negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kRenormalizeTolerance) {
      throw InvalidPolicyRow("robot policy at cell " + std::to_string(c) + " does not sum to 1");
    }
    for (std::size_t m = 0; m < 4; ++m) {
      if (dist[m] == 0.0) continue;
      const Move move = static_cast<Move>(m);
      P(c, target(c, move)) += dist[m] * cfg.slip_prob;
      for (Move side : laterals(move)) P(c, target(c, side)) += dist[m] * (1.0 - cfg.slip_prob) / 2.0;
    }
  }

  // Cells without a policy row are fine only if the robot can never be there.
  std::set<std::size_t> reachable(cfg.initial_cells.begin(), cfg.initial_cells.end());
  std::vector<std::size_t> frontier(cfg.initial_cells.begin(), cfg.initial_cells.end());
  while (!frontier.empty()) {
    const std::size_t c = frontier.back();
    frontier.pop_back();
    for (std::size_t d = 0; d < cells; ++d) {
      if (P(c, d) > 0.0 && reachable.insert(d).second) frontier.push_back(d);
    }
  }
  for (std::size_t c = 0; c < cells; ++c) {
    if (P.row(c).sum() > 0.0) continue;
    if (reachable.count(c) != 0) {
      throw InvalidPolicyRow("no robot policy for reachable cell " + std::to_string(c));
    }
    P(c, c) = 1.0;
  }

  SensorModelConfig sm;
  for (std::size_t c = 0; c < cells; ++c) sm.states.push_back(std::to_string(c));
  sm.transition = P;
  sm.sensors = cfg.sensors;
  for (std::size_t k = 0; k < cfg.sensors.size(); ++k) {
    sm.mask_actions.push_back({cfg.sensors[k].name, {k}});
    sm.costs.base.push_back(cfg.mask_costs[k]);
  }
  sm.mask_actions.push_back({"N", {}});
  sm.costs.base.push_back(0.0);
  sm.costs.repeat_factor = cfg.repeat_factor;
  sm.costs.no_mask_cost = 0.0;
  sm.initial_dist = Vector::Zero(cells);
  for (std::size_t c : cfg.initial_cells) sm.initial_dist(c) += 1.0 / static_cast<double>(cfg.initial_cells.size());
  sm.initial_config = cfg.sensors.size();
  sm.secret_set = cfg.secrets;
  sm.horizon = cfg.horizon;
  sm.discount = cfg.discount;
  sm.budget = cfg.budget;
  sm.mask_visible = cfg.mask_visible;
  return sm;
}

HmmSpec build_gridworld(const GridworldConfig& cfg) { return validate(build_sensor_hmm(gridworld_sensor_config(cfg))); }

namespace {

std::size_t no_mask_action(const HmmSpec& spec) {
  if (!spec.masked_sensors.empty()) {
    for (std::size_t a = 0; a < spec.num_actions(); ++a) {
      if (spec.masked_sensors[a].empty()) return a;
    }
  }
  for (std::size_t a = 0; a < spec.num_actions(); ++a) {
    if (spec.mask_actions[a] == "N") return a;
  }
  throw Error("model has no no-mask action");
}

PolicyParams saturated(const HmmSpec& spec, Conditioning mode, const std::vector<std::size_t>& action_per_state) {
  PolicyParams theta(spec.num_states(), spec.num_actions(), mode);
  for (std::size_t row = 0; row < theta.rows(); ++row) {
    const std::size_t s = mode == Conditioning::augmented ? row / spec.num_actions() : row;
    theta(row, action_per_state[s]) = kSaturatedLogit;
  }
  return theta;
}

}  // namespace

PolicyParams no_masking_policy(const HmmSpec& spec, Conditioning mode) {
  return saturated(spec, mode, std::vector<std::size_t>(spec.num_states(), no_mask_action(spec)));
}

PolicyParams final_state_masking_policy(const HmmSpec& spec, Conditioning mode) {
  if (spec.sensors.empty() || spec.masked_sensors.empty()) {
    throw Error("final-state masking needs sensor metadata");
  }
  const std::size_t none = no_mask_action(spec);
  // Sensor covering each secret state, if any.
  std::map<std::size_t, std::size_t> cover;
  for (std::size_t g : spec.secret_set) {
    std::vector<std::size_t> covering;
    for (std::size_t k = 0; k < spec.sensors.size(); ++k) {
      if (contains(spec.sensors[k].coverage, g)) covering.push_back(k);
    }
    if (covering.size() > 1) {
      throw AmbiguousSecretCoverage("secret state '" + spec.states[g] + "' is covered by several sensors");
    }
    if (!covering.empty()) cover[g] = covering.front();
  }
  // Action that masks exactly one given sensor.
  auto masking_action = [&](std::size_t sensor) {
    for (std::size_t a = 0; a < spec.num_actions(); ++a) {
      if (spec.masked_sensors[a].size() == 1 && spec.masked_sensors[a].front() == sensor) return a;
    }
    throw Error("no mask action masks sensor '" + spec.sensors[sensor].name + "' alone");
  };

  std::vector<std::size_t> choice(spec.num_states(), none);
  for (std::size_t s = 0; s < spec.num_states(); ++s) {
    std::size_t best = spec.sensors.size();
    for (const auto& [g, sensor] : cover) {
      if (spec.transition(s, g) > 0.0) best = std::min(best, sensor);
    }
    if (best < spec.sensors.size()) choice[s] = masking_action(best);
  }
  return saturated(spec, mode, choice);
}

}  // namespace opacity
