#include "opacity/scenario_io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace opacity {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& section, const std::string& what) const {
    const auto mark = node.Mark();
    const std::size_t line = mark.is_null() ? 0 : static_cast<std::size_t>(mark.line) + 1;
    throw ParseError(source_, line, "[" + section + "] " + what);
  }

  YAML::Node require(const YAML::Node& parent, const char* key, const std::string& section) const {
    YAML::Node n = parent[key];
    if (!n) fail(parent, section, std::string("missing key '") + key + "'");
    return n;
  }

  std::string str(const YAML::Node& n, const std::string& section) const {
    if (!n.IsScalar()) fail(n, section, "expected a scalar");
    return n.Scalar();
  }

  // Accepts decimals and fractions such as "1/3".
  double number(const YAML::Node& n, const std::string& section) const {
    const std::string s = str(n, section);
    auto parse = [&](std::string_view t) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || ptr != t.data() + t.size()) fail(n, section, "bad number '" + s + "'");
      return v;
    };
    const auto slash = s.find('/');
    if (slash == std::string::npos) return parse(s);
    const double den = parse(std::string_view(s).substr(slash + 1));
    if (den == 0.0) fail(n, section, "zero denominator in '" + s + "'");
    return parse(std::string_view(s).substr(0, slash)) / den;
  }

  std::size_t count(const YAML::Node& n, const std::string& section) const {
    const double v = number(n, section);
    if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      fail(n, section, "expected a non-negative integer");
    }
    return static_cast<std::size_t>(v);
  }

  bool boolean(const YAML::Node& n, const std::string& section) const {
    const std::string s = str(n, section);
    if (s == "true" || s == "yes") return true;
    if (s == "false" || s == "no") return false;
    fail(n, section, "expected true or false, got '" + s + "'");
  }

  void sequence(const YAML::Node& n, const std::string& section) const {
    if (!n.IsSequence()) fail(n, section, "expected a list");
  }

  void map(const YAML::Node& n, const std::string& section) const {
    if (!n.IsMap()) fail(n, section, "expected a table");
  }

  std::vector<std::size_t> counts(const YAML::Node& n, const std::string& section) const {
    sequence(n, section);
    std::vector<std::size_t> out;
    for (const auto& e : n) out.push_back(count(e, section));
    return out;
  }

 private:
  std::string source_;
};

std::size_t lookup(const Reader& rd, const YAML::Node& n, const std::vector<std::string>& names,
                   const std::string& section, const char* kind) {
  const std::string name = rd.str(n, section);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  rd.fail(n, section, std::string("unknown ") + kind + " '" + name + "'");
}

struct Problem {
  std::size_t horizon = 1;
  double discount = 1.0;
  double budget = 0.0;
  bool mask_visible = true;
};

Problem read_problem(const Reader& rd, const YAML::Node& root) {
  const std::string sec = "problem";
  const YAML::Node n = rd.require(root, "problem", sec);
  rd.map(n, sec);
  Problem p;
  p.horizon = rd.count(rd.require(n, "horizon", sec), sec);
  if (n["discount"]) p.discount = rd.number(n["discount"], sec);
  p.budget = rd.number(rd.require(n, "budget", sec), sec);
  if (n["mask_visible"]) p.mask_visible = rd.boolean(n["mask_visible"], sec);
  if (p.horizon == 0) rd.fail(n, sec, "horizon must be positive");
  if (!(p.discount > 0.0 && p.discount <= 1.0)) rd.fail(n, sec, "discount must lie in (0, 1]");
  return p;
}

// Sensors whose coverage is resolved by `resolve`.
template <class Resolve>
std::vector<Sensor> read_sensors(const Reader& rd, const YAML::Node& root, Resolve resolve) {
  const std::string sec = "sensors";
  std::vector<Sensor> out;
  const YAML::Node n = root["sensors"];
  if (!n) return out;
  rd.sequence(n, sec);
  for (const auto& e : n) {
    rd.map(e, sec);
    Sensor s;
    s.name = rd.str(rd.require(e, "name", sec), sec);
    const YAML::Node cov = rd.require(e, "coverage", sec);
    rd.sequence(cov, sec);
    for (const auto& c : cov) s.coverage.push_back(resolve(c, sec));
    s.detection_prob = rd.number(rd.require(e, "detection_prob", sec), sec);
    if (e["false_positive_prob"]) s.false_positive_prob = rd.number(e["false_positive_prob"], sec);
    if (s.detection_prob < 0.0 || s.detection_prob > 1.0 || s.false_positive_prob < 0.0 ||
        s.false_positive_prob > 1.0) {
      rd.fail(e, sec, "probabilities of sensor '" + s.name + "' must lie in [0, 1]");
    }
    for (const auto& prev : out) {
      if (prev.name == s.name) rd.fail(e, sec, "duplicate sensor '" + s.name + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> sensor_names(const std::vector<Sensor>& sensors) {
  std::vector<std::string> names;
  for (const auto& s : sensors) names.push_back(s.name);
  return names;
}

// Base cost per sensor (gridworld) or per mask action (explicit layout).
std::vector<double> read_base_costs(const Reader& rd, const YAML::Node& costs, const std::vector<std::string>& keys,
                                    MaskCostSpec& spec) {
  const std::string sec = "mask_costs";
  rd.map(costs, sec);
  const YAML::Node base = rd.require(costs, "base", sec);
  rd.map(base, sec);
  std::vector<double> out(keys.size(), 0.0);
  for (const auto& kv : base) {
    const std::size_t i = lookup(rd, kv.first, keys, sec, "mask action");
    out[i] = rd.number(kv.second, sec);
    if (out[i] < 0.0) rd.fail(kv.second, sec, "negative cost");
  }
  if (costs["repeat_factor"]) spec.repeat_factor = rd.number(costs["repeat_factor"], sec);
  if (costs["no_mask_cost"]) spec.no_mask_cost = rd.number(costs["no_mask_cost"], sec);
  if (spec.repeat_factor < 0.0 || spec.no_mask_cost < 0.0) rd.fail(costs, sec, "negative cost");
  return out;
}

SensorModelConfig read_explicit(const Reader& rd, const YAML::Node& root) {
  SensorModelConfig cfg;
  {
    const std::string sec = "states";
    const YAML::Node n = rd.require(root, "states", sec);
    rd.sequence(n, sec);
    for (const auto& e : n) cfg.states.push_back(rd.str(e, sec));
    if (cfg.states.empty()) rd.fail(n, sec, "no states");
  }
  const std::size_t S = cfg.states.size();
  auto state = [&](const YAML::Node& n, const std::string& sec) { return lookup(rd, n, cfg.states, sec, "state"); };

  {
    const std::string sec = "transitions";
    const YAML::Node n = rd.require(root, "transitions", sec);
    rd.sequence(n, sec);
    cfg.transition = Matrix::Zero(S, S);
    for (const auto& e : n) {
      if (!e.IsSequence() || e.size() != 3) rd.fail(e, sec, "expected [from, to, prob]");
      const double p = rd.number(e[2], sec);
      if (p < 0.0) rd.fail(e, sec, "negative probability");
      cfg.transition(state(e[0], sec), state(e[1], sec)) += p;
    }
  }

  cfg.sensors = read_sensors(rd, root, state);
  const auto sensors = sensor_names(cfg.sensors);

  std::vector<std::string> actions;
  {
    const std::string sec = "mask_actions";
    const YAML::Node n = rd.require(root, "mask_actions", sec);
    rd.sequence(n, sec);
    for (const auto& e : n) {
      rd.map(e, sec);
      MaskActionSpec a;
      a.name = rd.str(rd.require(e, "name", sec), sec);
      if (e["masks"]) {
        rd.sequence(e["masks"], sec);
        for (const auto& m : e["masks"]) a.masked.push_back(lookup(rd, m, sensors, sec, "sensor"));
      }
      for (const auto& prev : actions) {
        if (prev == a.name) rd.fail(e, sec, "duplicate mask action '" + a.name + "'");
      }
      actions.push_back(a.name);
      cfg.mask_actions.push_back(std::move(a));
    }
    if (actions.empty()) rd.fail(n, sec, "no mask actions");
  }

  if (root["mask_costs"]) {
    cfg.costs.base = read_base_costs(rd, root["mask_costs"], actions, cfg.costs);
  } else {
    cfg.costs.base.assign(actions.size(), 0.0);
  }

  {
    const std::string sec = "initial";
    const YAML::Node n = rd.require(root, "initial", sec);
    rd.map(n, sec);
    const YAML::Node dist = rd.require(n, "dist", sec);
    rd.map(dist, sec);
    cfg.initial_dist = Vector::Zero(S);
    for (const auto& kv : dist) cfg.initial_dist(state(kv.first, sec)) += rd.number(kv.second, sec);
    cfg.initial_config = lookup(rd, rd.require(n, "config", sec), actions, sec, "mask action");
  }

  if (root["secret"]) {
    const std::string sec = "secret";
    rd.sequence(root["secret"], sec);
    for (const auto& e : root["secret"]) cfg.secret_set.push_back(state(e, sec));
  }
  return cfg;
}

MoveDistribution read_moves(const Reader& rd, const YAML::Node& n, const std::string& sec) {
  auto move = [&](const YAML::Node& m) -> std::size_t {
    const std::string s = rd.str(m, sec);
    if (s == "N") return 0;
    if (s == "S") return 1;
    if (s == "E") return 2;
    if (s == "W") return 3;
    rd.fail(m, sec, "unknown move '" + s + "' (expected N, S, E or W)");
  };
  MoveDistribution d{0.0, 0.0, 0.0, 0.0};
  if (n.IsScalar()) {
    d[move(n)] = 1.0;
  } else if (n.IsSequence()) {
    if (n.size() == 0) rd.fail(n, sec, "empty move list");
    for (const auto& m : n) d[move(m)] += 1.0 / static_cast<double>(n.size());
  } else {
    for (const auto& kv : n) {
      const double w = rd.number(kv.second, sec);
      if (w < 0.0) rd.fail(kv.second, sec, "negative move weight");
      d[move(kv.first)] += w;
    }
  }
  return d;
}

GridworldConfig read_gridworld(const Reader& rd, const YAML::Node& root) {
  const std::string sec = "gridworld";
  const YAML::Node g = root["gridworld"];
  rd.map(g, sec);
  GridworldConfig cfg;
  cfg.rows = rd.count(rd.require(g, "rows", sec), sec);
  cfg.cols = rd.count(rd.require(g, "cols", sec), sec);
  const std::size_t cells = cfg.rows * cfg.cols;
  if (cells == 0) rd.fail(g, sec, "grid has no cells");
  auto cell = [&](const YAML::Node& n, const std::string& s) {
    const std::size_t c = rd.count(n, s);
    if (c >= cells) rd.fail(n, s, "cell " + std::to_string(c) + " is outside the grid");
    return c;
  };
  auto cell_list = [&](const char* key) {
    std::vector<std::size_t> out;
    if (!g[key]) return out;
    rd.sequence(g[key], sec);
    for (const auto& e : g[key]) out.push_back(cell(e, sec));
    return out;
  };
  cfg.walls = cell_list("walls");
  cfg.hazards = cell_list("hazards");
  cfg.secrets = cell_list("secrets");
  cfg.absorbing_cells = cell_list("absorbing");
  cfg.initial_cells = cell_list("initial_cells");
  if (g["slip_prob"]) cfg.slip_prob = rd.number(g["slip_prob"], sec);

  const std::string psec = "gridworld.robot_policy";
  const YAML::Node pol = rd.require(g, "robot_policy", psec);
  rd.map(pol, psec);
  for (const auto& kv : pol) cfg.robot_policy[cell(kv.first, psec)] = read_moves(rd, kv.second, psec);

  cfg.sensors = read_sensors(rd, root, cell);
  cfg.mask_costs.assign(cfg.sensors.size(), 0.0);
  if (root["mask_costs"]) {
    MaskCostSpec spec;
    cfg.mask_costs = read_base_costs(rd, root["mask_costs"], sensor_names(cfg.sensors), spec);
    cfg.repeat_factor = spec.repeat_factor;
  }
  return cfg;
}

OptimizerHints read_optimizer(const Reader& rd, const YAML::Node& root) {
  OptimizerHints h;
  const YAML::Node n = root["optimizer"];
  if (!n) return h;
  const std::string sec = "optimizer";
  rd.map(n, sec);
  for (const auto& kv : n) {
    const std::string key = rd.str(kv.first, sec);
    if (key == "iterations") {
      h.iterations = rd.count(kv.second, sec);
    } else if (key == "batch_size") {
      h.batch_size = rd.count(kv.second, sec);
    } else if (key == "batches_per_iter") {
      h.batches_per_iter = rd.count(kv.second, sec);
    } else if (key == "eta") {
      h.eta = rd.number(kv.second, sec);
    } else if (key == "kappa") {
      h.kappa = rd.number(kv.second, sec);
    } else if (key == "lambda0") {
      h.lambda0 = rd.number(kv.second, sec);
    } else {
      rd.fail(kv.first, sec, "unknown key '" + key + "'");
    }
  }
  return h;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source, const ScenarioOverrides& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(source, static_cast<std::size_t>(e.mark.line) + 1, e.msg);
  }
  Reader rd(source);
  if (!root.IsMap()) rd.fail(root, "top level", "expected a table of sections");

  Scenario sc;
  sc.name = root["name"] ? rd.str(root["name"], "name") : std::filesystem::path(source).stem().string();
  const Problem problem = read_problem(rd, root);
  sc.optimizer = read_optimizer(rd, root);

  SensorModelConfig cfg;
  try {
    if (root["gridworld"]) {
      GridworldConfig grid = read_gridworld(rd, root);
      grid.horizon = problem.horizon;
      grid.discount = problem.discount;
      grid.budget = problem.budget;
      grid.mask_visible = problem.mask_visible;
      if (overrides.beta) {
        for (auto& s : grid.sensors) s.detection_prob = *overrides.beta;
      }
      if (overrides.gamma) grid.discount = *overrides.gamma;
      if (overrides.epsilon) grid.budget = *overrides.epsilon;
      cfg = gridworld_sensor_config(grid);
      sc.grid = std::move(grid);
    } else {
      cfg = read_explicit(rd, root);
      cfg.horizon = problem.horizon;
      cfg.discount = problem.discount;
      cfg.budget = problem.budget;
      cfg.mask_visible = problem.mask_visible;
      if (overrides.beta) {
        for (auto& s : cfg.sensors) s.detection_prob = *overrides.beta;
      }
      if (overrides.gamma) cfg.discount = *overrides.gamma;
      if (overrides.epsilon) cfg.budget = *overrides.epsilon;
    }
    sc.spec = validate(build_sensor_hmm(cfg), &sc.warnings);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    // Semantic problems found while assembling the model.
    throw ParseError(source, 0, e.what());
  }
  return sc;
}

std::string resolve_scenario_path(const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::is_regular_file(path, ec)) return path;
  for (const char* ext : {".yaml", ".yml"}) {
    if (fs::is_regular_file(path + ext, ec)) return path + ext;
  }
  return {};
}

Scenario load_scenario(const std::string& path, const ScenarioOverrides& overrides) {
  const std::string resolved = resolve_scenario_path(path);
  if (resolved.empty()) throw ParseError(path, 0, "no such scenario file");
  std::ifstream in(resolved);
  if (!in) throw ParseError(resolved, 0, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), resolved, overrides);
}

}  // namespace opacity
