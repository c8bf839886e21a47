#pragma once

#include <optional>
#include <string>
#include <vector>

#include "opacity/model.hpp"
#include "opacity/scenarios.hpp"

namespace opacity {

/// Values that replace the ones in a scenario file.
struct ScenarioOverrides {
  std::optional<double> beta;     // detection probability of every sensor
  std::optional<double> gamma;    // discount
  std::optional<double> epsilon;  // budget
};

/// Optional optimizer settings shipped with a scenario.
struct OptimizerHints {
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> batches_per_iter;
  std::optional<double> eta;
  std::optional<double> kappa;
  std::optional<double> lambda0;
};

struct Scenario {
  std::string name;
  HmmSpec spec;
  OptimizerHints optimizer;
  std::optional<GridworldConfig> grid;  // set for gridworld scenarios
  std::vector<std::string> warnings;
};

/// Parses a YAML scenario. Two layouts are accepted: an explicit state list
/// with `transitions`, or a `gridworld` section whose states are grid cells.
/// Errors are reported as ParseError naming the line and section.
Scenario parse_scenario(const std::string& text, const std::string& source = "scenario",
                        const ScenarioOverrides& overrides = {});

/// Reads `path`; when it does not exist, `path` + ".yaml" is tried.
Scenario load_scenario(const std::string& path, const ScenarioOverrides& overrides = {});

/// Path that load_scenario would open, or empty if neither candidate exists.
std::string resolve_scenario_path(const std::string& path);

}  // namespace opacity
