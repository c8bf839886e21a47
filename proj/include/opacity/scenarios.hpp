#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "opacity/model.hpp"
#include "opacity/policy.hpp"

namespace opacity {

/// The 7-state running example: s0 branches uniformly to s1/s2/s3, which
/// lead deterministically to the absorbing s4/s5/s6. Sensors R, G, P, B
/// watch s1, s3, s4, s6 with false-negative rate 0.15.
HmmSpec build_illustrative(double budget = 60.0);
SensorModelConfig illustrative_config(double budget = 60.0);

enum class Move : std::size_t { north = 0, south = 1, east = 2, west = 3 };

/// Distribution over {N, S, E, W}.
using MoveDistribution = std::array<double, 4>;

/// Stochastic gridworld with a fixed robot goal policy. Cells are numbered
/// row-major from the top-left corner, so north of cell c is c − cols.
struct GridworldConfig {
  std::size_t rows = 6;
  std::size_t cols = 6;
  std::vector<std::size_t> walls;
  std::vector<std::size_t> hazards;          // absorbing
  std::vector<std::size_t> secrets;
  std::vector<std::size_t> absorbing_cells;  // further sinks, e.g. goal cells
  double slip_prob = 0.8;                    // probability of the intended move
  std::vector<Sensor> sensors;               // coverage given as cell ids
  std::vector<double> mask_costs;            // φ per sensor
  double repeat_factor = 0.5;
  std::map<std::size_t, MoveDistribution> robot_policy;
  std::vector<std::size_t> initial_cells;    // uniform weight
  std::size_t horizon = 10;
  double discount = 1.0;
  double budget = 70.0;
  bool mask_visible = true;
};

/// Uniform mixture over the listed moves.
MoveDistribution uniform_moves(std::initializer_list<Move> moves);

/// The facility layout with a hand transcription of the robot's goal
/// policy. The shipped robot policy is an approximate transcription, not exact data.
GridworldConfig default_gridworld_config(double detection_prob = 0.85, double budget = 70.0);

/// Robot dynamics: intended cell with probability p, each lateral cell with
/// (1 − p)/2; blocked moves stay put. Throws InvalidPolicyRow for reachable
/// cells without a policy row that are not sinks.
HmmSpec build_gridworld(const GridworldConfig& cfg);
SensorModelConfig gridworld_sensor_config(const GridworldConfig& cfg);

/// Saturated parameters choosing the no-mask action with probability
/// above 1 − 1e-9 everywhere.
PolicyParams no_masking_policy(const HmmSpec& spec, Conditioning mode = Conditioning::augmented);

/// Deterministic reference mask: at state s, if a secret state is reachable
/// in one step, mask the sensor covering it (lowest sensor index on ties),
/// otherwise choose no masking.
PolicyParams final_state_masking_policy(const HmmSpec& spec, Conditioning mode = Conditioning::augmented);

/// Logit gap used for saturated deterministic policies.
inline constexpr double kSaturatedLogit = 30.0;

}  // namespace opacity
