#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "opacity/errors.hpp"

namespace opacity {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerance within which input distributions are silently renormalized.
inline constexpr double kRenormalizeTolerance = 1e-9;

struct Sensor {
  std::string name;
  std::vector<std::size_t> coverage;  // state indices
  double detection_prob = 1.0;
  double false_positive_prob = 0.0;
};

/// Hidden Markov model with a controllable emission function.
///
/// Augmented indices z = s * |Σ| + σ are used for everything keyed by
/// (state, sensor configuration): `emission` is (|S|·|Σ|) × |O| with row z
/// holding E(· | s, σ), and `mask_cost` is (|S|·|Σ|) × |Σ| with entry
/// [z, σ'] = C(s, σ, σ').
struct HmmSpec {
  std::vector<std::string> states;
  Matrix transition;  // [s, s'] = P(s' | s)
  std::vector<std::string> observations;
  std::vector<std::string> mask_actions;
  Matrix emission;
  Vector initial_dist;
  std::size_t initial_config = 0;
  std::vector<std::size_t> secret_set;
  Matrix mask_cost;
  std::size_t horizon = 1;  // number of transitions; trajectories visit horizon + 1 states
  double discount = 1.0;
  double budget = 0.0;
  bool mask_visible = true;

  // Optional sensor metadata. Present for models assembled from sensors;
  // required by the final-state masking baseline.
  std::vector<Sensor> sensors;
  std::vector<std::vector<std::size_t>> masked_sensors;  // per mask action

  std::size_t num_states() const { return states.size(); }
  std::size_t num_actions() const { return mask_actions.size(); }
  std::size_t num_observations() const { return observations.size(); }
  std::size_t aug_index(std::size_t s, std::size_t sigma) const { return s * num_actions() + sigma; }
};

/// Checks every HmmSpec invariant and returns a copy whose distributions are
/// exactly renormalized. Rows off by more than kRenormalizeTolerance are
/// rejected. Non-fatal findings (an empty secret set) go to `warnings`.
HmmSpec validate(HmmSpec spec, std::vector<std::string>* warnings = nullptr);

/// Masking MDP on the augmented state space Z = S × Σ.
class MaskMdp {
 public:
  using Successor = std::pair<std::size_t, double>;

  std::size_t size() const { return num_states_ * num_actions_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_observations() const { return num_observations_; }

  std::size_t index(std::size_t s, std::size_t sigma) const { return s * num_actions_ + sigma; }
  std::size_t state_of(std::size_t z) const { return z / num_actions_; }
  std::size_t config_of(std::size_t z) const { return z % num_actions_; }

  /// 𝐏(z' | z, σ°).
  double transition(std::size_t z_next, std::size_t z, std::size_t action) const;
  /// Dense N×N matrix with [z', z] = 𝐏(z' | z, action) (column-stochastic).
  Matrix transition_matrix(std::size_t action) const;

  const Matrix& state_transition() const { return state_transition_; }
  const std::vector<Successor>& successors(std::size_t s) const { return successors_[s]; }
  const Matrix& emission() const { return emission_; }  // N × |O|, row z = 𝐄(· | z)
  double emission(std::size_t o, std::size_t z) const { return emission_(z, o); }
  const Matrix& cost() const { return cost_; }  // N × |Σ|
  const Vector& initial() const { return initial_; }
  bool is_secret(std::size_t z) const { return secret_[z]; }
  const std::vector<std::size_t>& secret_states() const { return secret_aug_; }
  bool has_secret() const { return !secret_aug_.empty(); }

  std::size_t horizon() const { return horizon_; }
  /// Observations per sequence (horizon + 1).
  std::size_t sequence_length() const { return horizon_ + 1; }
  double discount() const { return discount_; }
  double budget() const { return budget_; }

  const std::vector<std::string>& state_labels() const { return state_labels_; }
  const std::vector<std::string>& action_labels() const { return action_labels_; }
  const std::vector<std::string>& observation_labels() const { return observation_labels_; }
  std::string aug_label(std::size_t z) const;

 private:
  friend MaskMdp build_mask_mdp(const HmmSpec& spec);

  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::size_t num_observations_ = 0;
  Matrix state_transition_;
  std::vector<std::vector<Successor>> successors_;
  Matrix emission_;
  Matrix cost_;
  Vector initial_;
  std::vector<bool> secret_;
  std::vector<std::size_t> secret_aug_;
  std::size_t horizon_ = 1;
  double discount_ = 1.0;
  double budget_ = 0.0;
  std::vector<std::string> state_labels_;
  std::vector<std::string> action_labels_;
  std::vector<std::string> observation_labels_;
};

/// Builds the augmented product. `spec` must already be validated.
MaskMdp build_mask_mdp(const HmmSpec& spec);

/// Observation matrix B with B[o, z] = 𝐄(o | z).
Matrix emission_matrix(const MaskMdp& mdp);

// ---------------------------------------------------------------------------
// Sensor-network assembly shared by the scenario builders and the file loader.

struct MaskActionSpec {
  std::string name;
  std::vector<std::size_t> masked;  // indices into SensorModelConfig::sensors
};

struct MaskCostSpec {
  std::vector<double> base;  // φ per mask action; ignored for the no-mask action
  double repeat_factor = 0.5;
  double no_mask_cost = 0.0;
};

struct SensorModelConfig {
  std::vector<std::string> states;
  Matrix transition;
  std::vector<Sensor> sensors;
  std::vector<MaskActionSpec> mask_actions;
  MaskCostSpec costs;
  Vector initial_dist;
  std::size_t initial_config = 0;
  std::vector<std::size_t> secret_set;
  std::size_t horizon = 1;
  double discount = 1.0;
  double budget = 0.0;
  bool mask_visible = true;
};

/// Derives emissions and costs from a sensor network.
///
/// Readings are the null symbol "0" or a single sensor label. Unmasked sensors
/// are polled in declaration order and the first that fires is reported; a
/// masked sensor never fires. When masks are visible each observation is the
/// pair (reading, current configuration), labelled "reading|config".
///
/// Cost: C(s, σ, σ') = no_mask_cost if σ' masks nothing, φ(σ')·repeat_factor
/// if σ' = σ, φ(σ') otherwise.
HmmSpec build_sensor_hmm(const SensorModelConfig& cfg);

}  // namespace opacity
