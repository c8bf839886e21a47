#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "opacity/model.hpp"

namespace opacity {

/// Which part of the augmented state the softmax mask conditions on.
enum class Conditioning {
  augmented,   // θ row per (s, σ_prev)
  state_only,  // θ row per s, shared by every σ_prev
};

const char* to_string(Conditioning mode);
Conditioning conditioning_from_string(const std::string& name);

/// Softmax mask parameters. Stored row-major: entry (row, action) lives at
/// row * num_actions + action, and gradients use the same flat layout.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(std::size_t num_states, std::size_t num_actions, Conditioning mode);

  /// All-zero (uniform) parameters shaped for `mdp`.
  static PolicyParams zeros(const MaskMdp& mdp, Conditioning mode = Conditioning::augmented);

  Conditioning mode() const { return mode_; }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t rows() const;
  std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }

  /// Parameter row that governs augmented state z.
  std::size_t row_of(std::size_t z) const { return mode_ == Conditioning::augmented ? z : z / num_actions_; }
  std::size_t param_index(std::size_t row, std::size_t action) const { return row * num_actions_ + action; }

  double operator()(std::size_t row, std::size_t action) const { return theta_(param_index(row, action)); }
  double& operator()(std::size_t row, std::size_t action) { return theta_(param_index(row, action)); }

  const Vector& values() const { return theta_; }
  Vector& values() { return theta_; }

  bool all_finite() const { return theta_.allFinite(); }
  bool same_shape(const PolicyParams& other) const;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  Conditioning mode_ = Conditioning::augmented;
  Vector theta_;
};

/// π_θ(· | z), computed with max-subtraction.
Vector action_distribution(const PolicyParams& theta, std::size_t z);

/// N × |Σ| table of π_θ(σ | z) for every augmented state.
Matrix policy_table(const PolicyParams& theta);

/// One column of ∂T_θ/∂θ_p; every other column is zero.
struct DerivativeColumn {
  std::size_t column;
  Vector values;
};

/// Observer-side chain induced by a mask. T[i, j] = 𝐏_θ(Z_{t+1} = i | Z_t = j).
struct InducedChain {
  Matrix T;
  // d_T[p] lists the non-zero columns of ∂T_θ/∂θ_p.
  std::vector<std::vector<DerivativeColumn>> d_T;

  Matrix dense_derivative(std::size_t p) const;
};

InducedChain induced_transition(const PolicyParams& theta, const MaskMdp& mdp, bool with_derivatives = true);

std::vector<std::vector<DerivativeColumn>> transition_gradient(const PolicyParams& theta, const MaskMdp& mdp);

/// ∇_θ log π_θ(action | z) as a full-length parameter vector.
Vector log_prob_gradient(const PolicyParams& theta, std::size_t z, std::size_t action);

/// Policy file: one line per parameter row giving its labels, the raw θ row
/// and the implied action probabilities. θ is written in shortest
/// round-trip form so reading it back is bit-exact.
void write_policy(std::ostream& out, const PolicyParams& theta, const MaskMdp& mdp);
PolicyParams read_policy(std::istream& in, const MaskMdp& mdp, const std::string& source = "policy");

}  // namespace opacity
