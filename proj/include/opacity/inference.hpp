#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "opacity/model.hpp"
#include "opacity/policy.hpp"

namespace opacity {

using ObservationSeq = std::vector<std::size_t>;

/// Floor below which an observation sequence counts as unrealizable.
inline constexpr double kProbabilityFloor = 1e-300;

/// A_o^θ = T_θ · diag(B[o, ·]) for every observation symbol.
struct ObservableOperatorSet {
  std::vector<Matrix> ops;

  /// ∂A_o^θ/∂θ_p = (∂T_θ/∂θ_p) · diag(B[o, ·]).
  Matrix derivative(const InducedChain& chain, const Matrix& B, std::size_t o, std::size_t p) const;
};

ObservableOperatorSet observable_operators(const InducedChain& chain, const Matrix& B);

/// The observer's view of a masked system: induced chain, observation
/// matrix and observable operators, built once per θ.
///
/// This is the dense reference route. Its cost grows with N² per step and
/// with the parameter count per gradient, so it is meant for small models and
/// for cross-checking the structured kernels.
class ObserverHmm {
 public:
  ObserverHmm(const MaskMdp& mdp, const PolicyParams& theta);

  const MaskMdp& mdp() const { return *mdp_; }
  const PolicyParams& theta() const { return theta_; }
  const InducedChain& chain() const { return chain_; }
  const Matrix& B() const { return B_; }
  const ObservableOperatorSet& operators() const { return ops_; }
  std::size_t num_params() const { return theta_.size(); }

 private:
  const MaskMdp* mdp_;
  PolicyParams theta_;
  InducedChain chain_;
  Matrix B_;
  ObservableOperatorSet ops_;
};

struct SecretPosterior {
  double p_secret = 0.0;  // 𝐏_θ(w_T = 1 | y)
  double p_obs = 0.0;     // 𝐏_θ(y)
  Vector grad_p_secret;
  Vector grad_p_obs;

  double p_public() const { return 1.0 - p_secret; }
  Vector grad_p_public() const { return -grad_p_secret; }
};

/// 𝐏_θ(y) = 1ᵀ A_{o_T} ⋯ A_{o_1} μ0.
double sequence_probability(const ObserverHmm& hmm, std::span<const std::size_t> y);

/// Vector over i of 𝐏_θ(o_{1:t}, Z_{t+1} = i) = 1_iᵀ A_{o_t} ⋯ A_{o_1} μ0.
Vector joint_state_distribution(const ObserverHmm& hmm, std::span<const std::size_t> prefix);
double joint_state_probability(const ObserverHmm& hmm, std::span<const std::size_t> prefix, std::size_t i);

/// ∇_θ 𝐏_θ(y), using cached prefix vectors and suffix row vectors so the
/// work is linear in the sequence length.
Vector sequence_probability_gradient(const ObserverHmm& hmm, std::span<const std::size_t> y);

/// Posterior of the final state lying in the secret set. Throws
/// ZeroProbabilityObservation when 𝐏_θ(y) is below kProbabilityFloor.
SecretPosterior secret_posterior(const ObserverHmm& hmm, std::span<const std::size_t> y,
                                 bool with_gradient = false);

/// ∇_θ 𝐏_θ(w_T = 1 | y) by the quotient rule on N(θ, g) = 𝐏_θ(Z_T = g, o_{1:T−1}).
Vector secret_posterior_gradient(const ObserverHmm& hmm, std::span<const std::size_t> y);

}  // namespace opacity
