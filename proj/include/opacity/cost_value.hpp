#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "opacity/inference.hpp"
#include "opacity/model.hpp"
#include "opacity/policy.hpp"

namespace opacity {

/// One run of the masked system. With horizon T there are T + 1 states and
/// observations and T masking decisions; costs[t] = 𝒞(states[t], actions[t]).
struct Trajectory {
  std::vector<std::size_t> states;  // augmented indices
  std::vector<std::size_t> actions;
  ObservationSeq observations;
  std::vector<double> costs;
  std::vector<double> log_probs;  // log π_θ(actions[t] | states[t])

  double discounted_cost(double gamma) const;
};

/// Draws n i.i.d. trajectories of the model's horizon. Trajectory i uses its
/// own stream derived from (seed, i), so the batch does not depend on the
/// thread count.
std::vector<Trajectory> sample_trajectories(const MaskMdp& mdp, const PolicyParams& theta, std::size_t n,
                                            std::uint64_t seed);

std::vector<ObservationSeq> observation_sequences(std::span<const Trajectory> batch);

/// Expected discounted masking cost Σ_{t<T} γ^t 𝔼[𝒞(Z_t, Σ_{t+1})] by backward induction.
double exact_value(const MaskMdp& mdp, const PolicyParams& theta);

/// Analytic ∇_θ of exact_value (finite-horizon policy-gradient identity).
Vector exact_value_gradient(const MaskMdp& mdp, const PolicyParams& theta);

struct ValueEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo mean of the discounted trajectory cost.
ValueEstimate sampled_value(const MaskMdp& mdp, std::span<const Trajectory> batch);

/// REINFORCE with reward-to-go: (1/n) Σ Σ_t ∇log π(σ'_t | z_t) · Σ_{k≥t} γ^k c_k.
/// `mean_baseline` subtracts the batch mean of each step's reward-to-go.
Vector reinforce_value_gradient(const MaskMdp& mdp, const PolicyParams& theta, std::span<const Trajectory> batch,
                                bool mean_baseline = false);

/// Debug export: one line per trajectory.
void write_batch(std::ostream& out, const MaskMdp& mdp, std::span<const Trajectory> batch);
std::vector<Trajectory> read_batch(std::istream& in, const MaskMdp& mdp, const std::string& source = "batch");

}  // namespace opacity
