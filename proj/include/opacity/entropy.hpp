#pragma once

#include <cstddef>
#include <span>

#include "opacity/inference.hpp"
#include "opacity/model.hpp"
#include "opacity/policy.hpp"

namespace opacity {

/// Exact sums over O^{T+1} are refused beyond this many sequences.
inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

enum class EstimateMode { exact, sampled };

/// H(W_T | Y; θ) in bits.
struct EntropyEstimate {
  double value = 0.0;
  EstimateMode mode = EstimateMode::exact;
  std::size_t sample_count = 0;  // 0 for exact
  double std_error = 0.0;        // sampled only
};

bool enumeration_feasible(const MaskMdp& mdp, std::size_t cap = kDefaultEnumerationCap);

/// Full enumeration of H(W_T | Y; θ) = −Σ_y Σ_w 𝐏(w, y) log₂ 𝐏(w | y).
EntropyEstimate exact_conditional_entropy(const MaskMdp& mdp, const PolicyParams& theta,
                                          std::size_t cap = kDefaultEnumerationCap);

/// Exact gradient: the per-sequence gradient terms weighted by 𝐏_θ(y).
Vector exact_entropy_gradient(const MaskMdp& mdp, const PolicyParams& theta,
                              std::size_t cap = kDefaultEnumerationCap);

/// −(1/V) Σ_v Σ_w 𝐏(w | y_v) log₂ 𝐏(w | y_v) over on-policy samples.
EntropyEstimate sampled_conditional_entropy(const MaskMdp& mdp, const PolicyParams& theta,
                                            std::span<const ObservationSeq> samples);

/// Sample average of the per-sequence gradient terms.
Vector sampled_entropy_gradient(const MaskMdp& mdp, const PolicyParams& theta,
                                std::span<const ObservationSeq> samples);

/// Per-sequence gradient term evaluated literally from the operator route:
/// −Σ_w [log₂𝐏(w|y) ∇𝐏(w|y) + 𝐏(w|y) log₂𝐏(w|y) ∇𝐏(y)/𝐏(y) + ∇𝐏(w|y)/ln 2].
/// Used to cross-check the fused kernel.
Vector entropy_gradient_term(const ObserverHmm& hmm, std::span<const std::size_t> y);

}  // namespace opacity
