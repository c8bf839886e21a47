#pragma once

// Structured evaluation of sequence likelihoods, secret posteriors and the
// sampled entropy gradient.
//
// The kernels never form N×N operators. They use the product structure of the
// masking MDP: a transition from (s, σ) to (s', σ') factors into π(σ' | s, σ)
// and P(s' | s), so one step costs O(|S|·|Σ|² + nnz(P)·|Σ|).
//
// Every batch reduction runs over fixed-size chunks that are summed in index
// order. The serial and OpenMP drivers therefore return bit-identical
// results for any thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "opacity/inference.hpp"
#include "opacity/model.hpp"
#include "opacity/policy.hpp"

namespace opacity::kernels {

/// Forward and backward vectors whose largest entry falls below 2^-kRescaleBits
/// are multiplied by a power of two that brings it back into [0.5, 1).
inline constexpr int kRescaleBits = 64;
/// Posteriors are clamped to [kLogClamp, 1 − kLogClamp] inside logarithms.
inline constexpr double kLogClamp = 1e-12;

/// Samples per reduction chunk for sampled batches.
inline constexpr std::size_t kSampleChunk = 16;
/// Sequences per reduction chunk for exhaustive enumeration.
inline constexpr std::size_t kEnumerationChunk = 256;

/// Binary entropy in bits with clamped logarithms; 0·log 0 evaluates to 0.
double binary_entropy_bits(double p);

struct Workspace {
  std::vector<double> alpha;      // L × N scaled forward vectors
  std::vector<double> log_scale;  // per forward vector
  std::vector<double> beta;
  std::vector<double> beta_next;
  std::vector<double> q;  // |S| × |Σ|
  std::vector<double> u;  // |S| × |Σ|
};

struct SequenceResult {
  bool realizable = false;
  double log_p_obs = 0.0;  // natural log of 𝐏_θ(y)
  double p_obs = 0.0;      // 𝐏_θ(y); may underflow on long horizons
  double p_secret = 0.0;   // 𝐏_θ(w_T = 1 | y)
  double entropy_bits = 0.0;

  // Scaled terminal quantities used by the gradient pass.
  double p_obs_scaled = 0.0;
};

class SequenceKernel {
 public:
  SequenceKernel(const MaskMdp& mdp, const PolicyParams& theta);

  const MaskMdp& mdp() const { return *mdp_; }
  std::size_t num_params() const { return num_params_; }

  /// Forward pass. Leaves the forward vectors in `ws` for a later gradient call.
  SequenceResult evaluate(std::span<const std::size_t> y, Workspace& ws) const;

  /// Adds scale · ∇_θ(hᵀ α_{T−1}) / 𝐏_θ(y) to `grad`, where
  /// h = b_T ∘ (w_obs + w_secret · 1_G) and b_T = B[o_T, ·].
  /// With (w_obs, w_secret) = (1, 0) this is ∇𝐏(y)/𝐏(y); with (0, 1) it is
  /// Σ_g 𝐄(o_T | g) ∇N(θ, g) / 𝐏(y). Requires a prior evaluate() of `y`.
  void accumulate_gradient(std::span<const std::size_t> y, Workspace& ws, const SequenceResult& r,
                           double w_obs, double w_secret, double scale, std::span<double> grad) const;

  /// Adds scale · (per-sample entropy gradient term) to `grad`:
  /// −Σ_w [log₂𝐏(w|y) ∇𝐏(w|y) + 𝐏(w|y) log₂𝐏(w|y) ∇𝐏(y)/𝐏(y) + ∇𝐏(w|y)/ln 2].
  void accumulate_entropy_gradient(std::span<const std::size_t> y, Workspace& ws, const SequenceResult& r,
                                   double scale, std::span<double> grad) const;

 private:
  const MaskMdp* mdp_;
  Conditioning mode_;
  std::size_t num_params_;
  std::size_t N_, S_, K_;
  std::vector<double> pi_;  // N × K row-major
};

struct BatchResult {
  double entropy = 0.0;    // mean per-sample entropy, bits
  double std_error = 0.0;  // standard error of the mean
  Vector gradient;         // empty unless requested
  std::size_t count = 0;
};

/// Sampled conditional entropy (and optionally its gradient) over on-policy
/// observation sequences. Throws ZeroProbabilityObservation on an
/// unrealizable sample.
BatchResult entropy_batch_serial(const MaskMdp& mdp, const PolicyParams& theta,
                                 std::span<const ObservationSeq> samples, bool with_gradient);
BatchResult entropy_batch_parallel(const MaskMdp& mdp, const PolicyParams& theta,
                                   std::span<const ObservationSeq> samples, bool with_gradient);

struct EnumerationResult {
  double entropy = 0.0;
  double total_probability = 0.0;
  std::size_t sequences = 0;
  std::size_t realizable = 0;
  Vector gradient;  // empty unless requested
};

/// Number of observation sequences of the model's length, or SIZE_MAX when
/// it exceeds `cap`.
std::size_t enumeration_size(const MaskMdp& mdp, std::size_t cap);

/// Exhaustive sum over O^{T+1}. Throws EnumerationTooLarge beyond `cap`.
EnumerationResult entropy_exact_serial(const MaskMdp& mdp, const PolicyParams& theta, bool with_gradient,
                                       std::size_t cap);
EnumerationResult entropy_exact_parallel(const MaskMdp& mdp, const PolicyParams& theta, bool with_gradient,
                                         std::size_t cap);

/// Decodes sequence number `index` of the enumeration order into `y`.
void decode_sequence(std::size_t index, std::size_t num_observations, std::span<std::size_t> y);

}  // namespace opacity::kernels
