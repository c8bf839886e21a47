#include "opacity/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "opacity/kernels.hpp"

namespace opacity {

bool enumeration_feasible(const MaskMdp& mdp, std::size_t cap) {
  return kernels::enumeration_size(mdp, cap) != std::numeric_limits<std::size_t>::max();
}

EntropyEstimate exact_conditional_entropy(const MaskMdp& mdp, const PolicyParams& theta, std::size_t cap) {
  const auto r = kernels::entropy_exact_parallel(mdp, theta, false, cap);
  return {r.entropy, EstimateMode::exact, 0, 0.0};
}

Vector exact_entropy_gradient(const MaskMdp& mdp, const PolicyParams& theta, std::size_t cap) {
  return kernels::entropy_exact_parallel(mdp, theta, true, cap).gradient;
}

EntropyEstimate sampled_conditional_entropy(const MaskMdp& mdp, const PolicyParams& theta,
                                            std::span<const ObservationSeq> samples) {
  const auto r = kernels::entropy_batch_parallel(mdp, theta, samples, false);
  return {r.entropy, EstimateMode::sampled, r.count, r.std_error};
}

Vector sampled_entropy_gradient(const MaskMdp& mdp, const PolicyParams& theta,
                                std::span<const ObservationSeq> samples) {
  return kernels::entropy_batch_parallel(mdp, theta, samples, true).gradient;
}

Vector entropy_gradient_term(const ObserverHmm& hmm, std::span<const std::size_t> y) {
  const SecretPosterior post = secret_posterior(hmm, y, true);
  const double probs[2] = {post.p_public(), post.p_secret};
  const Vector grads[2] = {post.grad_p_public(), post.grad_p_secret};
  const Vector score = post.grad_p_obs / post.p_obs;
  Vector term = Vector::Zero(hmm.num_params());
  for (int w = 0; w < 2; ++w) {
    const double log_p = std::log2(std::clamp(probs[w], kernels::kLogClamp, 1.0 - kernels::kLogClamp));
    term -= log_p * grads[w] + probs[w] * log_p * score + grads[w] / std::numbers::ln2;
  }
  return term;
}

}  // namespace opacity
