#include "opacity/inference.hpp"

#include <string>

namespace opacity {

namespace {

void check_symbols(const ObserverHmm& hmm, std::span<const std::size_t> y) {
  for (std::size_t o : y) {
    if (o >= hmm.mdp().num_observations()) throw Error("observation index " + std::to_string(o) + " out of range");
  }
}

// α_k = A_{o_k} ⋯ A_{o_1} μ0 for k = 0..count.
std::vector<Vector> prefix_vectors(const ObserverHmm& hmm, std::span<const std::size_t> y, std::size_t count) {
  std::vector<Vector> alpha;
  alpha.reserve(count + 1);
  alpha.push_back(hmm.mdp().initial());
  for (std::size_t k = 0; k < count; ++k) alpha.push_back(hmm.operators().ops[y[k]] * alpha.back());
  return alpha;
}

// ∇_θ (hᵀ A_{o_count} ⋯ A_{o_1} μ0) = Σ_k β_kᵀ (∂A_{o_k}/∂θ) α_{k−1}, where
// β_count = h and β_{k−1}ᵀ = β_kᵀ A_{o_k}.
Vector weighted_prefix_gradient(const ObserverHmm& hmm, std::span<const std::size_t> y, std::size_t count,
                                const Vector& terminal, const std::vector<Vector>& alpha) {
  Vector grad = Vector::Zero(hmm.num_params());
  Vector beta = terminal;
  const auto& d_T = hmm.chain().d_T;
  for (std::size_t k = count; k >= 1; --k) {
    const std::size_t o = y[k - 1];
    const Vector& a = alpha[k - 1];
    for (std::size_t p = 0; p < d_T.size(); ++p) {
      double acc = 0.0;
      for (const auto& col : d_T[p]) {
        const double weight = hmm.B()(o, col.column) * a(col.column);
        if (weight != 0.0) acc += beta.dot(col.values) * weight;
      }
      grad(p) += acc;
    }
    beta = hmm.operators().ops[o].transpose() * beta;
  }
  return grad;
}

const PolicyParams& checked_shape(const MaskMdp& mdp, const PolicyParams& theta) {
  if (theta.num_states() != mdp.num_states() || theta.num_actions() != mdp.num_actions()) {
    throw ShapeMismatch("policy parameters do not match the model");
  }
  return theta;
}

}  // namespace

Matrix ObservableOperatorSet::derivative(const InducedChain& chain, const Matrix& B, std::size_t o,
                                         std::size_t p) const {
  return chain.dense_derivative(p) * B.row(o).transpose().asDiagonal();
}

ObservableOperatorSet observable_operators(const InducedChain& chain, const Matrix& B) {
  ObservableOperatorSet set;
  set.ops.reserve(B.rows());
  for (Eigen::Index o = 0; o < B.rows(); ++o) set.ops.push_back(chain.T * B.row(o).transpose().asDiagonal());
  return set;
}

ObserverHmm::ObserverHmm(const MaskMdp& mdp, const PolicyParams& theta)
    : mdp_(&mdp),
      theta_(checked_shape(mdp, theta)),
      chain_(induced_transition(theta, mdp, true)),
      B_(emission_matrix(mdp)),
      ops_(observable_operators(chain_, B_)) {}

double sequence_probability(const ObserverHmm& hmm, std::span<const std::size_t> y) {
  check_symbols(hmm, y);
  Vector alpha = hmm.mdp().initial();
  for (std::size_t o : y) alpha = hmm.operators().ops[o] * alpha;
  return alpha.sum();
}

Vector joint_state_distribution(const ObserverHmm& hmm, std::span<const std::size_t> prefix) {
  check_symbols(hmm, prefix);
  Vector alpha = hmm.mdp().initial();
  for (std::size_t o : prefix) alpha = hmm.operators().ops[o] * alpha;
  return alpha;
}

double joint_state_probability(const ObserverHmm& hmm, std::span<const std::size_t> prefix, std::size_t i) {
  return joint_state_distribution(hmm, prefix)(static_cast<Eigen::Index>(i));
}

Vector sequence_probability_gradient(const ObserverHmm& hmm, std::span<const std::size_t> y) {
  check_symbols(hmm, y);
  const auto alpha = prefix_vectors(hmm, y, y.size());
  return weighted_prefix_gradient(hmm, y, y.size(), Vector::Ones(hmm.mdp().size()), alpha);
}

SecretPosterior secret_posterior(const ObserverHmm& hmm, std::span<const std::size_t> y, bool with_gradient) {
  check_symbols(hmm, y);
  if (y.empty()) throw Error("observation sequence is empty");
  const std::size_t L = y.size();
  const auto alpha = prefix_vectors(hmm, y, L);
  const Vector& before_last = alpha[L - 1];  // N(θ, ·) = 𝐏_θ(Z_T = ·, o_{1:T−1})
  const std::size_t o_last = y[L - 1];

  Vector secret_weight = Vector::Zero(hmm.mdp().size());
  for (std::size_t g : hmm.mdp().secret_states()) secret_weight(g) = hmm.B()(o_last, g);

  SecretPosterior post;
  post.p_obs = alpha[L].sum();
  if (!(post.p_obs >= kProbabilityFloor)) {
    throw ZeroProbabilityObservation("observation sequence has probability below the realizability floor");
  }
  const double numerator = secret_weight.dot(before_last);
  post.p_secret = numerator / post.p_obs;

  if (with_gradient) {
    post.grad_p_obs = weighted_prefix_gradient(hmm, y, L, Vector::Ones(hmm.mdp().size()), alpha);
    const Vector grad_numerator = weighted_prefix_gradient(hmm, y, L - 1, secret_weight, alpha);
    post.grad_p_secret =
        (grad_numerator * post.p_obs - numerator * post.grad_p_obs) / (post.p_obs * post.p_obs);
  }
  return post;
}

Vector secret_posterior_gradient(const ObserverHmm& hmm, std::span<const std::size_t> y) {
  return secret_posterior(hmm, y, true).grad_p_secret;
}

}  // namespace opacity
