#include "opacity/policy.hpp"

#include <cmath>

namespace opacity {

const char* to_string(Conditioning mode) {
  return mode == Conditioning::augmented ? "augmented" : "state_only";
}

Conditioning conditioning_from_string(const std::string& name) {
  if (name == "augmented") return Conditioning::augmented;
  if (name == "state_only" || name == "state-only") return Conditioning::state_only;
  throw Error("unknown conditioning mode '" + name + "'");
}

PolicyParams::PolicyParams(std::size_t num_states, std::size_t num_actions, Conditioning mode)
    : num_states_(num_states), num_actions_(num_actions), mode_(mode) {
  theta_ = Vector::Zero(static_cast<Eigen::Index>(rows() * num_actions_));
}

PolicyParams PolicyParams::zeros(const MaskMdp& mdp, Conditioning mode) {
  return PolicyParams(mdp.num_states(), mdp.num_actions(), mode);
}

std::size_t PolicyParams::rows() const {
  return mode_ == Conditioning::augmented ? num_states_ * num_actions_ : num_states_;
}

bool PolicyParams::same_shape(const PolicyParams& other) const {
  return num_states_ == other.num_states_ && num_actions_ == other.num_actions_ && mode_ == other.mode_;
}

Vector action_distribution(const PolicyParams& theta, std::size_t z) {
  const std::size_t K = theta.num_actions();
  const std::size_t row = theta.row_of(z);
  Vector p(K);
  double max_logit = theta(row, 0);
  for (std::size_t a = 1; a < K; ++a) max_logit = std::max(max_logit, theta(row, a));
  double sum = 0.0;
  for (std::size_t a = 0; a < K; ++a) {
    p(a) = std::exp(theta(row, a) - max_logit);
    sum += p(a);
  }
  return p / sum;
}

Matrix policy_table(const PolicyParams& theta) {
  const std::size_t N = theta.num_states() * theta.num_actions();
  Matrix table(N, theta.num_actions());
  for (std::size_t z = 0; z < N; ++z) table.row(z) = action_distribution(theta, z).transpose();
  return table;
}

Matrix InducedChain::dense_derivative(std::size_t p) const {
  Matrix d = Matrix::Zero(T.rows(), T.cols());
  for (const auto& col : d_T.at(p)) d.col(col.column) = col.values;
  return d;
}

std::vector<std::vector<DerivativeColumn>> transition_gradient(const PolicyParams& theta, const MaskMdp& mdp) {
  return induced_transition(theta, mdp, true).d_T;
}

InducedChain induced_transition(const PolicyParams& theta, const MaskMdp& mdp, bool with_derivatives) {
  if (theta.num_states() != mdp.num_states() || theta.num_actions() != mdp.num_actions()) {
    throw ShapeMismatch("policy parameters do not match the model");
  }
  const std::size_t N = mdp.size();
  const std::size_t K = mdp.num_actions();
  const Matrix pi = policy_table(theta);

  InducedChain chain;
  chain.T = Matrix::Zero(N, N);
  // Per-action transition columns 𝐏(· | z, σ') are reused by the derivative.
  for (std::size_t z = 0; z < N; ++z) {
    for (const auto& [s_next, p] : mdp.successors(mdp.state_of(z))) {
      for (std::size_t a = 0; a < K; ++a) chain.T(mdp.index(s_next, a), z) += p * pi(z, a);
    }
  }
  if (!with_derivatives) return chain;

  // ∂T[:, z]/∂θ_{row(z), ã} = π(ã|z) (𝐏(· | z, ã) − T[:, z]).
  chain.d_T.resize(theta.size());
  for (std::size_t z = 0; z < N; ++z) {
    const std::size_t row = theta.row_of(z);
    for (std::size_t a = 0; a < K; ++a) {
      Vector col = -chain.T.col(z);
      for (const auto& [s_next, p] : mdp.successors(mdp.state_of(z))) col(mdp.index(s_next, a)) += p;
      col *= pi(z, a);
      chain.d_T[theta.param_index(row, a)].push_back({z, std::move(col)});
    }
  }
  return chain;
}

Vector log_prob_gradient(const PolicyParams& theta, std::size_t z, std::size_t action) {
  const Vector pi = action_distribution(theta, z);
  if (!(pi(action) > 0.0)) {
    throw DegeneratePolicy("pi(action " + std::to_string(action) + " | z=" + std::to_string(z) +
                           ") underflows to zero");
  }
  Vector grad = Vector::Zero(theta.size());
  const std::size_t row = theta.row_of(z);
  for (std::size_t a = 0; a < theta.num_actions(); ++a) {
    grad(theta.param_index(row, a)) = (a == action ? 1.0 : 0.0) - pi(a);
  }
  return grad;
}

}  // namespace opacity
