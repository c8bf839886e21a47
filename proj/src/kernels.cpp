#include "opacity/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace opacity::kernels {

double binary_entropy_bits(double p) {
  const double q = 1.0 - p;
  const double lp = std::log2(std::clamp(p, kLogClamp, 1.0 - kLogClamp));
  const double lq = std::log2(std::clamp(q, kLogClamp, 1.0 - kLogClamp));
  return -(p * lp + q * lq);
}

namespace {

// Power of two that brings `peak` into [2^-kRescaleBits, 1); 0 when no
// rescaling is needed. Scaling by 2^e is exact, so short sequences are
// unaffected by rounding.
int rescale_exponent(double peak) {
  if (!(peak > 0.0) || peak >= std::ldexp(1.0, -kRescaleBits)) return 0;
  int e = 0;
  std::frexp(peak, &e);
  return e;
}

}  // namespace

SequenceKernel::SequenceKernel(const MaskMdp& mdp, const PolicyParams& theta)
    : mdp_(&mdp),
      mode_(theta.mode()),
      num_params_(theta.size()),
      N_(mdp.size()),
      S_(mdp.num_states()),
      K_(mdp.num_actions()) {
  if (theta.num_states() != S_ || theta.num_actions() != K_) {
    throw ShapeMismatch("policy parameters do not match the model");
  }
  pi_.resize(N_ * K_);
  for (std::size_t z = 0; z < N_; ++z) {
    const Vector p = action_distribution(theta, z);
    for (std::size_t a = 0; a < K_; ++a) pi_[z * K_ + a] = p(a);
  }
}

SequenceResult SequenceKernel::evaluate(std::span<const std::size_t> y, Workspace& ws) const {
  const std::size_t L = y.size();
  if (L == 0) throw Error("observation sequence is empty");
  for (std::size_t o : y) {
    if (o >= mdp_->num_observations()) throw Error("observation index " + std::to_string(o) + " out of range");
  }
  ws.alpha.assign(L * N_, 0.0);
  ws.log_scale.assign(L, 0.0);
  ws.u.resize(S_ * K_);

  const Vector& mu = mdp_->initial();
  std::copy(mu.data(), mu.data() + N_, ws.alpha.begin());

  const Matrix& E = mdp_->emission();
  for (std::size_t k = 1; k < L; ++k) {
    const double* b = E.col(static_cast<Eigen::Index>(y[k - 1])).data();
    const double* prev = ws.alpha.data() + (k - 1) * N_;
    double* cur = ws.alpha.data() + k * N_;
    std::fill(ws.u.begin(), ws.u.end(), 0.0);
    // u(s, σ') = Σ_σ π(σ' | s, σ) b(s, σ) α(s, σ)
    for (std::size_t z = 0; z < N_; ++z) {
      const double w = b[z] * prev[z];
      if (w == 0.0) continue;
      double* u_row = ws.u.data() + (z / K_) * K_;
      const double* pi_row = pi_.data() + z * K_;
      for (std::size_t a = 0; a < K_; ++a) u_row[a] += pi_row[a] * w;
    }
    // α(s', σ') = Σ_s P(s' | s) u(s, σ')
    for (std::size_t s = 0; s < S_; ++s) {
      const double* u_row = ws.u.data() + s * K_;
      bool any = false;
      for (std::size_t a = 0; a < K_; ++a) any = any || u_row[a] != 0.0;
      if (!any) continue;
      for (const auto& [s_next, p] : mdp_->successors(s)) {
        double* dst = cur + s_next * K_;
        for (std::size_t a = 0; a < K_; ++a) dst[a] += p * u_row[a];
      }
    }
    ws.log_scale[k] = ws.log_scale[k - 1];
    const int e = rescale_exponent(*std::max_element(cur, cur + N_));
    if (e != 0) {
      for (std::size_t z = 0; z < N_; ++z) cur[z] = std::ldexp(cur[z], -e);
      ws.log_scale[k] += e * std::numbers::ln2;
    }
  }

  const double* b_last = E.col(static_cast<Eigen::Index>(y[L - 1])).data();
  const double* last = ws.alpha.data() + (L - 1) * N_;
  double p_hat = 0.0;
  for (std::size_t z = 0; z < N_; ++z) p_hat += b_last[z] * last[z];
  double num_hat = 0.0;
  for (std::size_t g : mdp_->secret_states()) num_hat += b_last[g] * last[g];

  SequenceResult r;
  r.p_obs_scaled = p_hat;
  r.realizable = p_hat > 0.0;
  if (!r.realizable) {
    r.log_p_obs = -std::numeric_limits<double>::infinity();
    return r;
  }
  r.log_p_obs = std::log(p_hat) + ws.log_scale[L - 1];
  r.p_obs = ws.log_scale[L - 1] == 0.0 ? p_hat : std::exp(r.log_p_obs);
  r.p_secret = num_hat / p_hat;
  r.entropy_bits = binary_entropy_bits(r.p_secret);
  return r;
}

void SequenceKernel::accumulate_gradient(std::span<const std::size_t> y, Workspace& ws, const SequenceResult& r,
                                         double w_obs, double w_secret, double scale,
                                         std::span<double> grad) const {
  const std::size_t L = y.size();
  if (L < 2 || !r.realizable) return;
  const Matrix& E = mdp_->emission();
  ws.beta.assign(N_, 0.0);
  ws.beta_next.resize(N_);
  ws.q.resize(S_ * K_);

  const double* b_last = E.col(static_cast<Eigen::Index>(y[L - 1])).data();
  for (std::size_t z = 0; z < N_; ++z) ws.beta[z] = b_last[z] * w_obs;
  for (std::size_t g : mdp_->secret_states()) ws.beta[g] += b_last[g] * w_secret;

  double beta_log_scale = 0.0;
  const double end_log_scale = ws.log_scale[L - 1];

  for (std::size_t k = L - 1; k >= 1; --k) {
    const double* b = E.col(static_cast<Eigen::Index>(y[k - 1])).data();
    const double* a_prev = ws.alpha.data() + (k - 1) * N_;

    // Q(s, σ') = Σ_{s'} P(s' | s) β(s', σ')
    std::fill(ws.q.begin(), ws.q.end(), 0.0);
    for (std::size_t s = 0; s < S_; ++s) {
      double* q_row = ws.q.data() + s * K_;
      for (const auto& [s_next, p] : mdp_->successors(s)) {
        const double* src = ws.beta.data() + s_next * K_;
        for (std::size_t a = 0; a < K_; ++a) q_row[a] += p * src[a];
      }
    }

    const double coef = scale * std::exp(beta_log_scale + ws.log_scale[k - 1] - end_log_scale) / r.p_obs_scaled;
    for (std::size_t z = 0; z < N_; ++z) {
      const double* q_row = ws.q.data() + (z / K_) * K_;
      const double* pi_row = pi_.data() + z * K_;
      double mean = 0.0;
      for (std::size_t a = 0; a < K_; ++a) mean += pi_row[a] * q_row[a];
      ws.beta_next[z] = b[z] * mean;

      const double w = b[z] * a_prev[z];
      if (w == 0.0) continue;
      // ∂/∂θ_{row, ã} of Σ_σ' π(σ'|z) Q(s, σ') is π(ã|z) (Q(s, ã) − mean).
      const std::size_t row = mode_ == Conditioning::augmented ? z : z / K_;
      double* g = grad.data() + row * K_;
      const double cw = coef * w;
      for (std::size_t a = 0; a < K_; ++a) g[a] += cw * pi_row[a] * (q_row[a] - mean);
    }
    ws.beta.swap(ws.beta_next);

    if (k > 1) {
      double peak = 0.0;
      for (double v : ws.beta) peak = std::max(peak, std::abs(v));
      const int e = rescale_exponent(peak);
      if (e != 0) {
        for (double& v : ws.beta) v = std::ldexp(v, -e);
        beta_log_scale += e * std::numbers::ln2;
      }
    }
  }
}

void SequenceKernel::accumulate_entropy_gradient(std::span<const std::size_t> y, Workspace& ws,
                                                 const SequenceResult& r, double scale,
                                                 std::span<double> grad) const {
  // With ∇𝐏(w=0|y) = −∇𝐏(w=1|y) the 1/ln 2 terms cancel, and the remaining
  // terms are linear in ∇N/𝐏(y) and ∇𝐏(y)/𝐏(y), so a single backward pass
  // with a combined terminal vector suffices.
  const double p1 = r.p_secret;
  const double p0 = 1.0 - p1;
  const double log_ratio = std::log2(std::clamp(p1, kLogClamp, 1.0 - kLogClamp)) -
                           std::log2(std::clamp(p0, kLogClamp, 1.0 - kLogClamp));
  const double w_secret = -log_ratio;
  const double w_obs = log_ratio * p1 + r.entropy_bits;
  accumulate_gradient(y, ws, r, w_obs, w_secret, scale, grad);
}

namespace {

template <typename ChunkFn>
void for_each_chunk(std::size_t chunks, bool parallel, ChunkFn&& fn) {
  if (parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) fn(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
  }
}

BatchResult entropy_batch(const MaskMdp& mdp, const PolicyParams& theta, std::span<const ObservationSeq> samples,
                          bool with_gradient, bool parallel) {
  const SequenceKernel kernel(mdp, theta);
  const std::size_t V = samples.size();
  BatchResult result;
  result.count = V;
  if (V == 0) {
    if (with_gradient) result.gradient = Vector::Zero(theta.size());
    return result;
  }
  // evaluate() throws on malformed input; check up front, outside the parallel region.
  for (const auto& y : samples) {
    if (y.empty()) throw Error("observation sequence is empty");
    for (std::size_t o : y) {
      if (o >= mdp.num_observations()) throw Error("observation index " + std::to_string(o) + " out of range");
    }
  }
  const std::size_t chunks = (V + kSampleChunk - 1) / kSampleChunk;
  std::vector<double> sum_h(chunks, 0.0), sum_h2(chunks, 0.0);
  Matrix chunk_grad;
  if (with_gradient) chunk_grad = Matrix::Zero(theta.size(), chunks);
  std::atomic<std::size_t> bad{V};

  for_each_chunk(chunks, parallel, [&](std::size_t c) {
    Workspace ws;
    const std::size_t begin = c * kSampleChunk;
    const std::size_t end = std::min(V, begin + kSampleChunk);
    std::span<double> g;
    if (with_gradient) g = std::span<double>(chunk_grad.col(c).data(), theta.size());
    for (std::size_t i = begin; i < end; ++i) {
      const SequenceResult r = kernel.evaluate(samples[i], ws);
      if (!r.realizable) {
        std::size_t expected = V;
        bad.compare_exchange_strong(expected, i);
        return;
      }
      sum_h[c] += r.entropy_bits;
      sum_h2[c] += r.entropy_bits * r.entropy_bits;
      if (with_gradient) kernel.accumulate_entropy_gradient(samples[i], ws, r, 1.0, g);
    }
  });
  if (bad.load() != V) {
    throw ZeroProbabilityObservation("sample " + std::to_string(bad.load()) +
                                     " has zero probability under the current mask (off-policy sample?)");
  }

  double h = 0.0, h2 = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    h += sum_h[c];
    h2 += sum_h2[c];
  }
  result.entropy = h / static_cast<double>(V);
  if (V > 1) {
    const double var = std::max(0.0, (h2 - static_cast<double>(V) * result.entropy * result.entropy) /
                                         static_cast<double>(V - 1));
    result.std_error = std::sqrt(var / static_cast<double>(V));
  }
  if (with_gradient) {
    result.gradient = Vector::Zero(theta.size());
    for (std::size_t c = 0; c < chunks; ++c) result.gradient += chunk_grad.col(c);
    result.gradient /= static_cast<double>(V);
  }
  return result;
}

EnumerationResult entropy_exact(const MaskMdp& mdp, const PolicyParams& theta, bool with_gradient,
                                std::size_t cap, bool parallel) {
  const std::size_t total = enumeration_size(mdp, cap);
  if (total == std::numeric_limits<std::size_t>::max()) {
    throw EnumerationTooLarge("|O|^" + std::to_string(mdp.sequence_length()) +
                              " exceeds the enumeration cap of " + std::to_string(cap));
  }
  const SequenceKernel kernel(mdp, theta);
  const std::size_t L = mdp.sequence_length();
  const std::size_t chunks = (total + kEnumerationChunk - 1) / kEnumerationChunk;
  std::vector<double> sum_h(chunks, 0.0), sum_p(chunks, 0.0);
  std::vector<std::size_t> realizable(chunks, 0);
  Matrix chunk_grad;
  if (with_gradient) chunk_grad = Matrix::Zero(theta.size(), chunks);

  for_each_chunk(chunks, parallel, [&](std::size_t c) {
    Workspace ws;
    ObservationSeq y(L);
    const std::size_t begin = c * kEnumerationChunk;
    const std::size_t end = std::min(total, begin + kEnumerationChunk);
    std::span<double> g;
    if (with_gradient) g = std::span<double>(chunk_grad.col(c).data(), theta.size());
    for (std::size_t i = begin; i < end; ++i) {
      decode_sequence(i, mdp.num_observations(), y);
      const SequenceResult r = kernel.evaluate(y, ws);
      if (!r.realizable) continue;
      ++realizable[c];
      sum_p[c] += r.p_obs;
      sum_h[c] += r.p_obs * r.entropy_bits;
      if (with_gradient) kernel.accumulate_entropy_gradient(y, ws, r, r.p_obs, g);
    }
  });

  EnumerationResult result;
  result.sequences = total;
  for (std::size_t c = 0; c < chunks; ++c) {
    result.entropy += sum_h[c];
    result.total_probability += sum_p[c];
    result.realizable += realizable[c];
  }
  if (with_gradient) {
    result.gradient = Vector::Zero(theta.size());
    for (std::size_t c = 0; c < chunks; ++c) result.gradient += chunk_grad.col(c);
  }
  return result;
}

}  // namespace

BatchResult entropy_batch_serial(const MaskMdp& mdp, const PolicyParams& theta,
                                 std::span<const ObservationSeq> samples, bool with_gradient) {
  return entropy_batch(mdp, theta, samples, with_gradient, false);
}

BatchResult entropy_batch_parallel(const MaskMdp& mdp, const PolicyParams& theta,
                                   std::span<const ObservationSeq> samples, bool with_gradient) {
  return entropy_batch(mdp, theta, samples, with_gradient, true);
}

std::size_t enumeration_size(const MaskMdp& mdp, std::size_t cap) {
  std::size_t total = 1;
  for (std::size_t k = 0; k < mdp.sequence_length(); ++k) {
    if (total > cap / mdp.num_observations()) return std::numeric_limits<std::size_t>::max();
    total *= mdp.num_observations();
  }
  return total > cap ? std::numeric_limits<std::size_t>::max() : total;
}

EnumerationResult entropy_exact_serial(const MaskMdp& mdp, const PolicyParams& theta, bool with_gradient,
                                       std::size_t cap) {
  return entropy_exact(mdp, theta, with_gradient, cap, false);
}

EnumerationResult entropy_exact_parallel(const MaskMdp& mdp, const PolicyParams& theta, bool with_gradient,
                                         std::size_t cap) {
  return entropy_exact(mdp, theta, with_gradient, cap, true);
}

void decode_sequence(std::size_t index, std::size_t num_observations, std::span<std::size_t> y) {
  for (std::size_t k = y.size(); k-- > 0;) {
    y[k] = index % num_observations;
    index /= num_observations;
  }
}

}  // namespace opacity::kernels
