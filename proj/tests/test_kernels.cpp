#include <algorithm>
#include <cmath>
#include <cstring>

#include <omp.h>

#include "doctest.h"
#include "opacity/cost_value.hpp"
#include "opacity/entropy.hpp"
#include "opacity/kernels.hpp"
#include "opacity/scenarios.hpp"
#include "oracles.hpp"

using namespace opacity;

namespace {

bool bit_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

// Forward recursion normalized at every step; returns log P(y) and the secret posterior.
std::pair<double, double> normalized_forward(const MaskMdp& mdp, const PolicyParams& theta, const ObservationSeq& y) {
  const Matrix T = induced_transition(theta, mdp, false).T;
  const Matrix B = emission_matrix(mdp);
  Vector alpha = mdp.initial();
  double log_p = 0.0;
  for (std::size_t t = 0; t < y.size(); ++t) {
    alpha = alpha.cwiseProduct(B.row(y[t]).transpose());
    const double c = alpha.sum();
    log_p += std::log(c);
    alpha /= c;
    if (t + 1 < y.size()) alpha = T * alpha;
  }
  double ps = 0.0;
  for (std::size_t g : mdp.secret_states()) ps += alpha(g);
  return {log_p, ps};
}

}  // namespace

TEST_CASE("kernel forward pass matches the operator route") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Conditioning mode = seed % 2 ? Conditioning::state_only : Conditioning::augmented;
    const HmmSpec spec = oracle::random_model(seed);
    const MaskMdp mdp = build_mask_mdp(spec);
    const PolicyParams theta = oracle::random_theta(mdp, seed, 1.5, mode);
    const ObserverHmm hmm(mdp, theta);
    const kernels::SequenceKernel kernel(mdp, theta);
    kernels::Workspace ws;
    const auto batch = sample_trajectories(mdp, theta, 20, seed);
    for (const auto& tr : batch) {
      const auto& y = tr.observations;
      REQUIRE(y.size() == mdp.sequence_length());
      const auto r = kernel.evaluate(y, ws);
      REQUIRE(r.realizable);
      const auto post = secret_posterior(hmm, y, true);
      CHECK(std::abs(r.p_obs - post.p_obs) <= 1e-14);
      CHECK(std::abs(r.p_secret - post.p_secret) <= 1e-12);
      CHECK(std::abs(r.entropy_bits - kernels::binary_entropy_bits(post.p_secret)) <= 1e-12);

      Vector g_obs = Vector::Zero(theta.size());
      kernel.accumulate_gradient(y, ws, r, 1.0, 0.0, 1.0, {g_obs.data(), theta.size()});
      const Vector ref_obs = post.grad_p_obs / post.p_obs;
      CHECK((g_obs - ref_obs).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, ref_obs.cwiseAbs().maxCoeff()));

      Vector g_h = Vector::Zero(theta.size());
      kernel.accumulate_entropy_gradient(y, ws, r, 1.0, {g_h.data(), theta.size()});
      const Vector ref_h = entropy_gradient_term(hmm, y);
      CHECK((g_h - ref_h).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, ref_h.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("unrealizable sequence is flagged by the kernel") {
  const MaskMdp mdp = build_mask_mdp(build_illustrative());
  const kernels::SequenceKernel kernel(mdp, PolicyParams::zeros(mdp));
  kernels::Workspace ws;
  std::size_t rr = 0;
  for (std::size_t o = 0; o < mdp.num_observations(); ++o) {
    if (mdp.observation_labels()[o] == "R|R") rr = o;
  }
  const ObservationSeq y = {rr, rr, rr};
  CHECK_FALSE(kernel.evaluate(y, ws).realizable);
  const std::vector<ObservationSeq> batch = {y};
  CHECK_THROWS_AS(kernels::entropy_batch_serial(mdp, PolicyParams::zeros(mdp), batch, false),
                  ZeroProbabilityObservation);
  CHECK_THROWS_AS(kernels::entropy_batch_parallel(mdp, PolicyParams::zeros(mdp), batch, true),
                  ZeroProbabilityObservation);
}

TEST_CASE("serial and parallel batches are bit identical") {
  const int saved = omp_get_max_threads();
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const MaskMdp mdp = build_mask_mdp(oracle::random_model(seed));
    const PolicyParams theta = oracle::random_theta(mdp, seed);
    const auto seqs = observation_sequences(sample_trajectories(mdp, theta, 333, seed));
    const auto serial = kernels::entropy_batch_serial(mdp, theta, seqs, true);
    for (int threads : {1, 2, 3, 7}) {
      omp_set_num_threads(threads);
      const auto par = kernels::entropy_batch_parallel(mdp, theta, seqs, true);
      CHECK(bit_equal(serial.entropy, par.entropy));
      CHECK(bit_equal(serial.std_error, par.std_error));
      CHECK(bit_equal(serial.gradient, par.gradient));
      const auto es = kernels::entropy_exact_serial(mdp, theta, true, 1'000'000);
      const auto ep = kernels::entropy_exact_parallel(mdp, theta, true, 1'000'000);
      CHECK(bit_equal(es.entropy, ep.entropy));
      CHECK(bit_equal(es.total_probability, ep.total_probability));
      CHECK(bit_equal(es.gradient, ep.gradient));
    }
  }
  omp_set_num_threads(saved);
}

TEST_CASE("sampled trajectories do not depend on the thread count") {
  const int saved = omp_get_max_threads();
  const MaskMdp mdp = build_mask_mdp(build_illustrative());
  const PolicyParams theta = oracle::random_theta(mdp, 3);
  omp_set_num_threads(1);
  const auto a = sample_trajectories(mdp, theta, 200, 77);
  omp_set_num_threads(4);
  const auto b = sample_trajectories(mdp, theta, 200, 77);
  omp_set_num_threads(saved);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].states == b[i].states);
    CHECK(a[i].observations == b[i].observations);
  }
}

TEST_CASE("exact enumeration covers all probability mass") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MaskMdp mdp = build_mask_mdp(oracle::random_model(seed));
    const auto r = kernels::entropy_exact_serial(mdp, oracle::random_theta(mdp, seed), false, 1'000'000);
    CHECK(std::abs(r.total_probability - 1.0) < 1e-12);
    CHECK(r.realizable <= r.sequences);
  }
}

TEST_CASE("enumeration cap") {
  const MaskMdp mdp = build_mask_mdp(build_illustrative());
  CHECK(kernels::enumeration_size(mdp, 1'000'000) == 25 * 25 * 25);
  CHECK(kernels::enumeration_size(mdp, 1000) == SIZE_MAX);
  CHECK_THROWS_AS(kernels::entropy_exact_serial(mdp, PolicyParams::zeros(mdp), false, 1000), EnumerationTooLarge);
}

TEST_CASE("decode_sequence enumerates in lexicographic order") {
  ObservationSeq y(3);
  kernels::decode_sequence(0, 4, y);
  CHECK(y == ObservationSeq{0, 0, 0});
  kernels::decode_sequence(1, 4, y);
  CHECK(y == ObservationSeq{0, 0, 1});
  kernels::decode_sequence(4 * 4 * 2 + 4 * 3 + 1, 4, y);
  CHECK(y == ObservationSeq{2, 3, 1});
}

TEST_CASE("long horizons are rescaled instead of underflowing") {
  HmmSpec spec = oracle::random_model(17, {.min_states = 5, .max_states = 5, .min_obs = 4, .max_obs = 4, .zero_fraction = 0.0});
  spec.horizon = 1500;
  const MaskMdp mdp = build_mask_mdp(spec);
  const PolicyParams theta = oracle::random_theta(mdp, 17);
  const kernels::SequenceKernel kernel(mdp, theta);
  kernels::Workspace ws;
  for (const auto& tr : sample_trajectories(mdp, theta, 5, 17)) {
    const auto r = kernel.evaluate(tr.observations, ws);
    REQUIRE(r.realizable);
    const auto [log_p, ps] = normalized_forward(mdp, theta, tr.observations);
    CHECK(log_p < -700.0);  // P(y) itself is below the smallest normal double
    CHECK(std::abs(r.log_p_obs - log_p) <= 1e-9 * std::abs(log_p));
    CHECK(std::abs(r.p_secret - ps) <= 1e-9);
    Vector g = Vector::Zero(theta.size());
    kernel.accumulate_entropy_gradient(tr.observations, ws, r, 1.0, {g.data(), theta.size()});
    CHECK(g.allFinite());
  }
}

TEST_CASE("rescaled gradient matches finite differences of the normalized posterior") {
  HmmSpec spec = oracle::random_model(23, {.min_states = 4, .max_states = 4, .min_obs = 3, .max_obs = 3, .zero_fraction = 0.0});
  spec.horizon = 400;
  const MaskMdp mdp = build_mask_mdp(spec);
  const PolicyParams theta = oracle::random_theta(mdp, 23);
  const kernels::SequenceKernel kernel(mdp, theta);
  kernels::Workspace ws;
  const auto y = sample_trajectories(mdp, theta, 1, 5).front().observations;
  const auto r = kernel.evaluate(y, ws);
  REQUIRE(r.realizable);
  Vector g = Vector::Zero(theta.size());
  kernel.accumulate_gradient(y, ws, r, 1.0, 0.0, 1.0, {g.data(), theta.size()});
  // ∇P(y)/P(y) = ∇ log P(y).
  auto f = [&](const PolicyParams& t) { return normalized_forward(mdp, t, y).first; };
  CHECK(oracle::max_relative_error(oracle::central_difference4(f, theta, 1e-3), g, 1e-6) < 1e-5);
}

TEST_CASE("binary entropy helper") {
  CHECK(kernels::binary_entropy_bits(0.5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(kernels::binary_entropy_bits(0.0) < 1e-10);
  CHECK(kernels::binary_entropy_bits(1.0) < 1e-10);
  CHECK(kernels::binary_entropy_bits(0.25) == doctest::Approx(oracle::binary_entropy(0.25)).epsilon(1e-13));
}
