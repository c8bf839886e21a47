#include "doctest.h"
#include "opacity/model.hpp"
#include "opacity/scenarios.hpp"
#include "oracles.hpp"

using namespace opacity;

namespace {

std::size_t obs_index(const HmmSpec& spec, const std::string& label) {
  for (std::size_t o = 0; o < spec.num_observations(); ++o) {
    if (spec.observations[o] == label) return o;
  }
  FAIL("no observation " << label);
  return 0;
}

}  // namespace

TEST_CASE("illustrative spec validates") {
  std::vector<std::string> warnings;
  const HmmSpec spec = validate(build_illustrative(), &warnings);
  CHECK(spec.num_states() == 7);
  CHECK(spec.num_actions() == 5);
  CHECK(spec.num_observations() == 25);
  CHECK(warnings.empty());
}

TEST_CASE("validate rejects a transition row summing to 0.9") {
  HmmSpec spec = build_illustrative();
  spec.transition(0, 1) = 1.0 / 3.0 - 0.1;
  try {
    validate(spec);
    FAIL("expected NonStochasticRow");
  } catch (const NonStochasticRow& e) {
    CHECK(std::string(e.what()).find("s0") != std::string::npos);
  }
}

TEST_CASE("validate renormalizes rows within tolerance") {
  HmmSpec spec = build_illustrative();
  spec.transition(0, 1) = 0.333333333333;
  spec.transition(0, 2) = 0.333333333333;
  spec.transition(0, 3) = 0.333333333333;
  const HmmSpec v = validate(spec);
  CHECK(std::abs(v.transition.row(0).sum() - 1.0) < 1e-15);
}

TEST_CASE("validate rejects emission rows off by more than the tolerance") {
  HmmSpec spec = build_illustrative();
  spec.emission(3, 0) += 1e-6;
  CHECK_THROWS_AS(validate(spec), NonStochasticRow);
}

TEST_CASE("validate rejects negative costs and accepts zero costs") {
  HmmSpec spec = build_illustrative();
  spec.mask_cost.setZero();
  CHECK_NOTHROW(validate(spec));
  spec.mask_cost(0, 0) = -1.0;
  CHECK_THROWS_AS(validate(spec), NegativeCost);
}

TEST_CASE("empty secret set is a warning") {
  HmmSpec spec = build_illustrative();
  spec.secret_set.clear();
  std::vector<std::string> warnings;
  CHECK_NOTHROW(validate(spec, &warnings));
  CHECK(warnings.size() == 1);
}

TEST_CASE("illustrative mask MDP transitions") {
  const HmmSpec spec = build_illustrative();
  const MaskMdp mdp = build_mask_mdp(spec);
  CHECK(mdp.size() == 35);
  const std::size_t from = mdp.index(0, 4);  // (s0, N)
  for (std::size_t s : {1, 2, 3}) {
    CHECK(mdp.transition(mdp.index(s, 0), from, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(mdp.transition(mdp.index(s, 1), from, 0) == 0.0);
  }
}

TEST_CASE("mask MDP rows are stochastic and project back to P") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const HmmSpec spec = oracle::random_model(seed);
    const MaskMdp mdp = build_mask_mdp(spec);
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
      const Matrix T = mdp.transition_matrix(a);
      for (Eigen::Index z = 0; z < T.cols(); ++z) CHECK(std::abs(T.col(z).sum() - 1.0) < 1e-12);
      for (std::size_t z = 0; z < mdp.size(); ++z) {
        for (std::size_t s2 = 0; s2 < mdp.num_states(); ++s2) {
          CHECK(mdp.transition(mdp.index(s2, a), z, a) == spec.transition(mdp.state_of(z), s2));
        }
      }
    }
    for (std::size_t z = 0; z < mdp.size(); ++z) CHECK(mdp.index(mdp.state_of(z), mdp.config_of(z)) == z);
    const Matrix B = emission_matrix(mdp);
    for (Eigen::Index z = 0; z < B.cols(); ++z) CHECK(std::abs(B.col(z).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("single-action mask MDP matches the plain chain") {
  HmmSpec spec = oracle::random_model(3, {.min_actions = 1, .max_actions = 1});
  const MaskMdp mdp = build_mask_mdp(spec);
  CHECK(mdp.size() == spec.num_states());
  CHECK(mdp.transition_matrix(0).transpose() == spec.transition);
}

TEST_CASE("illustrative emission columns") {
  const HmmSpec spec = build_illustrative();
  const MaskMdp mdp = build_mask_mdp(spec);
  const Matrix B = emission_matrix(mdp);
  const auto null_R = static_cast<Eigen::Index>(obs_index(spec, "0|R"));
  const auto G_R = static_cast<Eigen::Index>(obs_index(spec, "G|R"));
  const auto s1R = static_cast<Eigen::Index>(mdp.index(1, 0));
  const auto s3R = static_cast<Eigen::Index>(mdp.index(3, 0));
  CHECK(B(null_R, s1R) == 1.0);
  CHECK(B.col(s1R).sum() == 1.0);
  CHECK(B(null_R, s3R) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(B(G_R, s3R) == doctest::Approx(0.85).epsilon(1e-15));
}

TEST_CASE("illustrative costs") {
  const HmmSpec spec = build_illustrative();
  const std::size_t K = spec.num_actions();
  const std::size_t B = 3, N = 4;
  for (std::size_t s = 0; s < spec.num_states(); ++s) {
    CHECK(spec.mask_cost(s * K + N, B) == 30.0);
    CHECK(spec.mask_cost(s * K + B, B) == 15.0);
    CHECK(spec.mask_cost(s * K + 0, 1) == 10.0);
    for (std::size_t prev = 0; prev < K; ++prev) CHECK(spec.mask_cost(s * K + prev, N) == 0.0);
  }
}

TEST_CASE("first firing sensor is reported") {
  SensorModelConfig cfg;
  cfg.states = {"a", "b"};
  cfg.transition = Matrix::Identity(2, 2);
  cfg.sensors = {{"X", {0}, 0.5, 0.0}, {"Y", {0, 1}, 1.0, 0.0}};
  cfg.mask_actions = {{"X", {0}}, {"N", {}}};
  cfg.costs.base = {1.0, 0.0};
  cfg.initial_dist = Vector::Ones(2) / 2.0;
  cfg.initial_config = 1;
  cfg.secret_set = {0};
  cfg.mask_visible = false;
  const HmmSpec spec = validate(build_sensor_hmm(cfg));
  // Readings: 0, X, Y.
  CHECK(spec.emission(0 * 2 + 1, 1) == 0.5);  // state a, nothing masked: X fires first
  CHECK(spec.emission(0 * 2 + 1, 2) == 0.5);
  CHECK(spec.emission(0 * 2 + 0, 2) == 1.0);  // X masked: Y always fires
  CHECK(spec.emission(1 * 2 + 1, 2) == 1.0);
}
