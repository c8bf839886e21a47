#include "opacity/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace opacity {

namespace {

// Renormalizes `row` in place; throws if it is not a distribution.
template <typename Row>
void normalize_row(Row&& row, const std::string& what) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    const double v = row(i);
    if (!std::isfinite(v) || v < 0.0) {
      throw NonStochasticRow(what + ": entry " + std::to_string(i) + " is negative or not finite");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRenormalizeTolerance) {
    std::ostringstream msg;
    msg.precision(12);
    msg << what << " sums to " << sum;
    throw NonStochasticRow(msg.str());
  }
  row /= sum;
}

}  // namespace

HmmSpec validate(HmmSpec spec, std::vector<std::string>* warnings) {
  const std::size_t S = spec.num_states();
  const std::size_t K = spec.num_actions();
  const std::size_t O = spec.num_observations();
  if (S == 0) throw Error("model has no states");
  if (K == 0) throw Error("model has no mask actions");
  if (O == 0) throw Error("model has no observations");
  if (spec.transition.rows() != static_cast<Eigen::Index>(S) ||
      spec.transition.cols() != static_cast<Eigen::Index>(S)) {
    throw Error("transition matrix must be |S| x |S|");
  }
  if (spec.emission.rows() != static_cast<Eigen::Index>(S * K) ||
      spec.emission.cols() != static_cast<Eigen::Index>(O)) {
    throw Error("emission table must be (|S|*|Sigma|) x |O|");
  }
  if (spec.mask_cost.rows() != static_cast<Eigen::Index>(S * K) ||
      spec.mask_cost.cols() != static_cast<Eigen::Index>(K)) {
    throw Error("mask cost table must be (|S|*|Sigma|) x |Sigma|");
  }
  if (spec.initial_dist.size() != static_cast<Eigen::Index>(S)) {
    throw Error("initial distribution must have |S| entries");
  }

  for (std::size_t s = 0; s < S; ++s) {
    normalize_row(spec.transition.row(s), "transition row of state '" + spec.states[s] + "'");
  }
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < K; ++k) {
      normalize_row(spec.emission.row(spec.aug_index(s, k)),
                    "emission of state '" + spec.states[s] + "' under config '" + spec.mask_actions[k] + "'");
    }
  }
  {
    Vector mu = spec.initial_dist;
    normalize_row(mu, "initial distribution");
    spec.initial_dist = mu;
  }

  if (spec.initial_config >= K) throw Error("initial configuration is not a mask action");
  for (std::size_t g : spec.secret_set) {
    if (g >= S) throw Error("secret state index " + std::to_string(g) + " out of range");
  }
  std::sort(spec.secret_set.begin(), spec.secret_set.end());
  spec.secret_set.erase(std::unique(spec.secret_set.begin(), spec.secret_set.end()), spec.secret_set.end());
  if (spec.secret_set.empty() && warnings != nullptr) {
    warnings->push_back("secret set is empty; conditional entropy is identically zero");
  }

  for (Eigen::Index i = 0; i < spec.mask_cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < spec.mask_cost.cols(); ++j) {
      const double c = spec.mask_cost(i, j);
      if (!std::isfinite(c) || c < 0.0) {
        throw NegativeCost("mask cost C(" + spec.states[i / K] + ", " + spec.mask_actions[i % K] + ", " +
                           spec.mask_actions[j] + ") is negative or not finite");
      }
    }
  }
  if (spec.horizon < 1) throw Error("horizon must be at least 1");
  if (!(spec.discount >= 0.0 && spec.discount <= 1.0)) throw Error("discount must lie in [0, 1]");
  if (!(spec.budget >= 0.0) || !std::isfinite(spec.budget)) throw Error("budget must be a non-negative number");
  if (!spec.masked_sensors.empty() && spec.masked_sensors.size() != K) {
    throw Error("masked_sensors must list one entry per mask action");
  }
  return spec;
}

double MaskMdp::transition(std::size_t z_next, std::size_t z, std::size_t action) const {
  if (config_of(z_next) != action) return 0.0;
  return state_transition_(state_of(z), state_of(z_next));
}

Matrix MaskMdp::transition_matrix(std::size_t action) const {
  const std::size_t N = size();
  Matrix m = Matrix::Zero(N, N);
  for (std::size_t z = 0; z < N; ++z) {
    for (const auto& [s_next, p] : successors_[state_of(z)]) {
      m(index(s_next, action), z) = p;
    }
  }
  return m;
}

std::string MaskMdp::aug_label(std::size_t z) const {
  return "(" + state_labels_[state_of(z)] + "," + action_labels_[config_of(z)] + ")";
}

MaskMdp build_mask_mdp(const HmmSpec& spec) {
  MaskMdp mdp;
  const std::size_t S = spec.num_states();
  const std::size_t K = spec.num_actions();
  mdp.num_states_ = S;
  mdp.num_actions_ = K;
  mdp.num_observations_ = spec.num_observations();
  mdp.state_transition_ = spec.transition;
  mdp.successors_.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < S; ++t) {
      if (spec.transition(s, t) > 0.0) mdp.successors_[s].emplace_back(t, spec.transition(s, t));
    }
  }
  mdp.emission_ = spec.emission;
  mdp.cost_ = spec.mask_cost;
  mdp.initial_ = Vector::Zero(S * K);
  for (std::size_t s = 0; s < S; ++s) mdp.initial_(mdp.index(s, spec.initial_config)) = spec.initial_dist(s);
  mdp.secret_.assign(S * K, false);
  for (std::size_t g : spec.secret_set) {
    for (std::size_t k = 0; k < K; ++k) {
      mdp.secret_[mdp.index(g, k)] = true;
      mdp.secret_aug_.push_back(mdp.index(g, k));
    }
  }
  std::sort(mdp.secret_aug_.begin(), mdp.secret_aug_.end());
  mdp.horizon_ = spec.horizon;
  mdp.discount_ = spec.discount;
  mdp.budget_ = spec.budget;
  mdp.state_labels_ = spec.states;
  mdp.action_labels_ = spec.mask_actions;
  mdp.observation_labels_ = spec.observations;
  return mdp;
}

Matrix emission_matrix(const MaskMdp& mdp) { return mdp.emission().transpose(); }

HmmSpec build_sensor_hmm(const SensorModelConfig& cfg) {
  const std::size_t S = cfg.states.size();
  const std::size_t K = cfg.mask_actions.size();
  const std::size_t R = cfg.sensors.size() + 1;  // readings: null + one per sensor

  HmmSpec spec;
  spec.states = cfg.states;
  spec.transition = cfg.transition;
  for (const auto& a : cfg.mask_actions) spec.mask_actions.push_back(a.name);

  std::vector<std::string> readings{"0"};
  for (const auto& sensor : cfg.sensors) readings.push_back(sensor.name);
  if (cfg.mask_visible) {
    for (const auto& r : readings) {
      for (const auto& a : cfg.mask_actions) spec.observations.push_back(r + "|" + a.name);
    }
  } else {
    spec.observations = readings;
  }
  const std::size_t O = spec.observations.size();

  std::vector<std::vector<bool>> covers(cfg.sensors.size(), std::vector<bool>(S, false));
  for (std::size_t k = 0; k < cfg.sensors.size(); ++k) {
    for (std::size_t s : cfg.sensors[k].coverage) {
      if (s >= S) throw Error("sensor '" + cfg.sensors[k].name + "' covers an unknown state");
      covers[k][s] = true;
    }
  }

  spec.emission = Matrix::Zero(S * K, O);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < K; ++a) {
      const auto& masked = cfg.mask_actions[a].masked;
      double none_fired = 1.0;
      std::vector<double> reading_prob(R, 0.0);
      for (std::size_t k = 0; k < cfg.sensors.size(); ++k) {
        if (std::find(masked.begin(), masked.end(), k) != masked.end()) continue;
        const double fire = covers[k][s] ? cfg.sensors[k].detection_prob : cfg.sensors[k].false_positive_prob;
        reading_prob[k + 1] = none_fired * fire;
        none_fired *= 1.0 - fire;
      }
      reading_prob[0] = none_fired;
      for (std::size_t r = 0; r < R; ++r) {
        const std::size_t o = cfg.mask_visible ? r * K + a : r;
        spec.emission(s * K + a, o) += reading_prob[r];
      }
    }
  }

  spec.mask_cost = Matrix::Zero(S * K, K);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t prev = 0; prev < K; ++prev) {
      for (std::size_t next = 0; next < K; ++next) {
        double c;
        if (cfg.mask_actions[next].masked.empty()) {
          c = cfg.costs.no_mask_cost;
        } else {
          const double phi = cfg.costs.base.at(next);
          c = prev == next ? phi * cfg.costs.repeat_factor : phi;
        }
        spec.mask_cost(s * K + prev, next) = c;
      }
    }
  }

  spec.initial_dist = cfg.initial_dist;
  spec.initial_config = cfg.initial_config;
  spec.secret_set = cfg.secret_set;
  spec.horizon = cfg.horizon;
  spec.discount = cfg.discount;
  spec.budget = cfg.budget;
  spec.mask_visible = cfg.mask_visible;
  spec.sensors = cfg.sensors;
  for (const auto& a : cfg.mask_actions) spec.masked_sensors.push_back(a.masked);
  return spec;
}

}  // namespace opacity
