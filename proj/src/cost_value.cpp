#include "opacity/cost_value.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "opacity/rng.hpp"

namespace opacity {

namespace {

std::size_t draw(Rng& rng, const double* cumulative, std::size_t n) {
  const double u = rng.uniform() * cumulative[n - 1];
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (u < cumulative[i]) return i;
  }
  return n - 1;
}

// Row-major cumulative tables so sampling is a short linear scan.
struct SamplingTables {
  std::size_t N, K, O;
  std::vector<double> initial;   // N
  std::vector<double> emission;  // N × O
  std::vector<double> policy;    // N × K cumulative
  std::vector<double> log_pi;    // N × K
  std::vector<std::vector<double>> succ_cum;
  std::vector<std::vector<std::size_t>> succ_state;
};

SamplingTables make_tables(const MaskMdp& mdp, const PolicyParams& theta) {
  SamplingTables t;
  t.N = mdp.size();
  t.K = mdp.num_actions();
  t.O = mdp.num_observations();
  t.initial.resize(t.N);
  double acc = 0.0;
  for (std::size_t z = 0; z < t.N; ++z) t.initial[z] = acc += mdp.initial()(z);
  t.emission.resize(t.N * t.O);
  for (std::size_t z = 0; z < t.N; ++z) {
    acc = 0.0;
    for (std::size_t o = 0; o < t.O; ++o) t.emission[z * t.O + o] = acc += mdp.emission(o, z);
  }
  t.policy.resize(t.N * t.K);
  t.log_pi.resize(t.N * t.K);
  for (std::size_t z = 0; z < t.N; ++z) {
    const Vector pi = action_distribution(theta, z);
    acc = 0.0;
    for (std::size_t a = 0; a < t.K; ++a) {
      t.policy[z * t.K + a] = acc += pi(a);
      t.log_pi[z * t.K + a] = std::log(pi(a));
    }
  }
  t.succ_cum.resize(mdp.num_states());
  t.succ_state.resize(mdp.num_states());
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    acc = 0.0;
    for (const auto& [next, p] : mdp.successors(s)) {
      t.succ_state[s].push_back(next);
      t.succ_cum[s].push_back(acc += p);
    }
  }
  return t;
}

void check_shape(const MaskMdp& mdp, const PolicyParams& theta) {
  if (theta.num_states() != mdp.num_states() || theta.num_actions() != mdp.num_actions()) {
    throw ShapeMismatch("policy parameters do not match the model");
  }
}

}  // namespace

double Trajectory::discounted_cost(double gamma) const {
  double total = 0.0, weight = 1.0;
  for (double c : costs) {
    total += weight * c;
    weight *= gamma;
  }
  return total;
}

std::vector<Trajectory> sample_trajectories(const MaskMdp& mdp, const PolicyParams& theta, std::size_t n,
                                            std::uint64_t seed) {
  check_shape(mdp, theta);
  const SamplingTables t = make_tables(mdp, theta);
  const std::size_t L = mdp.sequence_length();
  std::vector<Trajectory> batch(n);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    Trajectory& tr = batch[static_cast<std::size_t>(i)];
    tr.states.resize(L);
    tr.observations.resize(L);
    tr.actions.resize(L - 1);
    tr.costs.resize(L - 1);
    tr.log_probs.resize(L - 1);
    std::size_t z = draw(rng, t.initial.data(), t.N);
    for (std::size_t step = 0; step < L; ++step) {
      tr.states[step] = z;
      tr.observations[step] = draw(rng, t.emission.data() + z * t.O, t.O);
      if (step + 1 == L) break;
      const std::size_t a = draw(rng, t.policy.data() + z * t.K, t.K);
      const std::size_t s = mdp.state_of(z);
      const std::size_t s_next = t.succ_state[s][draw(rng, t.succ_cum[s].data(), t.succ_cum[s].size())];
      tr.actions[step] = a;
      tr.costs[step] = mdp.cost()(z, a);
      tr.log_probs[step] = t.log_pi[z * t.K + a];
      z = mdp.index(s_next, a);
    }
  }
  return batch;
}

std::vector<ObservationSeq> observation_sequences(std::span<const Trajectory> batch) {
  std::vector<ObservationSeq> out;
  out.reserve(batch.size());
  for (const auto& tr : batch) out.push_back(tr.observations);
  return out;
}

namespace {

// Value-to-go tables V_t for t = 0..T (V_T = 0) and the action values they imply.
struct Backward {
  std::vector<Vector> value;     // T + 1 vectors of length N
  std::vector<Matrix> q_values;  // T matrices N × K
};

Backward backward_induction(const MaskMdp& mdp, const Matrix& pi) {
  const std::size_t N = mdp.size();
  const std::size_t K = mdp.num_actions();
  const std::size_t T = mdp.horizon();
  const double gamma = mdp.discount();
  Backward b;
  b.value.assign(T + 1, Vector::Zero(N));
  b.q_values.assign(T, Matrix::Zero(N, K));
  for (std::size_t t = T; t-- > 0;) {
    const Vector& next = b.value[t + 1];
    Matrix& q = b.q_values[t];
    for (std::size_t z = 0; z < N; ++z) {
      for (std::size_t a = 0; a < K; ++a) {
        double future = 0.0;
        for (const auto& [s_next, p] : mdp.successors(mdp.state_of(z))) future += p * next(mdp.index(s_next, a));
        q(z, a) = mdp.cost()(z, a) + gamma * future;
      }
      b.value[t](z) = pi.row(z).dot(q.row(z));
    }
  }
  return b;
}

}  // namespace

double exact_value(const MaskMdp& mdp, const PolicyParams& theta) {
  check_shape(mdp, theta);
  const Backward b = backward_induction(mdp, policy_table(theta));
  return mdp.initial().dot(b.value[0]);
}

Vector exact_value_gradient(const MaskMdp& mdp, const PolicyParams& theta) {
  check_shape(mdp, theta);
  const std::size_t N = mdp.size();
  const std::size_t K = mdp.num_actions();
  const Matrix pi = policy_table(theta);
  const Backward b = backward_induction(mdp, pi);

  Vector grad = Vector::Zero(theta.size());
  Vector occupancy = mdp.initial();  // 𝐏(Z_t = z)
  double weight = 1.0;               // γ^t
  for (std::size_t t = 0; t < mdp.horizon(); ++t) {
    Vector next = Vector::Zero(N);
    for (std::size_t z = 0; z < N; ++z) {
      const double d = occupancy(z);
      if (d == 0.0) continue;
      const std::size_t row = theta.row_of(z);
      for (std::size_t a = 0; a < K; ++a) {
        grad(theta.param_index(row, a)) += weight * d * pi(z, a) * (b.q_values[t](z, a) - b.value[t](z));
        for (const auto& [s_next, p] : mdp.successors(mdp.state_of(z))) next(mdp.index(s_next, a)) += d * pi(z, a) * p;
      }
    }
    occupancy = std::move(next);
    weight *= mdp.discount();
  }
  return grad;
}

ValueEstimate sampled_value(const MaskMdp& mdp, std::span<const Trajectory> batch) {
  ValueEstimate est;
  if (batch.empty()) return est;
  double sum = 0.0, sum2 = 0.0;
  for (const auto& tr : batch) {
    const double c = tr.discounted_cost(mdp.discount());
    sum += c;
    sum2 += c * c;
  }
  const double n = static_cast<double>(batch.size());
  est.mean = sum / n;
  if (batch.size() > 1) est.std_error = std::sqrt(std::max(0.0, (sum2 - n * est.mean * est.mean) / (n - 1)) / n);
  return est;
}

Vector reinforce_value_gradient(const MaskMdp& mdp, const PolicyParams& theta, std::span<const Trajectory> batch,
                                bool mean_baseline) {
  check_shape(mdp, theta);
  const std::size_t K = mdp.num_actions();
  Vector grad = Vector::Zero(theta.size());
  if (batch.empty()) return grad;
  const Matrix pi = policy_table(theta);
  const double gamma = mdp.discount();

  auto reward_to_go = [gamma](const Trajectory& tr) {
    std::vector<double> g(tr.costs.size());
    double acc = 0.0;
    for (std::size_t t = tr.costs.size(); t-- > 0;) {
      acc += std::pow(gamma, static_cast<double>(t)) * tr.costs[t];
      g[t] = acc;
    }
    return g;
  };

  std::vector<double> baseline;
  if (mean_baseline) {
    for (const auto& tr : batch) {
      const auto g = reward_to_go(tr);
      if (baseline.size() < g.size()) baseline.resize(g.size(), 0.0);
      for (std::size_t t = 0; t < g.size(); ++t) baseline[t] += g[t] / static_cast<double>(batch.size());
    }
  }

  for (const auto& tr : batch) {
    const auto g = reward_to_go(tr);
    for (std::size_t t = 0; t < tr.actions.size(); ++t) {
      const double ret = g[t] - (mean_baseline ? baseline[t] : 0.0);
      if (ret == 0.0) continue;
      const std::size_t z = tr.states[t];
      const std::size_t row = theta.row_of(z);
      for (std::size_t a = 0; a < K; ++a) {
        grad(theta.param_index(row, a)) += ret * ((a == tr.actions[t] ? 1.0 : 0.0) - pi(z, a));
      }
    }
  }
  return grad / static_cast<double>(batch.size());
}

void write_batch(std::ostream& out, const MaskMdp& mdp, std::span<const Trajectory> batch) {
  out << "# trajectory batch\n";
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch[i];
    out << "trajectory " << i << "\nstates";
    for (std::size_t z : tr.states) out << ' ' << mdp.aug_label(z);
    out << "\nactions";
    for (std::size_t a : tr.actions) out << ' ' << mdp.action_labels()[a];
    out << "\nobservations";
    for (std::size_t o : tr.observations) out << ' ' << mdp.observation_labels()[o];
    out << "\ncosts";
    for (double c : tr.costs) {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), c);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

std::vector<Trajectory> read_batch(std::istream& in, const MaskMdp& mdp, const std::string& source) {
  std::map<std::string, std::size_t> aug, act, obs;
  for (std::size_t z = 0; z < mdp.size(); ++z) aug[mdp.aug_label(z)] = z;
  for (std::size_t a = 0; a < mdp.num_actions(); ++a) act[mdp.action_labels()[a]] = a;
  for (std::size_t o = 0; o < mdp.num_observations(); ++o) obs[mdp.observation_labels()[o]] = o;

  std::vector<Trajectory> batch;
  std::string line;
  std::size_t line_no = 0;
  auto lookup = [&](const std::map<std::string, std::size_t>& m, const std::string& key) {
    auto it = m.find(key);
    if (it == m.end()) throw ParseError(source, line_no, "unknown label '" + key + "'");
    return it->second;
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key.front() == '#') continue;
    if (key == "trajectory") {
      batch.emplace_back();
      continue;
    }
    if (batch.empty()) throw ParseError(source, line_no, "record before 'trajectory'");
    Trajectory& tr = batch.back();
    for (std::string tok; ls >> tok;) {
      if (key == "states") {
        tr.states.push_back(lookup(aug, tok));
      } else if (key == "actions") {
        tr.actions.push_back(lookup(act, tok));
      } else if (key == "observations") {
        tr.observations.push_back(lookup(obs, tok));
      } else if (key == "costs") {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) throw ParseError(source, line_no, "bad cost '" + tok + "'");
        tr.costs.push_back(v);
      } else {
        throw ParseError(source, line_no, "unknown key '" + key + "'");
      }
    }
  }
  return batch;
}

}  // namespace opacity
