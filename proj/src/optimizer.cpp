#include "opacity/optimizer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>

#include "opacity/cost_value.hpp"
#include "opacity/kernels.hpp"
#include "opacity/rng.hpp"

namespace opacity {

namespace {

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

constexpr const char* kTraceHeader = "iter,entropy,value,lambda,grad_norm,wall_s";

}  // namespace

void write_trace_csv(std::ostream& out, const SynthesisTrace& trace, bool include_timing) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.rows) {
    out << r.iteration << ',' << shortest(r.entropy) << ',' << shortest(r.value) << ',' << shortest(r.lambda) << ','
        << shortest(r.grad_norm) << ',' << shortest(include_timing ? r.wall_seconds : 0.0) << '\n';
  }
}

SynthesisTrace read_trace_csv(std::istream& in, const std::string& source) {
  SynthesisTrace trace;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kTraceHeader) throw ParseError(source, 1, "unexpected trace header");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 6) throw ParseError(source, line_no, "expected 6 fields");
    double v[6];
    for (int i = 0; i < 6; ++i) {
      const auto& f = fields[i];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[i]);
      if (ec != std::errc() || ptr != f.data() + f.size()) throw ParseError(source, line_no, "bad number '" + f + "'");
    }
    TraceRow row;
    row.iteration = static_cast<std::size_t>(v[0]);
    row.entropy = v[1];
    row.value = v[2];
    row.lambda = v[3];
    row.grad_norm = v[4];
    row.wall_seconds = v[5];
    trace.rows.push_back(row);
  }
  return trace;
}

double lagrangian(double entropy, double value, double lambda, double budget) {
  return entropy + lambda * (budget - value);
}

double primal_update(LagrangianState& state, const Vector& entropy_grad, const Vector& value_grad,
                     double divergence_bound) {
  const Vector direction = entropy_grad - state.lambda * value_grad;
  state.theta.values() += state.eta * direction;
  const double sup = state.theta.values().cwiseAbs().maxCoeff();
  if (!state.theta.all_finite() || sup > divergence_bound) {
    throw DivergedParameters("policy parameters diverged at iteration " + std::to_string(state.iteration) +
                                 " (|theta|_inf = " + shortest(sup) + ")",
                             state.trace);
  }
  return direction.norm();
}

void dual_update(LagrangianState& state, double value_estimate, double budget) {
  state.lambda = std::max(0.0, state.lambda - state.kappa * (budget - value_estimate));
}

LagrangianState step(LagrangianState state, const StepInputs& in, double budget, double divergence_bound) {
  const double norm = primal_update(state, in.entropy_grad, in.value_grad, divergence_bound);
  dual_update(state, in.value_estimate, budget);
  TraceRow row;
  row.iteration = state.iteration;
  row.entropy = in.entropy_estimate;
  row.value = in.value_estimate;
  row.lambda = state.lambda;
  row.grad_norm = norm;
  state.trace.rows.push_back(row);
  ++state.iteration;
  return state;
}

SynthesisResult synthesize(const MaskMdp& mdp, const SynthesisConfig& config, const ProgressCallback& progress) {
  return synthesize_from(mdp, config, PolicyParams::zeros(mdp, config.mode), progress);
}

SynthesisResult synthesize_from(const MaskMdp& mdp, const SynthesisConfig& config, PolicyParams initial,
                                const ProgressCallback& progress) {
  if (!(config.eta > 0.0) || !(config.kappa > 0.0)) throw Error("step sizes eta and kappa must be positive");
  if (config.batch_size == 0 && config.iterations > 0) throw Error("batch size must be positive");
  if (config.batches_per_iter == 0 || config.batches_per_iter > std::max<std::size_t>(config.batch_size, 1)) {
    throw Error("batches_per_iter must lie in [1, batch_size]");
  }
  if (config.lambda0 < 0.0) throw Error("initial multiplier must be non-negative");

  LagrangianState state;
  state.theta = std::move(initial);
  state.lambda = config.lambda0;
  state.eta = config.eta;
  state.kappa = config.kappa;
  const double budget = mdp.budget();

  std::deque<double> lagrangian_deltas;
  double previous_lagrangian = std::numeric_limits<double>::quiet_NaN();

  for (std::size_t k = 0; k < config.iterations; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const auto batch = sample_trajectories(mdp, state.theta, config.batch_size, derive_seed(config.seed, k, 1));
    const auto sequences = observation_sequences(batch);
    const double value_estimate = sampled_value(mdp, batch).mean;

    TraceRow row;
    row.iteration = k;
    row.value = value_estimate;
    if (config.track_exact_value) row.exact_value = exact_value(mdp, state.theta);

    const std::size_t n = batch.size();
    const std::size_t parts = config.batches_per_iter;
    double norm_sum = 0.0;
    if (parts == 1) {
      const auto h = kernels::entropy_batch_parallel(mdp, state.theta, sequences, true);
      row.entropy = h.entropy;
      const Vector vg = reinforce_value_gradient(mdp, state.theta, batch, config.reinforce_baseline);
      norm_sum = primal_update(state, h.gradient, vg, config.divergence_bound);
    } else {
      row.entropy = kernels::entropy_batch_parallel(mdp, state.theta, sequences, false).entropy;
      for (std::size_t b = 0; b < parts; ++b) {
        const std::size_t begin = b * n / parts;
        const std::size_t end = (b + 1) * n / parts;
        const std::span<const Trajectory> traj(batch.data() + begin, end - begin);
        const std::span<const ObservationSeq> seqs(sequences.data() + begin, end - begin);
        const auto h = kernels::entropy_batch_parallel(mdp, state.theta, seqs, true);
        const Vector vg = reinforce_value_gradient(mdp, state.theta, traj, config.reinforce_baseline);
        norm_sum += primal_update(state, h.gradient, vg, config.divergence_bound);
      }
    }
    const double lagrangian_before = lagrangian(row.entropy, row.value, state.lambda, budget);
    dual_update(state, value_estimate, budget);
    ++state.iteration;

    row.lambda = state.lambda;
    row.grad_norm = norm_sum / static_cast<double>(parts);
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.trace.rows.push_back(row);
    if (progress) progress(row);

    if (config.early_stop) {
      if (!std::isnan(previous_lagrangian)) {
        lagrangian_deltas.push_back(std::abs(lagrangian_before - previous_lagrangian));
        if (lagrangian_deltas.size() > config.early_stop_window) lagrangian_deltas.pop_front();
      }
      previous_lagrangian = lagrangian_before;
      if (lagrangian_deltas.size() == config.early_stop_window) {
        double mean = 0.0;
        for (double d : lagrangian_deltas) mean += d;
        mean /= static_cast<double>(lagrangian_deltas.size());
        if (mean < config.early_stop_tol) break;
      }
    }
  }
  return {std::move(state.theta), state.lambda, std::move(state.trace)};
}

}  // namespace opacity
