#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <vector>

#include "opacity/model.hpp"
#include "opacity/policy.hpp"

namespace opacity {

struct TraceRow {
  std::size_t iteration = 0;
  double entropy = 0.0;  // sampled H(W_T | Y; θ_k), bits
  double value = 0.0;    // sampled expected masking cost at θ_k
  double lambda = 0.0;   // multiplier after the dual update
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
  // Exact expected cost at θ_k; NaN when not tracked. Not part of trace.csv.
  double exact_value = std::numeric_limits<double>::quiet_NaN();
};

struct SynthesisTrace {
  std::vector<TraceRow> rows;
};

/// Header: iter,entropy,value,lambda,grad_norm,wall_s. With
/// `include_timing == false` the wall_s column is written as 0 so identical
/// runs produce identical files.
void write_trace_csv(std::ostream& out, const SynthesisTrace& trace, bool include_timing = true);
SynthesisTrace read_trace_csv(std::istream& in, const std::string& source = "trace.csv");

/// Raised when ‖θ‖∞ exceeds the configured bound; carries the trace so far.
class DivergedParameters : public Error {
 public:
  DivergedParameters(const std::string& what, SynthesisTrace trace) : Error(what), trace_(std::move(trace)) {}
  const SynthesisTrace& trace() const { return trace_; }

 private:
  SynthesisTrace trace_;
};

struct LagrangianState {
  PolicyParams theta;
  double lambda = 1.0;
  std::size_t iteration = 0;
  double eta = 1.0;
  double kappa = 0.01;
  SynthesisTrace trace;
};

/// L(θ, λ) = H + λ (ε − V).
double lagrangian(double entropy, double value, double lambda, double budget);

/// Inputs to one primal-dual update, all evaluated at the current θ.
struct StepInputs {
  Vector entropy_grad;
  Vector value_grad;
  double entropy_estimate = 0.0;
  double value_estimate = 0.0;
};

/// θ ← θ + η (∇H − λ∇V).
double primal_update(LagrangianState& state, const Vector& entropy_grad, const Vector& value_grad,
                     double divergence_bound = 1e4);
/// λ ← max(0, λ − κ (ε − V)).
void dual_update(LagrangianState& state, double value_estimate, double budget);

/// One full ascent-descent step; increments the iteration and appends a trace row.
/// Throws DivergedParameters when ‖θ‖∞ exceeds `divergence_bound`.
LagrangianState step(LagrangianState state, const StepInputs& in, double budget, double divergence_bound = 1e4);

struct SynthesisConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 1500;
  std::size_t batches_per_iter = 1;
  double eta = 1.0;
  double kappa = 0.01;
  double lambda0 = 1.0;
  std::uint64_t seed = 0;
  Conditioning mode = Conditioning::augmented;
  double divergence_bound = 1e4;
  bool reinforce_baseline = false;
  bool track_exact_value = true;
  // Stop once the 50-iteration moving average of |ΔL| drops below early_stop_tol.
  bool early_stop = false;
  double early_stop_tol = 1e-4;
  std::size_t early_stop_window = 50;
};

struct SynthesisResult {
  PolicyParams theta;
  double lambda = 0.0;
  SynthesisTrace trace;
};

using ProgressCallback = std::function<void(const TraceRow&)>;

/// Primal-dual policy gradient. Each iteration samples `batch_size`
/// trajectories at θ_k, records the batch entropy and cost, then walks the
/// `batches_per_iter` mini-batches in order, applying a primal update with
/// each mini-batch's gradients at the current θ. λ is updated once per
/// iteration from the full-batch cost estimate.
SynthesisResult synthesize(const MaskMdp& mdp, const SynthesisConfig& config,
                           const ProgressCallback& progress = {});

/// Same loop, starting from given parameters.
SynthesisResult synthesize_from(const MaskMdp& mdp, const SynthesisConfig& config, PolicyParams initial,
                                const ProgressCallback& progress = {});

}  // namespace opacity
