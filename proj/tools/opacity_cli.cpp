// opacity: synthesize, evaluate and check dynamic sensor masks.
//
// Exit codes: 0 ok, 1 other failure, 2 scenario/policy parse error or
// missing file, 3 diverged parameters, 4 policy/model shape mismatch,
// 5 gradient check failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <omp.h>

#include "CLI11.hpp"
#include "opacity/cost_value.hpp"
#include "opacity/entropy.hpp"
#include "opacity/inference.hpp"
#include "opacity/kernels.hpp"
#include "opacity/optimizer.hpp"
#include "opacity/policy.hpp"
#include "opacity/rng.hpp"
#include "opacity/scenario_io.hpp"
#include "opacity/scenarios.hpp"

namespace fs = std::filesystem;
using namespace opacity;

namespace {

enum Exit { kOk = 0, kOther = 1, kParse = 2, kDiverged = 3, kShape = 4, kGradcheck = 5 };

struct Options {
  std::string scenario;
  std::optional<double> gamma, epsilon, beta;
  OptimizerHints hints;  // flags given on the command line
  SynthesisConfig synth;
  std::string mode = "augmented";
  int threads = 0;
  std::string output_dir;
  bool no_timing = false;
  bool quiet = false;
  std::string policy;
  std::size_t samples = 20000;
  std::size_t probes = 20;
  double theta_scale = 1.0;
  double tolerance = 1e-4;
};

Scenario load(const Options& opt) {
  ScenarioOverrides ov;
  ov.beta = opt.beta;
  ov.gamma = opt.gamma;
  ov.epsilon = opt.epsilon;
  Scenario sc = load_scenario(opt.scenario, ov);
  for (const auto& w : sc.warnings) std::cerr << "warning: " << w << '\n';
  return sc;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Entropy of the mask: exact when the sequence space is small enough,
// otherwise a Monte-Carlo estimate from `samples` trajectories.
EntropyEstimate entropy_of(const MaskMdp& mdp, const PolicyParams& theta, std::size_t samples, std::uint64_t seed) {
  if (enumeration_feasible(mdp)) return exact_conditional_entropy(mdp, theta);
  const auto batch = sample_trajectories(mdp, theta, samples, derive_seed(seed, 0, 7));
  const auto seqs = observation_sequences(batch);
  return sampled_conditional_entropy(mdp, theta, seqs);
}

std::string describe(const EntropyEstimate& h) {
  if (h.mode == EstimateMode::exact) return fmt(h.value) + " (exact)";
  return fmt(h.value) + " +- " + fmt(h.std_error) + " (sampled, n=" + std::to_string(h.sample_count) + ")";
}

fs::path output_dir(const Options& opt) {
  if (!opt.output_dir.empty()) return opt.output_dir;
  if (const char* env = std::getenv("OPACITY_OUTPUT_DIR"); env != nullptr && *env != '\0') return env;
  return "opacity_out";
}

int run_synthesize(const Options& opt) {
  const Scenario sc = load(opt);
  const MaskMdp mdp = build_mask_mdp(sc.spec);
  // Library defaults, then the scenario's optimizer section, then flags.
  SynthesisConfig cfg = opt.synth;
  cfg.mode = conditioning_from_string(opt.mode);
  for (const OptimizerHints* h : {&sc.optimizer, &opt.hints}) {
    if (h->iterations) cfg.iterations = *h->iterations;
    if (h->batch_size) cfg.batch_size = *h->batch_size;
    if (h->batches_per_iter) cfg.batches_per_iter = *h->batches_per_iter;
    if (h->eta) cfg.eta = *h->eta;
    if (h->kappa) cfg.kappa = *h->kappa;
    if (h->lambda0) cfg.lambda0 = *h->lambda0;
  }

  const fs::path dir = output_dir(opt);
  fs::create_directories(dir);
  std::ofstream probe(dir / "trace.csv");
  if (!probe) {
    std::cerr << "error: cannot write to " << dir << '\n';
    return kOther;
  }

  ProgressCallback progress;
  if (!opt.quiet) {
    const std::size_t every = std::max<std::size_t>(1, cfg.iterations / 20);
    progress = [every](const TraceRow& r) {
      if (r.iteration % every == 0) {
        std::cerr << "iter " << r.iteration << "  H " << fmt(r.entropy) << "  V " << fmt(r.value) << "  lambda "
                  << fmt(r.lambda) << '\n';
      }
    };
  }

  const auto start = std::chrono::steady_clock::now();
  SynthesisResult result;
  try {
    result = synthesize(mdp, cfg, progress);
  } catch (const DivergedParameters& e) {
    write_trace_csv(probe, e.trace(), !opt.no_timing);
    std::cerr << "error: " << e.what() << '\n';
    return kDiverged;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  write_trace_csv(probe, result.trace, !opt.no_timing);
  {
    std::ofstream out(dir / "policy.txt");
    write_policy(out, result.theta, mdp);
  }
  const EntropyEstimate h = entropy_of(mdp, result.theta, opt.samples, cfg.seed);
  const double cost = exact_value(mdp, result.theta);
  std::ostringstream summary;
  summary << "scenario " << sc.name << '\n'
          << "epsilon " << fmt(mdp.budget()) << '\n'
          << "iterations " << result.trace.rows.size() << '\n'
          << "final_entropy " << fmt(h.value) << '\n'
          << "entropy_mode " << (h.mode == EstimateMode::exact ? "exact" : "sampled") << '\n'
          << "final_cost " << fmt(cost) << '\n'
          << "final_lambda " << fmt(result.lambda) << '\n';
  if (!opt.no_timing) summary << "wall_seconds " << fmt(wall) << '\n';
  {
    std::ofstream out(dir / "summary.txt");
    out << summary.str();
  }
  std::cout << summary.str();
  return kOk;
}

PolicyParams load_policy(const Options& opt, const Scenario& sc, const MaskMdp& mdp) {
  const Conditioning mode = conditioning_from_string(opt.mode);
  if (opt.policy == "builtin:no-masking") return no_masking_policy(sc.spec, mode);
  if (opt.policy == "builtin:final-state") return final_state_masking_policy(sc.spec, mode);
  if (opt.policy == "builtin:uniform") return PolicyParams::zeros(mdp, mode);
  std::ifstream in(opt.policy);
  if (!in) throw ParseError(opt.policy, 0, "cannot open policy file");
  return read_policy(in, mdp, opt.policy);
}

int run_evaluate(const Options& opt) {
  const Scenario sc = load(opt);
  const MaskMdp mdp = build_mask_mdp(sc.spec);
  const PolicyParams theta = load_policy(opt, sc, mdp);
  const EntropyEstimate h = entropy_of(mdp, theta, opt.samples, opt.synth.seed);
  std::cout << "scenario " << sc.name << '\n'
            << "entropy " << describe(h) << '\n'
            << "expected_cost " << fmt(exact_value(mdp, theta)) << '\n';
  return kOk;
}

// Fourth-order central difference of f at theta along every coordinate.
Vector numeric_gradient(const std::function<double(const PolicyParams&)>& f, const PolicyParams& theta, double h) {
  Vector g(theta.size());
  PolicyParams probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double x = theta.values()(i);
    auto at = [&](double d) {
      probe.values()(i) = x + d;
      return f(probe);
    };
    g(i) = (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
    probe.values()(i) = x;
  }
  return g;
}

double max_relative_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a(i)), std::abs(b(i)), 1e-8});
    worst = std::max(worst, std::abs(a(i) - b(i)) / den);
  }
  return worst;
}

int run_gradcheck(const Options& opt) {
  const Scenario sc = load(opt);
  const MaskMdp mdp = build_mask_mdp(sc.spec);
  PolicyParams theta = PolicyParams::zeros(mdp, conditioning_from_string(opt.mode));
  Rng rng(derive_seed(opt.synth.seed, 0, 11));
  for (Eigen::Index i = 0; i < theta.values().size(); ++i) {
    theta.values()(i) = opt.theta_scale * (2.0 * rng.uniform() - 1.0);
  }
  constexpr double h = 1e-3;
  const auto batch = sample_trajectories(mdp, theta, opt.probes, derive_seed(opt.synth.seed, 0, 12));

  double err_obs = 0.0;
  double err_secret = 0.0;
  const ObserverHmm hmm(mdp, theta);
  for (const auto& traj : batch) {
    const auto& y = traj.observations;
    const SecretPosterior post = secret_posterior(hmm, y, true);
    err_obs = std::max(err_obs, max_relative_error(post.grad_p_obs, numeric_gradient(
                                                                        [&](const PolicyParams& t) {
                                                                          return sequence_probability(ObserverHmm(mdp, t), y);
                                                                        },
                                                                        theta, h)));
    err_secret = std::max(err_secret, max_relative_error(post.grad_p_secret, numeric_gradient(
                                                                                  [&](const PolicyParams& t) {
                                                                                    return secret_posterior(ObserverHmm(mdp, t), y).p_secret;
                                                                                  },
                                                                                  theta, h)));
  }
  const double err_value = max_relative_error(
      exact_value_gradient(mdp, theta),
      numeric_gradient([&](const PolicyParams& t) { return exact_value(mdp, t); }, theta, h));

  bool ok = err_obs < opt.tolerance && err_secret < opt.tolerance && err_value < opt.tolerance;
  std::cout << "probes " << batch.size() << '\n'
            << "grad_p_obs max_rel_err " << fmt(err_obs) << '\n'
            << "grad_p_secret max_rel_err " << fmt(err_secret) << '\n'
            << "grad_value max_rel_err " << fmt(err_value) << '\n';
  if (enumeration_feasible(mdp)) {
    const double err_entropy = max_relative_error(
        exact_entropy_gradient(mdp, theta),
        numeric_gradient([&](const PolicyParams& t) { return exact_conditional_entropy(mdp, t).value; }, theta, h));
    std::cout << "grad_entropy max_rel_err " << fmt(err_entropy) << '\n';
    ok = ok && err_entropy < opt.tolerance;
  } else {
    std::cout << "grad_entropy skipped (sequence space exceeds the enumeration cap)\n";
  }
  std::cout << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kOk : kGradcheck;
}

int run_enumerate_check(const Options& opt) {
  const Scenario sc = load(opt);
  const MaskMdp mdp = build_mask_mdp(sc.spec);
  const PolicyParams theta = load_policy(opt, sc, mdp);
  const auto exact = kernels::entropy_exact_parallel(mdp, theta, false, kDefaultEnumerationCap);
  const auto batch = sample_trajectories(mdp, theta, opt.samples, derive_seed(opt.synth.seed, 0, 13));
  const auto seqs = observation_sequences(batch);
  const EntropyEstimate sampled = sampled_conditional_entropy(mdp, theta, seqs);
  const double mass_err = std::abs(exact.total_probability - 1.0);
  const double gap = std::abs(sampled.value - exact.entropy);
  const double allowed = std::max(4.0 * sampled.std_error, 1e-3);
  const bool ok = mass_err < 1e-9 && gap <= allowed;
  std::cout << "sequences " << exact.sequences << " (realizable " << exact.realizable << ")\n"
            << "total_probability " << fmt(exact.total_probability) << '\n'
            << "entropy_exact " << fmt(exact.entropy) << '\n'
            << "entropy_sampled " << describe(sampled) << '\n'
            << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? kOk : kOther;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic sensor-masking synthesis for final-state opacity"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("scenario", opt.scenario, "Scenario file (the .yaml suffix may be omitted)")->required();
    sub->add_option("--gamma", opt.gamma, "Override the discount")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--epsilon", opt.epsilon, "Override the masking budget")->check(CLI::NonNegativeNumber);
    sub->add_option("--beta", opt.beta, "Override every sensor's detection probability")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--seed", opt.synth.seed, "Master random seed");
    sub->add_option("--mode", opt.mode, "Policy conditioning")->check(CLI::IsMember({"augmented", "state_only"}));
    sub->add_option("--threads", opt.threads, "Cap on worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
    sub->add_option("--samples", opt.samples, "Trajectories for sampled entropy estimates")->check(CLI::PositiveNumber);
  };

  auto* syn = app.add_subcommand("synthesize", "Run primal-dual synthesis and write trace.csv, policy.txt, summary.txt");
  common(syn);
  syn->add_option("--iterations", opt.hints.iterations)->check(CLI::NonNegativeNumber);
  syn->add_option("--batch-size", opt.hints.batch_size)->check(CLI::PositiveNumber);
  syn->add_option("--batches-per-iter", opt.hints.batches_per_iter)->check(CLI::PositiveNumber);
  syn->add_option("--eta", opt.hints.eta)->check(CLI::PositiveNumber);
  syn->add_option("--kappa", opt.hints.kappa)->check(CLI::PositiveNumber);
  syn->add_option("--lambda0", opt.hints.lambda0)->check(CLI::NonNegativeNumber);
  syn->add_flag("--baseline", opt.synth.reinforce_baseline, "Subtract a batch-mean baseline in REINFORCE");
  syn->add_flag("--early-stop", opt.synth.early_stop, "Stop when the Lagrangian plateaus");
  syn->add_option("--output-dir", opt.output_dir, "Defaults to $OPACITY_OUTPUT_DIR, then ./opacity_out");
  syn->add_flag("--no-timing", opt.no_timing, "Write zero wall times so identical runs give identical files");
  syn->add_flag("-q,--quiet", opt.quiet);

  auto* eval = app.add_subcommand("evaluate", "Entropy and expected cost of a stored policy");
  common(eval);
  eval->add_option("--policy", opt.policy,
                   "Policy file, or builtin:no-masking, builtin:final-state, builtin:uniform")
      ->required();

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  common(grad);
  grad->add_option("--probes", opt.probes, "Observation sequences to probe")->check(CLI::PositiveNumber);
  grad->add_option("--theta-scale", opt.theta_scale, "Random parameters are drawn from [-s, s]");
  grad->add_option("--tolerance", opt.tolerance);

  auto* enumc = app.add_subcommand("enumerate-check", "Check total probability and exact-vs-sampled entropy");
  common(enumc);
  enumc->add_option("--policy", opt.policy, "Policy to check")->default_val("builtin:uniform");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (opt.threads > 0) omp_set_num_threads(opt.threads);

  try {
    if (*syn) return run_synthesize(opt);
    if (*eval) return run_evaluate(opt);
    if (*grad) return run_gradcheck(opt);
    if (*enumc) return run_enumerate_check(opt);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const ShapeMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kShape;
  } catch (const EnumerationTooLarge& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
