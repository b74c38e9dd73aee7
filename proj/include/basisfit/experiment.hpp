#pragma once

// Seeded experiment harness: instance construction, the lsf / lsfK / lsfK+ ablation
// table, gradient checks and the fit timing benchmark.

#include <cstdint>
#include <string>
#include <vector>

#include "basisfit/backward.hpp"
#include "basisfit/config.hpp"
#include "basisfit/metrics.hpp"
#include "basisfit/multiscale.hpp"
#include "basisfit/synth.hpp"

namespace basisfit {

/// Threads allowed by BASISFIT_THREADS (falls back to hardware concurrency, at least 1).
int thread_budget();

struct Instance {
  Scene scene;
  GeneratedBases bases;
  Fieldd dense;  // flatten_dense(bases)
  SampledDepths sampled;
  BasisStack stack;
};

/// Scene, bases and samples for one seed; each draws from its own derived stream.
Instance build_instance(const ExperimentConfig& cfg, std::uint64_t seed);

struct VariantOutcome {
  FitResult fit;
  DepthGrid dense;
  MetricReport metrics;
};

VariantOutcome run_variant(const Instance& inst, const Variant& variant, const DepthActivation& act,
                           double depth_cap);

struct ExperimentRow {
  std::uint64_t seed = 0;
  std::string variant;
  std::size_t variant_index = 0;
  std::string status = "ok";
  MetricReport metrics;
  long n_samples = 0;
  long n_flagged = 0;
  double wall_ms = 0.0;
};

/// Rows sorted by (seed, variant order) regardless of thread schedule.
std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg, int threads);

/// Fixed header: seed,variant,status,mae,rmse,delta1,delta2,delta3,irmse,n_evaluated,depth_cap,n_samples,n_flagged
std::string experiment_csv(const std::vector<ExperimentRow>& rows);
/// seed,variant,wall_ms
std::string timing_csv(const std::vector<ExperimentRow>& rows);
/// Mean and standard deviation of every metric per variant.
std::string experiment_summary_json(const std::vector<ExperimentRow>& rows);

struct GradcheckInstance {
  std::uint64_t seed = 0;
  int redraws = 0;
  double err_basis = 0.0;
  double err_targets = 0.0;
  double err_depths = 0.0;
  double max_error() const;
};

struct GradcheckReport {
  std::vector<GradcheckInstance> instances;
  double tolerance = 0.0;
  double max_err_basis = 0.0;
  double max_err_targets = 0.0;
  double max_err_depths = 0.0;
  bool pass = false;
};

/// Random fit problem used by the gradient check (bias + Gaussian features,
/// noisy and partially corrupted depths).
FitProblem gradcheck_problem(const GradcheckConfig& cfg, const DepthActivation& act, std::uint64_t seed);

/// backward_linear (iterations == 0) or backward_gn against finite_diff_oracle with
/// loss 1/2 ||w - w_ref||^2. Instances hitting KinkProximity are redrawn.
GradcheckReport run_gradcheck(const GradcheckConfig& cfg, const DepthActivation& act, std::uint64_t base_seed);

struct BenchRow {
  std::string variant;
  int height = 0;
  int width = 0;
  int samples = 0;
  int dim = 0;  // fitted dimension incl. bias
  double median_ms = 0.0;
};

/// Median-of-repeats wall time of the fit alone (linear init plus any Gauss-Newton
/// steps) per (variant, case), on a RandomSmooth scene of the case size.
std::vector<BenchRow> run_bench(const ExperimentConfig& cfg, std::uint64_t seed);

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace basisfit
