#pragma once

// JSON experiment configuration. Every field has a default; see README.md for the schema.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "basisfit/activation.hpp"
#include "basisfit/fitter.hpp"
#include "basisfit/synth.hpp"

namespace basisfit {

struct GradcheckConfig {
  int instances = 20;
  int n_samples = 30;
  int n_channels = 8;
  double lambda = 1e-3;
  int iterations = 2;
  bool robust = true;
  double noise_sigma = 0.05;
  double outlier_fraction = 0.2;
  double step = 1e-6;
  double tolerance = 1e-4;
  // Wider than backward_gn's default so no finite-difference stencil straddles the kink.
  double kink_margin = 1e-3;
  int max_redraws = 16;
};

struct BenchCase {
  int height = 512;
  int width = 512;
  int samples = 1024;
  std::vector<int> channel_plan{4, 8, 16, 32};
};

struct BenchConfig {
  std::vector<BenchCase> cases{BenchCase{}};
  int repeats = 21;
};

struct ExperimentConfig {
  SceneParams scene;
  std::vector<int> channel_plan{4, 8, 16, 32};
  bool channel_plan_given = false;
  BasisMode basis_mode = BasisMode::Realizable;
  SamplerConfig sampler;
  DepthActivation activation;
  FitConfig fit;
  double default_sigma = 1.0;  // sigma for sparse files without a sigma channel
  double metric_depth_cap = 80.0;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> variants;  // empty: lsf, lsf{k}, lsf{k}+ with k = fit.iterations
  std::filesystem::path output_dir = "out";
  GradcheckConfig gradcheck;
  BenchConfig bench;
};

/// Parses JSON text; throws Error(Config) on malformed input or invalid values.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Effective configuration, defaults filled in.
std::string dump_config(const ExperimentConfig& cfg);

struct Variant {
  std::string tag;
  FitConfig fit;
};

/// "lsf" -> linear, "lsfK" -> K plain Gauss-Newton steps, "lsfK+" -> K robust steps.
Variant parse_variant(const std::string& tag, const FitConfig& base);
std::vector<Variant> experiment_variants(const ExperimentConfig& cfg);

}  // namespace basisfit
