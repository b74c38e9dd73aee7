#include "basisfit/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace basisfit {

namespace {

enum Stream : std::uint64_t { kSceneStream = 1, kBasisStream = 2, kSamplerStream = 3 };

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(threads, static_cast<int>(n))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

}  // namespace

int thread_budget() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("BASISFIT_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return std::min(v, hw);
  }
  return hw;
}

Instance build_instance(const ExperimentConfig& cfg, std::uint64_t seed) {
  Scene scene = generate_scene(cfg.scene, cfg.activation, derive_seed(seed, kSceneStream));
  GeneratedBases bases = generate_bases(scene, cfg.channel_plan, cfg.basis_mode, derive_seed(seed, kBasisStream));
  Fieldd dense = flatten_dense(bases.bases);
  SamplerConfig sc = cfg.sampler;
  sc.seed = derive_seed(seed, kSamplerStream);
  SampledDepths sampled = sample_sparse(scene, sc);
  BasisStack stack = gather_rows(dense, sampled.samples.pixel_ids);
  return Instance{std::move(scene), std::move(bases), std::move(dense), std::move(sampled), std::move(stack)};
}

VariantOutcome run_variant(const Instance& inst, const Variant& variant, const DepthActivation& act,
                           double depth_cap) {
  FitResult fit_result = fit(inst.stack, inst.sampled.samples, act, variant.fit);
  DepthGrid dense = predict_dense(inst.dense, fit_result.weights, act);
  MetricReport metrics = evaluate(dense, inst.scene.depth, depth_cap);
  return {std::move(fit_result), std::move(dense), metrics};
}

std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg, int threads) {
  const auto variants = experiment_variants(cfg);
  std::vector<std::vector<ExperimentRow>> per_seed(cfg.seeds.size());

  parallel_for(cfg.seeds.size(), threads, [&](std::size_t si) {
    const std::uint64_t seed = cfg.seeds[si];
    auto& rows = per_seed[si];
    std::optional<Instance> inst;
    std::string build_error;
    try {
      inst.emplace(build_instance(cfg, seed));
    } catch (const Error& e) {
      build_error = std::string(to_string(e.code()));
    }
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
      ExperimentRow row;
      row.seed = seed;
      row.variant = variants[vi].tag;
      row.variant_index = vi;
      if (!inst) {
        row.status = build_error;
        rows.push_back(row);
        continue;
      }
      row.n_samples = static_cast<long>(inst->sampled.samples.count());
      try {
        const auto t0 = std::chrono::steady_clock::now();
        const VariantOutcome out = run_variant(*inst, variants[vi], cfg.activation, cfg.metric_depth_cap);
        row.wall_ms = elapsed_ms(t0);
        row.metrics = out.metrics;
        row.n_flagged = static_cast<long>(out.fit.outlier_count());
      } catch (const Error& e) {
        row.status = std::string(to_string(e.code()));
      }
      rows.push_back(row);
    }
  });

  std::vector<ExperimentRow> rows;
  for (auto& r : per_seed) rows.insert(rows.end(), r.begin(), r.end());
  std::stable_sort(rows.begin(), rows.end(), [](const ExperimentRow& a, const ExperimentRow& b) {
    return a.seed != b.seed ? a.seed < b.seed : a.variant_index < b.variant_index;
  });
  return rows;
}

std::string experiment_csv(const std::vector<ExperimentRow>& rows) {
  std::ostringstream os;
  os << "seed,variant,status,mae,rmse,delta1,delta2,delta3,irmse,n_evaluated,depth_cap,n_samples,n_flagged\n";
  for (const auto& r : rows) {
    os << r.seed << ',' << r.variant << ',' << r.status << ',';
    if (r.status == "ok") {
      const auto& m = r.metrics;
      os << fmt(m.mae) << ',' << fmt(m.rmse) << ',' << fmt(m.delta1) << ',' << fmt(m.delta2) << ','
         << fmt(m.delta3) << ',' << fmt(m.irmse) << ',' << m.n_evaluated << ',' << fmt(m.depth_cap);
    } else {
      os << ",,,,,,,";
    }
    os << ',' << r.n_samples << ',' << r.n_flagged << '\n';
  }
  return os.str();
}

std::string timing_csv(const std::vector<ExperimentRow>& rows) {
  std::ostringstream os;
  os << "seed,variant,wall_ms\n";
  for (const auto& r : rows) os << r.seed << ',' << r.variant << ',' << fmt(r.wall_ms) << '\n';
  return os.str();
}

std::string experiment_summary_json(const std::vector<ExperimentRow>& rows) {
  struct Acc {
    std::size_t order = 0;
    long n_ok = 0, n_failed = 0;
    std::map<std::string, std::vector<double>> values;
  };
  std::map<std::string, Acc> by_variant;
  for (const auto& r : rows) {
    auto& acc = by_variant[r.variant];
    acc.order = r.variant_index;
    if (r.status != "ok") {
      ++acc.n_failed;
      continue;
    }
    ++acc.n_ok;
    const auto& m = r.metrics;
    acc.values["mae"].push_back(m.mae);
    acc.values["rmse"].push_back(m.rmse);
    acc.values["delta1"].push_back(m.delta1);
    acc.values["delta2"].push_back(m.delta2);
    acc.values["delta3"].push_back(m.delta3);
    acc.values["irmse"].push_back(m.irmse);
    acc.values["n_flagged"].push_back(static_cast<double>(r.n_flagged));
    acc.values["wall_ms"].push_back(r.wall_ms);
  }
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& [name, acc] : by_variant) order.emplace_back(acc.order, name);
  std::sort(order.begin(), order.end());
  for (const auto& [idx, name] : order) {
    const auto& acc = by_variant[name];
    nlohmann::ordered_json v;
    v["n_ok"] = acc.n_ok;
    v["n_failed"] = acc.n_failed;
    for (const auto& [metric, xs] : acc.values) {
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
      v[metric] = {{"mean", mean}, {"std", sd}};
    }
    out[name] = v;
  }
  return out.dump(2);
}

double GradcheckInstance::max_error() const { return std::max({err_basis, err_targets, err_depths}); }

FitProblem gradcheck_problem(const GradcheckConfig& cfg, const DepthActivation& act, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = cfg.n_samples, p = cfg.n_channels + 1;

  FitProblem prob;
  prob.act = act;
  prob.cfg = FitConfig{cfg.lambda, cfg.iterations, cfg.robust, 1.0};
  prob.basis.resize(n, p);
  prob.basis.col(0).setOnes();
  for (int j = 1; j < p; ++j)
    for (int i = 0; i < n; ++i) prob.basis(i, j) = 0.5 * normal(rng);

  Eigen::VectorXd w_true(p);
  w_true(0) = inverse(act, 8.0);
  for (int j = 1; j < p; ++j) w_true(j) = 0.3 * normal(rng);
  prob.depths = forward(act, core::affine_logits(prob.basis, w_true));
  for (int i = 0; i < n; ++i) {
    if (unit(rng) < cfg.outlier_fraction) prob.depths(i) *= 0.5 + unit(rng);
    else prob.depths(i) += cfg.noise_sigma * normal(rng);
  }
  prob.sigmas = Eigen::VectorXd::Constant(n, std::max(cfg.noise_sigma, kSigmaFloor));
  return prob;
}

GradcheckReport run_gradcheck(const GradcheckConfig& cfg, const DepthActivation& act, std::uint64_t base_seed) {
  GradcheckReport report;
  report.tolerance = cfg.tolerance;
  for (int k = 0; k < cfg.instances; ++k) {
    GradcheckInstance inst;
    bool done = false;
    for (int attempt = 0; attempt <= cfg.max_redraws && !done; ++attempt) {
      const std::uint64_t seed = derive_seed(base_seed, (std::uint64_t(k) << 8) + std::uint64_t(attempt));
      FitProblem prob = gradcheck_problem(cfg, act, seed);
      // Keep every depth clear of the inverse clamp so the stencil never crosses it.
      if ((prob.depths.array() < act.clamp_floor() + 1e-2).any()) {
        ++inst.redraws;
        continue;
      }
      std::mt19937_64 rng(derive_seed(seed, 99));
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::VectorXd w_ref(prob.basis.cols());
      for (Eigen::Index j = 0; j < w_ref.size(); ++j) w_ref(j) = normal(rng);
      const WeightLoss loss = [&w_ref](const Eigen::VectorXd& w) { return 0.5 * (w - w_ref).squaredNorm(); };

      const BasisStack stack(prob.basis);
      const SparseDepthSet samples{prob.depths, prob.sigmas, {}};
      FitGradients analytic;
      try {
        if (prob.cfg.iterations == 0) {
          const FitResult res = fit_linear(stack, samples, act, prob.cfg.lambda);
          analytic = backward_linear(stack, samples, act, res, prob.cfg.lambda, res.weights - w_ref);
        } else {
          const TapedFit taped = fit_gauss_newton_taped(stack, samples, act, prob.cfg);
          analytic = backward_gn(taped.tape, taped.result.weights - w_ref, cfg.kink_margin);
        }
      } catch (const Error& e) {
        if (e.code() != ErrorCode::KinkProximity) throw;
        ++inst.redraws;
        continue;
      }
      const FitGradients numeric = finite_diff_oracle(prob, loss, cfg.step);
      inst.seed = seed;
      inst.err_basis = gradient_rel_error(analytic.grad_basis, numeric.grad_basis);
      inst.err_targets = gradient_rel_error(analytic.grad_targets, numeric.grad_targets);
      inst.err_depths = gradient_rel_error(analytic.grad_depths, numeric.grad_depths);
      done = true;
    }
    if (!done)
      throw Error(ErrorCode::KinkProximity,
                  "gradcheck instance " + std::to_string(k) + " could not be drawn away from the Huber kink");
    report.max_err_basis = std::max(report.max_err_basis, inst.err_basis);
    report.max_err_targets = std::max(report.max_err_targets, inst.err_targets);
    report.max_err_depths = std::max(report.max_err_depths, inst.err_depths);
    report.instances.push_back(inst);
  }
  report.pass = report.max_err_basis <= cfg.tolerance && report.max_err_targets <= cfg.tolerance &&
                report.max_err_depths <= cfg.tolerance;
  return report;
}

std::vector<BenchRow> run_bench(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto variants = experiment_variants(cfg);
  std::vector<BenchRow> rows;
  for (std::size_t ci = 0; ci < cfg.bench.cases.size(); ++ci) {
    const BenchCase& bc = cfg.bench.cases[ci];
    ExperimentConfig ec = cfg;
    ec.scene.height = bc.height;
    ec.scene.width = bc.width;
    ec.scene.kind = SceneKind::RandomSmooth;
    ec.channel_plan = bc.channel_plan;
    ec.sampler.count = bc.samples;
    const Instance inst = build_instance(ec, derive_seed(seed, 1000 + ci));

    for (const auto& v : variants) {
      std::vector<double> times;
      for (int r = 0; r < cfg.bench.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const FitResult res = fit(inst.stack, inst.sampled.samples, cfg.activation, v.fit);
        times.push_back(elapsed_ms(t0));
        if (!res.weights.allFinite()) throw Error(ErrorCode::NotPositiveDefinite, "non-finite weights in bench fit");
      }
      std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());
      rows.push_back(BenchRow{v.tag, bc.height, bc.width, static_cast<int>(inst.sampled.samples.count()),
                              static_cast<int>(inst.stack.dim()), times[times.size() / 2]});
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "variant,height,width,samples,dim,median_ms\n";
  for (const auto& r : rows)
    os << r.variant << ',' << r.height << ',' << r.width << ',' << r.samples << ',' << r.dim << ','
       << fmt(r.median_ms) << '\n';
  return os.str();
}

}  // namespace basisfit
