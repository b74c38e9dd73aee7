// basisfit command-line front end.
//
// Exit codes: 0 ok, 1 I/O / parse / dimension error, 2 numerical failure
// (fit error, gradient check out of tolerance, every experiment seed failed).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "basisfit/config.hpp"
#include "basisfit/experiment.hpp"
#include "basisfit/grid_io.hpp"
#include "basisfit/metrics.hpp"
#include "basisfit/multiscale.hpp"
#include "basisfit/synth.hpp"

namespace fs = std::filesystem;
using namespace basisfit;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitNumerical = 2;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool json = false;
  bool csv = false;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? parse_config("{}") : load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Format, "cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error(ErrorCode::Format, "failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Format, "cannot create " + dir.string() + ": " + ec.message());
}

ojson metrics_json(const MetricReport& m) {
  return {{"mae", m.mae},       {"rmse", m.rmse},   {"delta1", m.delta1},
          {"delta2", m.delta2}, {"delta3", m.delta3}, {"irmse", m.irmse},
          {"n_evaluated", m.n_evaluated}, {"depth_cap", m.depth_cap}};
}

ojson weights_json(const Eigen::VectorXd& w) {
  ojson arr = ojson::array();
  for (Eigen::Index i = 0; i < w.size(); ++i) arr.push_back(w(i));
  return arr;
}

int cmd_fit(const Common& c, const std::string& bases_path, const std::string& sparse_path) {
  const ExperimentConfig cfg = load(c);
  const Fieldd bases = read_grid(bases_path).field;
  if (cfg.channel_plan_given) {
    const int expected = std::accumulate(cfg.channel_plan.begin(), cfg.channel_plan.end(), 0) + 1;
    if (bases.channels() != expected)
      throw Error(ErrorCode::DimensionMismatch, "basis file has " + std::to_string(bases.channels()) +
                                                    " channels, channel_plan implies " + std::to_string(expected));
  }
  const Fieldd sparse_field = read_grid(sparse_path).field;
  if (sparse_field.height != bases.height || sparse_field.width != bases.width)
    throw Error(ErrorCode::DimensionMismatch, "sparse grid size does not match the basis grid");
  const SparseDepthSet samples = sparse_from_field(sparse_field, cfg.default_sigma);
  const BasisStack stack = gather_rows(bases, samples.pixel_ids);
  const FitResult res = fit(stack, samples, cfg.activation, cfg.fit);
  const DepthGrid dense = predict_dense(bases, res.weights, cfg.activation);

  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  write_grid(out / "depth.grid", depth_to_field(dense));
  Fieldd mask(bases.height, bases.width, 1);
  for (Eigen::Index i = 0; i < samples.count(); ++i)
    mask.data(samples.pixel_ids[static_cast<std::size_t>(i)], 0) = res.outlier_mask(i) ? 1.0 : 0.0;
  write_grid(out / "outlier_mask.grid", mask);
  ojson wj;
  wj["weights"] = weights_json(res.weights);
  wj["iterations"] = res.iterations_run;
  wj["n_samples"] = samples.count();
  wj["n_flagged"] = res.outlier_count();
  write_text(out / "weights.json", wj.dump(2) + "\n");
  if (c.json) std::cout << wj.dump(2) << "\n";
  else std::cout << "fit: " << samples.count() << " samples, " << res.outlier_count() << " flagged, wrote " << out.string() << "\n";
  return kExitOk;
}

int cmd_experiment(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const auto rows = run_experiment(cfg, thread_budget());
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  const std::string csv = experiment_csv(rows);
  const std::string summary = experiment_summary_json(rows);
  write_text(out / "results.csv", csv);
  write_text(out / "timing.csv", timing_csv(rows));
  write_text(out / "summary.json", summary + "\n");
  write_text(out / "config.json", dump_config(cfg) + "\n");
  if (c.csv) std::cout << csv;
  else std::cout << summary << "\n";
  for (const auto& r : rows)
    if (r.status == "ok") return kExitOk;
  std::cerr << "experiment: every seed failed\n";
  return kExitNumerical;
}

int cmd_gradcheck(const Common& c, std::optional<double> tolerance) {
  ExperimentConfig cfg = load(c);
  if (tolerance) cfg.gradcheck.tolerance = *tolerance;
  const GradcheckReport rep = run_gradcheck(cfg.gradcheck, cfg.activation, cfg.seeds.front());
  int redraws = 0;
  for (const auto& i : rep.instances) redraws += i.redraws;
  if (c.json) {
    ojson j{{"instances", rep.instances.size()}, {"redraws", redraws},
            {"path", cfg.gradcheck.iterations == 0 ? "linear" : "gauss_newton"},
            {"max_rel_err_basis", rep.max_err_basis}, {"max_rel_err_targets", rep.max_err_targets},
            {"max_rel_err_depths", rep.max_err_depths}, {"tolerance", rep.tolerance}, {"pass", rep.pass}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("gradcheck (%s): %zu instances, %d redraws\n", cfg.gradcheck.iterations == 0 ? "linear" : "gauss-newton",
                rep.instances.size(), redraws);
    std::printf("  max rel err basis   %.3e\n  max rel err targets %.3e\n  max rel err depths  %.3e\n",
                rep.max_err_basis, rep.max_err_targets, rep.max_err_depths);
    std::printf("  tolerance %.3e: %s\n", rep.tolerance, rep.pass ? "PASS" : "FAIL");
  }
  return rep.pass ? kExitOk : kExitNumerical;
}

int cmd_bench(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const auto rows = run_bench(cfg, cfg.seeds.front());
  const std::string csv = bench_csv(rows);
  if (!c.out.empty()) {
    ensure_dir(cfg.output_dir);
    write_text(cfg.output_dir / "bench.csv", csv);
  }
  if (c.json) {
    ojson arr = ojson::array();
    for (const auto& r : rows)
      arr.push_back({{"variant", r.variant}, {"height", r.height}, {"width", r.width}, {"samples", r.samples},
                     {"dim", r.dim}, {"median_ms", r.median_ms}});
    std::cout << arr.dump(2) << "\n";
  } else {
    std::cout << csv;
  }
  return kExitOk;
}

int cmd_synth(const Common& c) {
  const ExperimentConfig cfg = load(c);
  const std::uint64_t seed = cfg.seeds.front();
  const Instance inst = build_instance(cfg, seed);
  const fs::path out = cfg.output_dir;
  ensure_dir(out);
  const int h = inst.scene.height(), w = inst.scene.width();
  write_grid(out / "depth_gt.grid", depth_to_field(inst.scene.depth));
  write_grid(out / "bases.grid", inst.dense);
  write_grid(out / "sparse.grid", sparse_to_field(h, w, inst.sampled.samples));
  SparseDepthSet truth = inst.sampled.samples;
  truth.depths = inst.sampled.clean_depth;
  write_grid(out / "sparse_truth.grid", sparse_to_field(h, w, truth));
  ojson meta{{"seed", seed}, {"height", h}, {"width", w}, {"channel_plan", cfg.channel_plan},
             {"n_samples", inst.sampled.samples.count()}, {"n_outliers", inst.sampled.is_outlier.count()}};
  meta["w_true"] = inst.bases.w_true ? weights_json(*inst.bases.w_true) : ojson(nullptr);
  write_text(out / "w_true.json", meta.dump(2) + "\n");
  if (c.json) std::cout << meta.dump(2) << "\n";
  else std::cout << "synth: wrote " << h << "x" << w << " instance for seed " << seed << " to " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& pred_path, const std::string& gt_path, std::optional<double> cap) {
  const ExperimentConfig cfg = load(c);
  const DepthGrid pred = field_to_depth(read_grid(pred_path).field);
  const DepthGrid gt = field_to_depth(read_grid(gt_path).field);
  if (pred.height != gt.height || pred.width != gt.width)
    throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth grids differ in size");
  const MetricReport m = evaluate(pred, gt, cap.value_or(cfg.metric_depth_cap));
  if (c.csv) {
    std::printf("mae,rmse,delta1,delta2,delta3,irmse,n_evaluated,depth_cap\n%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld,%.17g\n",
                m.mae, m.rmse, m.delta1, m.delta2, m.delta3, m.irmse, m.n_evaluated, m.depth_cap);
  } else {
    std::cout << metrics_json(m).dump(2) << "\n";
  }
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file (defaults apply to every missing field)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--seed", c.seed, "replace the config seeds with this one");
  sub->add_flag("--json", c.json, "print JSON");
  sub->add_flag("--csv", c.csv, "print CSV");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Least-squares basis fitting for sparse-to-dense depth"};
  app.require_subcommand(1);
  Common common;

  std::string bases_path, sparse_path, pred_path, gt_path;
  std::optional<double> tolerance, cap;

  auto* fit_cmd = app.add_subcommand("fit", "fit weights to a sparse depth file and predict dense depth");
  add_common(fit_cmd, common);
  fit_cmd->add_option("--bases", bases_path, "H x W x (M+1) basis GridFile, channel 0 all ones")->required();
  fit_cmd->add_option("--sparse", sparse_path, "H x W x 1|2 sparse GridFile (depth, optional sigma; 0 = empty)")->required();

  auto* exp_cmd = app.add_subcommand("experiment", "seeded lsf / lsfK / lsfK+ ablation");
  add_common(exp_cmd, common);

  auto* gc_cmd = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  add_common(gc_cmd, common);
  gc_cmd->add_option("--tolerance", tolerance, "max relative error");

  auto* bench_cmd = app.add_subcommand("bench", "median fit timings");
  add_common(bench_cmd, common);

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic scene, bases and samples");
  add_common(synth_cmd, common);

  auto* eval_cmd = app.add_subcommand("eval", "metrics between two depth GridFiles");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--pred", pred_path, "predicted depth GridFile")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth depth GridFile")->required();
  eval_cmd->add_option("--cap", cap, "max ground-truth depth evaluated [m]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitIo;
  }

  try {
    if (*fit_cmd) return cmd_fit(common, bases_path, sparse_path);
    if (*exp_cmd) return cmd_experiment(common);
    if (*gc_cmd) return cmd_gradcheck(common, tolerance);
    if (*bench_cmd) return cmd_bench(common);
    if (*synth_cmd) return cmd_synth(common);
    if (*eval_cmd) return cmd_eval(common, pred_path, gt_path, cap);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_numerical() ? kExitNumerical : kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitIo;
}
