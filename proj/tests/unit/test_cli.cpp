#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "basisfit/grid_io.hpp"
#include "basisfit/multiscale.hpp"
#include "basisfit/metrics.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace basisfit;

namespace {

const fs::path kWork = BASISFIT_WORK_DIR;
const fs::path kFixtures = BASISFIT_FIXTURE_DIR;

struct Run {
  int code;
  std::string output;
};

Run run(const std::string& args) {
  fs::create_directories(kWork);
  const std::string cmd = std::string("\"") + BASISFIT_CLI_PATH + "\" " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("fit on the shipped realizable fixture") {
  const fs::path out = kWork / "fit_fixture";
  const Run r = run("fit --bases " + q(kFixtures / "bases.grid") + " --sparse " + q(kFixtures / "sparse.grid") +
                    " --config " + q(kFixtures / "config.json") + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.code == 0);
  const DepthGrid pred = field_to_depth(read_grid(out / "depth.grid").field);
  const DepthGrid gt = field_to_depth(read_grid(kFixtures / "depth_gt.grid").field);
  CHECK(evaluate(pred, gt, 80.0).mae <= 1e-4);
  CHECK(fs::exists(out / "outlier_mask.grid"));
  const auto w = nlohmann::json::parse(slurp(out / "weights.json"));
  CHECK(w["weights"].size() == 7);
}

TEST_CASE("iterations=0 config writes the linear weights") {
  const fs::path out = kWork / "fit_linear";
  write(kWork / "lin.json", R"({"channel_plan": [2, 4], "fit": {"iterations": 0, "lambda": 1e-10}})");
  const Run r = run("fit --bases " + q(kFixtures / "bases.grid") + " --sparse " + q(kFixtures / "sparse.grid") +
                    " --config " + q(kWork / "lin.json") + " --out " + q(out));
  REQUIRE(r.code == 0);
  const Fieldd bases = read_grid(kFixtures / "bases.grid").field;
  const SparseDepthSet s = sparse_from_field(read_grid(kFixtures / "sparse.grid").field, 1.0);
  const FitResult lib = fit_linear(gather_rows(bases, s.pixel_ids), s, DepthActivation{}, 1e-10);
  const auto w = nlohmann::json::parse(slurp(out / "weights.json"))["weights"];
  REQUIRE(w.size() == static_cast<std::size_t>(lib.weights.size()));
  for (Eigen::Index i = 0; i < lib.weights.size(); ++i) CHECK(w[static_cast<std::size_t>(i)].get<double>() == lib.weights(i));
  CHECK(nlohmann::json::parse(slurp(out / "weights.json"))["iterations"] == 0);
}

TEST_CASE("exit codes") {
  const fs::path bases = kFixtures / "bases.grid";
  const std::string bytes = slurp(bases);
  write(kWork / "truncated.grid", bytes.substr(0, bytes.size() - 5));
  Run r = run("fit --bases " + q(kWork / "truncated.grid") + " --sparse " + q(kFixtures / "sparse.grid") + " --out " +
              q(kWork / "x"));
  CHECK(r.code == 1);
  CHECK(r.output.find("payload length") != std::string::npos);

  r = run("fit --bases " + q(kWork / "missing.grid") + " --sparse " + q(kFixtures / "sparse.grid"));
  CHECK(r.code == 1);

  write(kWork / "bad.json", "{\"seeds\": [1, 1]}");
  CHECK(run("experiment --config " + q(kWork / "bad.json")).code == 1);
  write(kWork / "broken.json", "{not json");
  CHECK(run("experiment --config " + q(kWork / "broken.json")).code == 1);
  CHECK(run("nonsense").code == 1);

  write(kWork / "plan.json", R"({"channel_plan": [4, 8]})");
  r = run("fit --bases " + q(bases) + " --sparse " + q(kFixtures / "sparse.grid") + " --config " + q(kWork / "plan.json") +
          " --out " + q(kWork / "x"));
  CHECK(r.code == 1);
  CHECK(r.output.find("channel_plan") != std::string::npos);

  // lambda = 0 with far fewer samples than channels cannot be factored.
  Fieldd few(16, 16, 1);
  few.data(3, 0) = 5.0;
  few.data(200, 0) = 6.0;
  write_grid(kWork / "few.grid", few);
  write(kWork / "zero.json", R"({"fit": {"lambda": 0, "iterations": 0}})");
  r = run("fit --bases " + q(bases) + " --sparse " + q(kWork / "few.grid") + " --config " + q(kWork / "zero.json") +
          " --out " + q(kWork / "x"));
  CHECK(r.code == 2);
  CHECK(r.output.find("NotPositiveDefinite") != std::string::npos);

  write_grid(kWork / "empty.grid", Fieldd(16, 16, 1));
  r = run("fit --bases " + q(bases) + " --sparse " + q(kWork / "empty.grid") + " --out " + q(kWork / "x"));
  CHECK(r.code == 2);
  CHECK(r.output.find("EmptySparseSet") != std::string::npos);

  write(kWork / "allfail.json", R"({"scene": {"height": 16, "width": 16, "depth_cap": 2}, "channel_plan": [2], "seeds": [1, 2]})");
  r = run("experiment --config " + q(kWork / "allfail.json") + " --out " + q(kWork / "allfail"));
  CHECK(r.code == 2);
}

TEST_CASE("experiment output is byte-identical on rerun") {
  write(kWork / "exp.json", R"({"scene": {"height": 32, "width": 32}, "channel_plan": [2, 4],
        "sampler": {"density": 0.1, "noise_sigma": 0.05, "outlier_fraction": 0.3}, "seeds": [1, 2, 3]})");
  REQUIRE(run("experiment --config " + q(kWork / "exp.json") + " --out " + q(kWork / "exp_a")).code == 0);
  setenv("BASISFIT_THREADS", "1", 1);
  REQUIRE(run("experiment --config " + q(kWork / "exp.json") + " --out " + q(kWork / "exp_b")).code == 0);
  unsetenv("BASISFIT_THREADS");
  CHECK(slurp(kWork / "exp_a" / "results.csv") == slurp(kWork / "exp_b" / "results.csv"));
  CHECK(fs::exists(kWork / "exp_a" / "summary.json"));
  CHECK(fs::exists(kWork / "exp_a" / "timing.csv"));
  CHECK(run("experiment --config " + q(kWork / "exp.json") + " --seed 9 --out " + q(kWork / "exp_c") + " --csv")
            .output.find("\n9,lsf2+,ok,") != std::string::npos);
}

TEST_CASE("gradcheck subcommand") {
  write(kWork / "gc.json", R"({"gradcheck": {"instances": 5}})");
  Run r = run("gradcheck --config " + q(kWork / "gc.json"));
  INFO(r.output);
  CHECK(r.code == 0);
  CHECK(r.output.find("PASS") != std::string::npos);
  r = run("gradcheck --config " + q(kWork / "gc.json") + " --tolerance 1e-12");
  CHECK(r.code != 0);
  CHECK(r.output.find("FAIL") != std::string::npos);
  write(kWork / "gc0.json", R"({"gradcheck": {"instances": 5, "iterations": 0}})");
  r = run("gradcheck --config " + q(kWork / "gc0.json") + " --json");
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.output)["path"] == "linear");
}

TEST_CASE("synth then eval") {
  write(kWork / "syn.json", R"({"scene": {"height": 32, "width": 32}, "channel_plan": [2, 4], "seeds": [4]})");
  REQUIRE(run("synth --config " + q(kWork / "syn.json") + " --out " + q(kWork / "syn")).code == 0);
  for (const char* f : {"depth_gt.grid", "bases.grid", "sparse.grid", "sparse_truth.grid", "w_true.json"})
    CHECK(fs::exists(kWork / "syn" / f));
  const Run r = run("eval --pred " + q(kWork / "syn" / "depth_gt.grid") + " --gt " + q(kWork / "syn" / "depth_gt.grid"));
  REQUIRE(r.code == 0);
  const auto m = nlohmann::json::parse(r.output);
  CHECK(m["mae"] == 0.0);
  CHECK(m["delta1"] == 100.0);
  const Run c = run("eval --csv --cap 10 --pred " + q(kWork / "syn" / "depth_gt.grid") + " --gt " +
                    q(kWork / "syn" / "depth_gt.grid"));
  CHECK(c.output.rfind("mae,rmse,delta1,delta2,delta3,irmse,n_evaluated,depth_cap\n", 0) == 0);
}

TEST_CASE("bench subcommand row count") {
  write(kWork / "bench.json", R"({"variants": ["lsf", "lsf2"], "bench": {"repeats": 3, "cases": [
        {"height": 32, "width": 32, "samples": 100, "channel_plan": [2, 4]},
        {"height": 32, "width": 32, "samples": 100, "channel_plan": [4, 8]}]}})");
  const Run r = run("bench --config " + q(kWork / "bench.json"));
  REQUIRE(r.code == 0);
  CHECK(std::count(r.output.begin(), r.output.end(), '\n') == 5);
}
