#include "basisfit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace basisfit {

namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SceneKind parse_scene_kind(const std::string& s) {
  if (s == "planes_and_bumps") return SceneKind::PlanesAndBumps;
  if (s == "random_smooth") return SceneKind::RandomSmooth;
  throw Error(ErrorCode::Config, "unknown scene kind '" + s + "'");
}

std::string scene_kind_name(SceneKind k) {
  return k == SceneKind::PlanesAndBumps ? "planes_and_bumps" : "random_smooth";
}

ActivationKind parse_activation_kind(const std::string& s) {
  if (s == "inverse_sigmoid") return ActivationKind::InverseSigmoid;
  if (s == "relu_offset") return ActivationKind::ReluOffset;
  throw Error(ErrorCode::Config, "unknown activation kind '" + s + "'");
}

std::vector<int> parse_plan(const json& j) {
  auto plan = j.get<std::vector<int>>();
  if (plan.empty()) throw Error(ErrorCode::Config, "channel_plan must not be empty");
  for (int c : plan)
    if (c < 1) throw Error(ErrorCode::Config, "channel_plan entries must be positive");
  return plan;
}

void validate(const ExperimentConfig& c) {
  std::set<std::uint64_t> unique(c.seeds.begin(), c.seeds.end());
  if (unique.size() != c.seeds.size()) throw Error(ErrorCode::Config, "seeds must be distinct");
  if (c.seeds.empty()) throw Error(ErrorCode::Config, "seeds must not be empty");
  if (!(c.activation.a > 0.0)) throw Error(ErrorCode::Config, "activation.a must be > 0");
  if (!(c.activation.epsilon > 0.0)) throw Error(ErrorCode::Config, "activation.epsilon must be > 0");
  if (!(c.fit.lambda >= 0.0)) throw Error(ErrorCode::Config, "fit.lambda must be >= 0");
  if (c.fit.iterations < 0) throw Error(ErrorCode::Config, "fit.iterations must be >= 0");
  if (!(c.fit.huber_delta > 0.0)) throw Error(ErrorCode::Config, "fit.huber_delta must be > 0");
  if (!(c.default_sigma > 0.0)) throw Error(ErrorCode::Config, "default_sigma must be > 0");
  if (c.bench.repeats < 1) throw Error(ErrorCode::Config, "bench.repeats must be >= 1");
  if (c.gradcheck.instances < 1) throw Error(ErrorCode::Config, "gradcheck.instances must be >= 1");
  const int k = static_cast<int>(c.channel_plan.size()) - 1;
  if (c.scene.height % (1 << k) != 0 || c.scene.width % (1 << k) != 0)
    throw Error(ErrorCode::Config, "scene size must be divisible by 2^(levels-1)");
  for (const auto& v : c.variants) parse_variant(v, c.fit);
}

}  // namespace

Variant parse_variant(const std::string& tag, const FitConfig& base) {
  if (tag.rfind("lsf", 0) != 0) throw Error(ErrorCode::Config, "variant '" + tag + "' must start with lsf");
  std::string rest = tag.substr(3);
  Variant v{tag, base};
  v.fit.robust = !rest.empty() && rest.back() == '+';
  if (v.fit.robust) rest.pop_back();
  if (rest.empty()) {
    if (v.fit.robust) throw Error(ErrorCode::Config, "variant '" + tag + "' needs an iteration count");
    v.fit.iterations = 0;
    return v;
  }
  for (char ch : rest)
    if (ch < '0' || ch > '9') throw Error(ErrorCode::Config, "bad variant tag '" + tag + "'");
  v.fit.iterations = std::stoi(rest);
  return v;
}

std::vector<Variant> experiment_variants(const ExperimentConfig& cfg) {
  std::vector<std::string> tags = cfg.variants;
  if (tags.empty()) {
    tags.push_back("lsf");
    if (cfg.fit.iterations > 0) {
      tags.push_back("lsf" + std::to_string(cfg.fit.iterations));
      tags.push_back("lsf" + std::to_string(cfg.fit.iterations) + "+");
    }
  }
  std::vector<Variant> out;
  for (const auto& t : tags) out.push_back(parse_variant(t, cfg.fit));
  return out;
}

ExperimentConfig parse_config(const std::string& json_text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw Error(ErrorCode::Config, "config root must be an object");

    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      read(s, "height", c.scene.height);
      read(s, "width", c.scene.width);
      if (s.contains("kind")) c.scene.kind = parse_scene_kind(s.at("kind").get<std::string>());
      read(s, "min_depth", c.scene.min_depth);
      read(s, "depth_cap", c.scene.depth_cap);
      read(s, "bump_amplitude", c.scene.bump_amplitude);
    }
    if (j.contains("channel_plan")) {
      c.channel_plan = parse_plan(j.at("channel_plan"));
      c.channel_plan_given = true;
    }
    if (j.contains("basis_mode")) {
      const auto m = j.at("basis_mode").get<std::string>();
      if (m == "realizable") c.basis_mode = BasisMode::Realizable;
      else if (m == "generic") c.basis_mode = BasisMode::Generic;
      else throw Error(ErrorCode::Config, "unknown basis_mode '" + m + "'");
    }
    c.sampler.depth_cap = c.scene.depth_cap;
    if (j.contains("sampler")) {
      const auto& s = j.at("sampler");
      read(s, "density", c.sampler.density);
      read(s, "count", c.sampler.count);
      read(s, "depth_cap", c.sampler.depth_cap);
      read(s, "noise_sigma", c.sampler.noise_sigma);
      read(s, "outlier_fraction", c.sampler.outlier_fraction);
      if (s.contains("outlier_range")) {
        const auto r = s.at("outlier_range").get<std::vector<double>>();
        if (r.size() != 2) throw Error(ErrorCode::Config, "outlier_range must be [low, high]");
        c.sampler.outlier_low = r[0];
        c.sampler.outlier_high = r[1];
      }
    }
    if (j.contains("activation")) {
      const auto& a = j.at("activation");
      if (a.contains("kind")) c.activation.kind = parse_activation_kind(a.at("kind").get<std::string>());
      read(a, "a", c.activation.a);
      read(a, "epsilon", c.activation.epsilon);
    }
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      read(f, "lambda", c.fit.lambda);
      read(f, "iterations", c.fit.iterations);
      c.fit.robust = c.fit.iterations > 0;
      read(f, "robust", c.fit.robust);
      read(f, "huber_delta", c.fit.huber_delta);
      read(f, "default_sigma", c.default_sigma);
    }
    c.metric_depth_cap = c.scene.depth_cap;
    if (j.contains("metrics")) read(j.at("metrics"), "depth_cap", c.metric_depth_cap);
    read(j, "seeds", c.seeds);
    read(j, "variants", c.variants);
    if (j.contains("output")) {
      const auto& o = j.at("output");
      if (o.contains("dir")) c.output_dir = o.at("dir").get<std::string>();
    }
    if (j.contains("gradcheck")) {
      const auto& g = j.at("gradcheck");
      auto& gc = c.gradcheck;
      read(g, "instances", gc.instances);
      read(g, "n_samples", gc.n_samples);
      read(g, "n_channels", gc.n_channels);
      read(g, "lambda", gc.lambda);
      read(g, "iterations", gc.iterations);
      gc.robust = gc.iterations > 0;
      read(g, "robust", gc.robust);
      read(g, "noise_sigma", gc.noise_sigma);
      read(g, "outlier_fraction", gc.outlier_fraction);
      read(g, "step", gc.step);
      read(g, "tolerance", gc.tolerance);
      read(g, "kink_margin", gc.kink_margin);
      read(g, "max_redraws", gc.max_redraws);
    }
    if (j.contains("bench")) {
      const auto& b = j.at("bench");
      read(b, "repeats", c.bench.repeats);
      if (b.contains("cases")) {
        c.bench.cases.clear();
        for (const auto& e : b.at("cases")) {
          BenchCase bc;
          read(e, "height", bc.height);
          read(e, "width", bc.width);
          read(e, "samples", bc.samples);
          if (e.contains("channel_plan")) bc.channel_plan = parse_plan(e.at("channel_plan"));
          c.bench.cases.push_back(bc);
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::Config, "cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  json j;
  j["scene"] = {{"height", c.scene.height},
                {"width", c.scene.width},
                {"kind", scene_kind_name(c.scene.kind)},
                {"min_depth", c.scene.min_depth},
                {"depth_cap", c.scene.depth_cap},
                {"bump_amplitude", c.scene.bump_amplitude}};
  j["channel_plan"] = c.channel_plan;
  j["basis_mode"] = c.basis_mode == BasisMode::Realizable ? "realizable" : "generic";
  j["sampler"] = {{"density", c.sampler.density},
                  {"count", c.sampler.count},
                  {"depth_cap", c.sampler.depth_cap},
                  {"noise_sigma", c.sampler.noise_sigma},
                  {"outlier_fraction", c.sampler.outlier_fraction},
                  {"outlier_range", {c.sampler.outlier_low, c.sampler.outlier_high}}};
  j["activation"] = {{"kind", c.activation.kind == ActivationKind::InverseSigmoid ? "inverse_sigmoid" : "relu_offset"},
                     {"a", c.activation.a},
                     {"epsilon", c.activation.epsilon}};
  j["fit"] = {{"lambda", c.fit.lambda},
              {"iterations", c.fit.iterations},
              {"robust", c.fit.robust},
              {"huber_delta", c.fit.huber_delta},
              {"default_sigma", c.default_sigma}};
  j["metrics"] = {{"depth_cap", c.metric_depth_cap}};
  j["seeds"] = c.seeds;
  j["variants"] = c.variants;
  j["output"] = {{"dir", c.output_dir.string()}};
  const auto& g = c.gradcheck;
  j["gradcheck"] = {{"instances", g.instances},   {"n_samples", g.n_samples},
                    {"n_channels", g.n_channels}, {"lambda", g.lambda},
                    {"iterations", g.iterations}, {"robust", g.robust},
                    {"noise_sigma", g.noise_sigma}, {"outlier_fraction", g.outlier_fraction},
                    {"step", g.step},             {"tolerance", g.tolerance},
                    {"kink_margin", g.kink_margin}, {"max_redraws", g.max_redraws}};
  json cases = json::array();
  for (const auto& bc : c.bench.cases)
    cases.push_back({{"height", bc.height}, {"width", bc.width}, {"samples", bc.samples}, {"channel_plan", bc.channel_plan}});
  j["bench"] = {{"repeats", c.bench.repeats}, {"cases", cases}};
  return j.dump(2);
}

}  // namespace basisfit
