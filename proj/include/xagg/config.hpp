#pragma once

// Bench configuration: one strict JSON document. Unknown keys are rejected so
// typos fail loudly instead of silently running defaults.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xagg/attributions.hpp"
#include "xagg/core.hpp"
#include "xagg/aggregation.hpp"
#include "xagg/perturb.hpp"
#include "xagg/qp.hpp"

namespace xagg {

struct ModelConfig {
  enum class Kind { toy_mlp, toy_linear, external };
  Kind kind = Kind::toy_mlp;
  Activation activation = Activation::tanh;
  std::vector<std::size_t> hidden{32, 16};
  std::uint64_t seed = 7;
  std::vector<double> weights;  // toy_linear; empty = all ones
  double bias = 0.0;
  std::vector<std::string> command;  // external
  int timeout_ms = 10000;
};

struct DatasetConfig {
  enum class Kind { blobs, stack_files };
  Kind kind = Kind::blobs;
  std::size_t n = 20;
  Shape shape{16, 16, 1};
  double fraction_lo = 0.05, fraction_hi = 0.6;
  double noise_level = 0.05;
  std::vector<std::string> stack_paths;
};

struct LimeExperimentConfig {
  std::size_t images_per_group = 100;
  double small_fraction = 0.05;
  double large_fraction = 0.6;
  std::size_t lime_samples = 200;
  std::vector<std::size_t> patch_sizes{2, 4};
};

struct BenchConfig {
  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0 = auto
  std::string output_dir = "out";
  ModelConfig model;
  DatasetConfig dataset;
  std::vector<MethodSpec> methods;  // empty = default 6-method roster
  std::vector<StrategyKind> strategies{StrategyKind::mean, StrategyKind::var,
                                       StrategyKind::robust, StrategyKind::faith,
                                       StrategyKind::opt};
  std::size_t m_agg = 50;
  std::size_t m_eval = 200;
  NoiseSpec noise{0.1};
  RegionMaskSpec mask{RegionMaskSpec::Mode::square, 0.2};
  BaselineSpec baseline{BaselineSpec::Kind::blur, 2.0};
  bool heatmaps = false;
  double var_epsilon = 1e-6;
  double complexity_t = 0.3;
  SolverConfig solver;
  LimeExperimentConfig lime;
  nlohmann::json echo;  // original document, replayed into results.json
};

// The 6-method gradient/perturbation roster the toy bench defaults to. The
// path-integral and ablation baselines are blurred inputs, the same
// perturbation family the faithfulness metrics use.
inline std::vector<MethodSpec> default_methods() {
  return {
      {.kind = MethodKind::saliency},
      {.kind = MethodKind::input_x_grad},
      {.kind = MethodKind::integrated_gradients,
       .ig_steps = 32,
       .ig_baseline = {BaselineSpec::Kind::blur, 2.0}},
      {.kind = MethodKind::smoothgrad, .sg_samples = 12, .sg_sigma = 0.1},
      {.kind = MethodKind::vargrad, .sg_samples = 12, .sg_sigma = 0.1},
      {.kind = MethodKind::occlusion,
       .occlusion_patch_h = 4,
       .occlusion_patch_w = 4,
       .occlusion_baseline = {BaselineSpec::Kind::blur, 2.0}},
  };
}

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& what,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(what + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }) == allowed.end())
      throw ConfigError(what + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline BaselineSpec parse_baseline(const nlohmann::json& j, const std::string& what) {
  BaselineSpec spec{BaselineSpec::Kind::blur, 2.0};
  std::string kind;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else {
    check_keys(j, what, {"kind", "sigma"});
    kind = get_or<std::string>(j, "kind", "blur");
    spec.blur_sigma = get_or<double>(j, "sigma", 2.0);
  }
  if (kind == "blur")
    spec.kind = BaselineSpec::Kind::blur;
  else if (kind == "zeros")
    spec.kind = BaselineSpec::Kind::zeros;
  else if (kind == "mean")
    spec.kind = BaselineSpec::Kind::mean;
  else
    throw ConfigError(what + ": unknown baseline kind '" + kind + "'");
  return spec;
}

inline MethodSpec parse_method(const nlohmann::json& j) {
  check_keys(j, "methods[]",
             {"kind", "steps", "baseline", "samples", "sigma", "patch", "lambda", "normalize"});
  MethodSpec spec;
  const auto kind = get_or<std::string>(j, "kind", "");
  const auto patch = get_or<std::vector<std::size_t>>(j, "patch", {4, 4});
  if (patch.size() != 2) throw ConfigError("methods[].patch: expected [h, w]");
  if (kind == "saliency") {
    spec.kind = MethodKind::saliency;
  } else if (kind == "input_x_grad") {
    spec.kind = MethodKind::input_x_grad;
  } else if (kind == "integrated_gradients") {
    spec.kind = MethodKind::integrated_gradients;
    spec.ig_steps = get_or<std::size_t>(j, "steps", 64);
    if (j.contains("baseline")) spec.ig_baseline = parse_baseline(j["baseline"], "methods[]");
  } else if (kind == "smoothgrad" || kind == "vargrad") {
    spec.kind = kind == "smoothgrad" ? MethodKind::smoothgrad : MethodKind::vargrad;
    spec.sg_samples = get_or<std::size_t>(j, "samples", 25);
    spec.sg_sigma = get_or<double>(j, "sigma", 0.1);
  } else if (kind == "occlusion") {
    spec.kind = MethodKind::occlusion;
    spec.occlusion_patch_h = patch[0];
    spec.occlusion_patch_w = patch[1];
    if (j.contains("baseline"))
      spec.occlusion_baseline = parse_baseline(j["baseline"], "methods[]");
  } else if (kind == "lime") {
    spec.kind = MethodKind::lime_patch;
    spec.lime_patch_h = patch[0];
    spec.lime_patch_w = patch[1];
    spec.lime_samples = get_or<std::size_t>(j, "samples", 200);
    spec.lime_lambda = get_or<double>(j, "lambda", 0.0);
    if (j.contains("baseline")) spec.lime_baseline = parse_baseline(j["baseline"], "methods[]");
  } else {
    throw ConfigError("methods[]: unknown kind '" + kind + "'");
  }
  spec.normalize_output = get_or<bool>(j, "normalize", true);
  return spec;
}

inline StrategyKind parse_strategy(const std::string& s) {
  if (s == "mean") return StrategyKind::mean;
  if (s == "var") return StrategyKind::var;
  if (s == "robust") return StrategyKind::robust;
  if (s == "faith") return StrategyKind::faith;
  if (s == "opt") return StrategyKind::opt;
  throw ConfigError("strategies[]: unknown strategy '" + s + "'");
}

}  // namespace detail

inline BenchConfig parse_config(const nlohmann::json& doc) {
  using detail::check_keys;
  using detail::get_or;
  check_keys(doc, "config",
             {"seed", "threads", "output_dir", "model", "dataset", "methods", "strategies",
              "m_agg", "m_eval", "noise", "mask", "baseline", "heatmaps", "var_epsilon",
              "complexity_t", "solver", "lime_experiment"});
  BenchConfig cfg;
  cfg.echo = doc;
  cfg.seed = get_or<std::uint64_t>(doc, "seed", 42);
  cfg.threads = get_or<std::size_t>(doc, "threads", 0);
  cfg.output_dir = get_or<std::string>(doc, "output_dir", "out");
  cfg.m_agg = get_or<std::size_t>(doc, "m_agg", 50);
  cfg.m_eval = get_or<std::size_t>(doc, "m_eval", 200);
  if (cfg.m_agg < 1 || cfg.m_eval < 1) throw ConfigError("m_agg and m_eval must be >= 1");
  cfg.heatmaps = get_or<bool>(doc, "heatmaps", false);
  cfg.var_epsilon = get_or<double>(doc, "var_epsilon", 1e-6);
  cfg.complexity_t = get_or<double>(doc, "complexity_t", 0.3);

  if (doc.contains("model")) {
    const auto& m = doc["model"];
    check_keys(m, "model",
               {"kind", "activation", "hidden", "seed", "weights", "bias", "command",
                "timeout_ms"});
    const auto kind = get_or<std::string>(m, "kind", "toy_mlp");
    if (kind == "toy_mlp") {
      cfg.model.kind = ModelConfig::Kind::toy_mlp;
      const auto act = get_or<std::string>(m, "activation", "tanh");
      if (act == "tanh")
        cfg.model.activation = Activation::tanh;
      else if (act == "relu")
        cfg.model.activation = Activation::relu;
      else
        throw ConfigError("model.activation: unknown '" + act + "'");
      cfg.model.hidden = get_or<std::vector<std::size_t>>(m, "hidden", {32, 16});
      cfg.model.seed = get_or<std::uint64_t>(m, "seed", 7);
    } else if (kind == "toy_linear") {
      cfg.model.kind = ModelConfig::Kind::toy_linear;
      cfg.model.weights = get_or<std::vector<double>>(m, "weights", {});
      cfg.model.bias = get_or<double>(m, "bias", 0.0);
    } else if (kind == "external") {
      cfg.model.kind = ModelConfig::Kind::external;
      cfg.model.command = get_or<std::vector<std::string>>(m, "command", {});
      cfg.model.timeout_ms = get_or<int>(m, "timeout_ms", 10000);
      if (cfg.model.command.empty()) throw ConfigError("model.command: required for external");
    } else {
      throw ConfigError("model.kind: unknown '" + kind + "'");
    }
  }

  if (doc.contains("dataset")) {
    const auto& d = doc["dataset"];
    check_keys(d, "dataset",
               {"kind", "n", "height", "width", "channels", "fraction_range", "noise_level",
                "paths"});
    const auto kind = get_or<std::string>(d, "kind", "blobs");
    if (kind == "blobs") {
      cfg.dataset.kind = DatasetConfig::Kind::blobs;
      cfg.dataset.n = get_or<std::size_t>(d, "n", 20);
      cfg.dataset.shape = Shape(get_or<std::size_t>(d, "height", 16),
                                get_or<std::size_t>(d, "width", 16),
                                get_or<std::size_t>(d, "channels", 1));
      const auto fr = get_or<std::vector<double>>(d, "fraction_range", {0.05, 0.6});
      if (fr.size() != 2) throw ConfigError("dataset.fraction_range: expected [lo, hi]");
      cfg.dataset.fraction_lo = fr[0];
      cfg.dataset.fraction_hi = fr[1];
      cfg.dataset.noise_level = get_or<double>(d, "noise_level", 0.05);
    } else if (kind == "stack_files") {
      cfg.dataset.kind = DatasetConfig::Kind::stack_files;
      cfg.dataset.stack_paths = get_or<std::vector<std::string>>(d, "paths", {});
      if (cfg.dataset.stack_paths.empty()) throw ConfigError("dataset.paths: required");
    } else {
      throw ConfigError("dataset.kind: unknown '" + kind + "'");
    }
  }

  if (doc.contains("methods")) {
    for (const auto& mj : doc["methods"]) cfg.methods.push_back(detail::parse_method(mj));
    if (cfg.methods.empty()) throw ConfigError("methods: must list at least one method");
  } else {
    cfg.methods = default_methods();
  }

  if (doc.contains("strategies")) {
    cfg.strategies.clear();
    for (const auto& sj : doc["strategies"])
      cfg.strategies.push_back(detail::parse_strategy(sj.get<std::string>()));
    if (cfg.strategies.empty()) throw ConfigError("strategies: must list at least one");
  }

  if (doc.contains("noise")) {
    check_keys(doc["noise"], "noise", {"delta"});
    cfg.noise.delta = get_or<double>(doc["noise"], "delta", 0.1);
  }
  if (doc.contains("mask")) {
    check_keys(doc["mask"], "mask", {"mode", "fraction"});
    const auto mode = get_or<std::string>(doc["mask"], "mode", "square");
    if (mode == "square")
      cfg.mask.mode = RegionMaskSpec::Mode::square;
    else if (mode == "scattered")
      cfg.mask.mode = RegionMaskSpec::Mode::scattered;
    else
      throw ConfigError("mask.mode: unknown '" + mode + "'");
    cfg.mask.fraction = get_or<double>(doc["mask"], "fraction", 0.2);
  }
  if (doc.contains("baseline")) cfg.baseline = detail::parse_baseline(doc["baseline"], "baseline");

  if (doc.contains("solver")) {
    const auto& s = doc["solver"];
    check_keys(s, "solver", {"tol_objective", "tol_kkt", "max_iters", "step_scale"});
    cfg.solver.tol_objective = get_or<double>(s, "tol_objective", 1e-10);
    cfg.solver.tol_kkt = get_or<double>(s, "tol_kkt", 1e-6);
    cfg.solver.max_iters = get_or<std::size_t>(s, "max_iters", 20000);
    cfg.solver.step_scale = get_or<double>(s, "step_scale", 1.0);
  }

  if (doc.contains("lime_experiment")) {
    const auto& l = doc["lime_experiment"];
    check_keys(l, "lime_experiment",
               {"images_per_group", "small_fraction", "large_fraction", "lime_samples",
                "patch_sizes"});
    cfg.lime.images_per_group = get_or<std::size_t>(l, "images_per_group", 100);
    cfg.lime.small_fraction = get_or<double>(l, "small_fraction", 0.05);
    cfg.lime.large_fraction = get_or<double>(l, "large_fraction", 0.6);
    cfg.lime.lime_samples = get_or<std::size_t>(l, "lime_samples", 200);
    cfg.lime.patch_sizes = get_or<std::vector<std::size_t>>(l, "patch_sizes", {2, 4});
  }
  return cfg;
}

inline BenchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(doc);
}

}  // namespace xagg
