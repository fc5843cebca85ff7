// xagg command line: compute attribution stacks, aggregate them with
// optimized convex weights, evaluate quality metrics, run the full bench,
// the LIME sparsity experiment and the self-check suite.
//
// Exit codes: 0 ok, 1 invariant failure, 2 config error, 3 model unavailable.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xagg/config.hpp"
#include "xagg/harness.hpp"
#include "xagg/io.hpp"
#include "xagg/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
};

xagg::BenchConfig resolve_config(const GlobalOpts& g) {
  xagg::BenchConfig cfg = g.config_path.empty() ? xagg::parse_config(json::object())
                                                : xagg::load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  if (g.threads) cfg.threads = *g.threads;
  return cfg;
}

std::vector<double> load_input_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw xagg::ConfigError("cannot open input file " + path);
  json doc;
  in >> doc;
  return doc.get<std::vector<double>>();
}

int run_attrib(const xagg::BenchConfig& cfg) {
  using namespace xagg;
  const Shape& shape = cfg.dataset.shape;
  Rng dataset_rng = Rng(cfg.seed).child(0xDA7A);
  const BlobDataset data = gen_blob_dataset(cfg.dataset.n, shape, cfg.dataset.fraction_lo,
                                            cfg.dataset.fraction_hi, cfg.dataset.noise_level,
                                            dataset_rng);
  const auto model = construct_model(cfg.model, shape.d());
  const auto roster = materialize_method_seeds(cfg.methods, cfg.seed);

  fs::create_directories(cfg.output_dir);
  json inputs = json::array();
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const auto stack = compute_stack(*model, roster, data.images[i], shape);
    char name[32];
    std::snprintf(name, sizeof(name), "stack_%03zu", i);
    save_stack(stack, fs::path(cfg.output_dir) / name);
    if (cfg.heatmaps) {
      const fs::path dir = fs::path(cfg.output_dir) / name;
      for (std::size_t r = 0; r < stack.k(); ++r)
        export_heatmap(stack.column(r),
                       dir / (xagg::detail::sanitize_filename(stack.method_names()[r]) + ".pgm"));
    }
    inputs.push_back(data.images[i]);
  }
  std::ofstream(fs::path(cfg.output_dir) / "inputs.json") << inputs.dump() << "\n";
  std::printf("wrote %zu stacks to %s\n", data.images.size(), cfg.output_dir.c_str());
  return 0;
}

int run_aggregate(const xagg::BenchConfig& cfg, const std::string& stack_dir,
                  const std::string& input_path) {
  using namespace xagg;
  if (stack_dir.empty()) {
    // Whole-pipeline aggregation over the configured dataset.
    const BenchResult res = run_bench(cfg);
    std::printf("aggregated %zu images; outputs in %s\n", res.cells.size(),
                cfg.output_dir.c_str());
    return 0;
  }
  // Externally computed stack: fit weights against the configured model.
  const AttributionStack stack = load_stack(stack_dir);
  const std::vector<double> x = load_input_vector(input_path);
  if (x.size() != stack.d()) throw ConfigError("--input length does not match stack d");
  const auto model = construct_model(cfg.model, stack.d());

  Rng rng(cfg.seed);
  Rng infd_rng = rng.child(2);
  const MetricSampleSet infd = build_infidelity_samples(*model, x, stack.shape(), cfg.mask,
                                                        cfg.baseline, cfg.m_agg, infd_rng);
  StrategySpec spec;
  spec.kind = StrategyKind::faith;
  spec.solver = cfg.solver;
  const AggregationResult res = agg_optimize(stack, {&infd}, spec);

  fs::create_directories(cfg.output_dir);
  json out;
  out["strategy"] = "agg_faith";
  out["methods"] = stack.method_names();
  out["weights"] = res.weights->omega();
  out["objective"] = res.solution ? res.solution->objective : 0.0;
  out["converged"] = res.solution ? res.solution->converged : true;
  std::ofstream(fs::path(cfg.output_dir) / "weights.json") << out.dump(2) << "\n";
  export_heatmap(res.map, fs::path(cfg.output_dir) / "aggregate.pgm");
  std::printf("weights written to %s\n", (fs::path(cfg.output_dir) / "weights.json").c_str());
  return 0;
}

int run_evaluate(const xagg::BenchConfig& cfg, const std::string& stack_dir,
                 const std::string& input_path) {
  using namespace xagg;
  const AttributionStack stack = load_stack(stack_dir);
  const std::vector<double> x = load_input_vector(input_path);
  if (x.size() != stack.d()) throw ConfigError("--input length does not match stack d");
  const auto model = construct_model(cfg.model, stack.d());

  Rng rng(cfg.seed);
  Rng infd_rng = rng.child(4);
  const MetricSampleSet infd = build_infidelity_samples(*model, x, stack.shape(), cfg.mask,
                                                        cfg.baseline, cfg.m_eval, infd_rng);
  fs::create_directories(cfg.output_dir);
  CsvWriter csv;
  for (const char* h : {"row", "infd", "infd_norm", "fcor", "complexity"})
    csv.cell(std::string(h));
  csv.end_row();
  for (std::size_t i = 0; i < stack.k(); ++i) {
    const auto& map = stack.column(i);
    csv.cell(stack.method_names()[i]);
    csv.cell(estimate(infd, map.values));
    csv.cell(infd_normalized_from_samples(infd, map.values));
    try {
      csv.cell(fcor_from_samples(infd, map.values));
    } catch (const DegenerateCorrelation&) {
      csv.cell_missing();
    }
    csv.cell(complexity_metric(map, cfg.complexity_t));
    csv.end_row();
  }
  csv.write(fs::path(cfg.output_dir) / "eval.csv");
  std::printf("evaluation written to %s\n", (fs::path(cfg.output_dir) / "eval.csv").c_str());
  return 0;
}

int run_bench_cmd(const xagg::BenchConfig& cfg) {
  const xagg::BenchResult res = xagg::run_bench(cfg);
  std::printf("bench: %zu images x %zu rows; outputs in %s\n", res.cells.size(),
              res.row_names.size(), cfg.output_dir.c_str());
  for (std::size_t r = 0; r < res.row_names.size(); ++r)
    std::printf("  %-28s s_avg=%.6g  infd=%.6g\n", res.row_names[r].c_str(), res.mean_s_avg[r],
                res.mean_infd[r]);
  return 0;
}

int run_lime_cmd(const xagg::BenchConfig& cfg) {
  const auto res = xagg::run_lime_sparsity_experiment(cfg);
  std::printf("lime sparsity experiment; outputs in %s\n", cfg.output_dir.c_str());
  for (int g = 0; g < 2; ++g) {
    const auto& mean = g == 0 ? res.small_mean : res.large_mean;
    const auto& ci = g == 0 ? res.small_ci_half : res.large_ci_half;
    for (std::size_t li = 0; li < 3; ++li)
      std::printf("  %s lambda=%-5g weight=%.4f +- %.4f\n", g == 0 ? "small" : "large",
                  res.lambdas[li], mean[li], ci[li]);
  }
  return 0;
}

int run_verify_cmd(const xagg::BenchConfig& cfg) {
  const xagg::VerifyReport report = xagg::run_verify(cfg.seed, cfg.solver);
  fs::create_directories(cfg.output_dir);
  const std::string text = xagg::verify_to_json(report).dump(2) + "\n";
  std::ofstream(fs::path(cfg.output_dir) / "verify.json") << text;
  for (const auto& c : report.checks)
    std::printf("[%s] %-42s measured=%.3e tolerance=%.3e\n", c.passed ? "PASS" : "FAIL",
                c.name.c_str(), c.measured, c.tolerance);
  std::printf("%s\n", report.all_passed ? "verify: all checks passed"
                                        : "verify: FAILURES detected");
  return report.all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimized aggregation of feature attributions"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file");
  std::uint64_t seed_opt = 0;
  auto* seed_flag = app.add_option("--seed", seed_opt, "override config seed");
  std::string out_opt;
  auto* out_flag = app.add_option("--out", out_opt, "override output directory");
  std::size_t threads_opt = 0;
  auto* threads_flag = app.add_option("--threads", threads_opt, "worker threads (0 = auto)");

  auto* attrib = app.add_subcommand("attrib", "compute attribution stacks for the dataset");
  auto* aggregate = app.add_subcommand("aggregate", "derive convex aggregation weights");
  auto* evaluate = app.add_subcommand("evaluate", "faithfulness metrics for a saved stack");
  auto* bench = app.add_subcommand("bench", "full optimize-then-evaluate bench");
  auto* lime = app.add_subcommand("lime-exp", "LIME sparsity-variant aggregation experiment");
  auto* verify = app.add_subcommand("verify", "run the invariant self-checks");
  for (auto* sc : {attrib, aggregate, evaluate, bench, lime, verify}) sc->fallthrough();

  std::string agg_stack, agg_input;
  aggregate->add_option("--stack", agg_stack, "stack directory (external attributions)");
  aggregate->add_option("--input", agg_input, "JSON array with the input instance");
  std::string eval_stack, eval_input;
  evaluate->add_option("--stack", eval_stack, "stack directory")->required();
  evaluate->add_option("--input", eval_input, "JSON array with the input instance")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*seed_flag) g.seed = seed_opt;
    if (*out_flag) g.out = out_opt;
    if (*threads_flag) g.threads = threads_opt;
    const xagg::BenchConfig cfg = resolve_config(g);

    if (attrib->parsed()) return run_attrib(cfg);
    if (aggregate->parsed()) return run_aggregate(cfg, agg_stack, agg_input);
    if (evaluate->parsed()) return run_evaluate(cfg, eval_stack, eval_input);
    if (bench->parsed()) return run_bench_cmd(cfg);
    if (lime->parsed()) return run_lime_cmd(cfg);
    if (verify->parsed()) return run_verify_cmd(cfg);
    return 2;
  } catch (const xagg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const xagg::InvalidInput& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const xagg::ModelUnavailable& e) {
    std::fprintf(stderr, "model unavailable: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
