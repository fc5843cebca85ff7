// Acceptance suite: end-to-end checks of the library's guarantees at pinned
// tolerances. Prints one line per criterion and exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xagg/aggregation.hpp"
#include "xagg/attributions.hpp"
#include "xagg/config.hpp"
#include "xagg/harness.hpp"
#include "xagg/io.hpp"
#include "xagg/metrics.hpp"
#include "xagg/models.hpp"
#include "xagg/qp.hpp"
#include "xagg/rng.hpp"

using namespace xagg;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int id, const std::string& name, bool passed, const std::string& detail) {
  if (!passed) ++g_failures;
  std::printf("[%s] criterion %2d: %-34s %s\n", passed ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

AttributionStack random_stack(const Shape& shape, std::size_t k, Rng& rng) {
  std::vector<std::string> names;
  std::vector<AttributionMap> cols;
  for (std::size_t i = 0; i < k; ++i) {
    names.push_back("m" + std::to_string(i));
    cols.push_back(normalize(rng_uniform(rng, -1.0, 1.0, shape.d()), shape));
  }
  return AttributionStack(shape, names, cols);
}

MetricSampleSet random_samples(const Shape& shape, std::size_t k, std::size_t m, bool per_method,
                               Rng& rng) {
  MetricSampleSet set;
  set.label = per_method ? "sens" : "infd";
  for (std::size_t j = 0; j < m; ++j) {
    if (per_method) {
      set.samples.push_back(MetricSample{LinearQuery::identity(shape.d()),
                                         rng_uniform(rng, 0.0, 1.0, shape.d() * k), k});
    } else {
      std::vector<double> row(shape.d());
      for (double& v : row) v = rng.next_unit() < 0.3 ? 1.0 : 0.0;
      set.samples.push_back(
          MetricSample{LinearQuery::row_mask(row), {rng.uniform(-2.0, 2.0)}, 0});
    }
  }
  return set;
}

SimplexWeights random_weights(std::size_t k, Rng& rng) {
  std::vector<double> w = rng_uniform(rng, 0.01, 1.0, k);
  double s = 0.0;
  for (double v : w) s += v;
  for (double& v : w) v /= s;
  return SimplexWeights(w);
}

GramMatrix random_psd_normalized(std::size_t k, Rng& rng) {
  std::vector<double> a = rng_uniform(rng, -1.0, 1.0, k * k);
  GramMatrix g;
  g.k = k;
  g.q.assign(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < k; ++r) s += a[r * k + i] * a[r * k + j];
      g.q[i * k + j] = s;
    }
  double fro = 0.0;
  for (double v : g.q) fro += v * v;
  fro = std::sqrt(fro);
  if (fro > 0.0)
    for (double& v : g.q) v /= fro;
  g.frobenius_norm = 1.0;
  g.m_used = 1;
  return g;
}

// ---------------------------------------------------------------------------

void criterion_1_decomposition_identity() {
  Timer timer;
  Rng rng(1001);
  double worst_residual = 0.0, worst_ambiguity = 0.0;
  const Shape shape(6, 6);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + t % 6;          // k in {2..7}
    const std::size_t m = t % 2 == 0 ? 10 : 50;
    const auto stack = random_stack(shape, k, rng);
    const auto set = random_samples(shape, k, m, t % 3 != 0, rng);
    const auto w = random_weights(k, rng);
    const auto rep = theorem42_check(stack, w, set);
    worst_residual = std::max(worst_residual, rep.residual / std::max(1.0, rep.weighted_sum));
    worst_ambiguity = std::min(worst_ambiguity, rep.ambiguity);
  }
  const double secs = timer.seconds();
  const bool ok = worst_residual <= 1e-8 && worst_ambiguity >= -1e-12 && secs < 10.0;
  report(1, "decomposition identity", ok,
         fmt("max rel residual %.2e (<=1e-8), min ambiguity %.2e (>=-1e-12), %.1fs (<10s)",
             worst_residual, worst_ambiguity, secs));
}

void criterion_2_qp_correctness() {
  Timer timer;
  Rng rng(2002);
  double worst_gap = 0.0, worst_kkt = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 2 + t % 3;
    const auto q = random_psd_normalized(k, rng);
    const auto sol = solve(q);
    worst_kkt = std::max(worst_kkt, sol.kkt_residual);
    const auto [gw, gobj] = grid_oracle(q, 1e-3);
    worst_gap = std::max(worst_gap, std::abs(sol.objective - gobj));
  }

  GramMatrix id2{2, {1, 0, 0, 1}, 1, 0.0};
  GramMatrix d14{2, {1, 0, 0, 4}, 1, 0.0};
  const auto s_id = solve(id2);
  const auto s_d = solve(d14);
  const double analytic_err =
      std::max({std::abs(s_id.omega[0] - 0.5), std::abs(s_id.omega[1] - 0.5),
                std::abs(s_id.objective - 0.5), std::abs(s_d.omega[0] - 0.8),
                std::abs(s_d.omega[1] - 0.2), std::abs(s_d.objective - 0.8)});

  const double secs = timer.seconds();
  const bool ok = worst_gap <= 5e-6 && worst_kkt <= 1e-6 && analytic_err <= 1e-9 && secs < 30.0;
  report(2, "qp solver vs grid oracle", ok,
         fmt("max |solver-grid| %.2e (<=5e-6), max kkt %.2e (<=1e-6), analytic err %.2e "
             "(<=1e-9), %.1fs (<30s)",
             worst_gap, worst_kkt, analytic_err, secs));
}

BenchResult run_toy_bench() {
  BenchConfig cfg = parse_config(nlohmann::json::parse(R"({
    "seed": 42,
    "dataset": {"kind": "blobs", "n": 50, "height": 16, "width": 16, "channels": 1},
    "m_agg": 50,
    "m_eval": 200
  })"));
  cfg.threads = 0;
  return run_bench(cfg, false);
}

void criterion_3_vertex_dominance(const BenchResult& res) {
  double worst = -1e300;
  for (const auto& image : res.strategy_diags)
    for (const auto& diag : image) worst = std::max(worst, diag.in_sample_objective - diag.min_diagonal);
  const bool ok = worst <= 1e-9;
  report(3, "in-sample vertex dominance", ok,
         fmt("max objective excess over best vertex %.2e (<=1e-9), %zu images x 3 strategies",
             worst, res.cells.size()));
}

std::size_t row_index(const BenchResult& res, const std::string& name) {
  for (std::size_t r = 0; r < res.row_names.size(); ++r)
    if (res.row_names[r] == name) return r;
  throw std::logic_error("row not found: " + name);
}

void criterion_4_heldout_robustness(const BenchResult& res, double bench_secs) {
  const std::size_t robust = row_index(res, "agg_robust");
  const std::size_t mean_row = row_index(res, "agg_mean");
  const std::size_t var_row = row_index(res, "agg_var");

  bool mean_dominates = true;
  for (std::size_t r = 0; r < res.n_methods; ++r)
    mean_dominates = mean_dominates && res.mean_s_avg[robust] <= res.mean_s_avg[r];
  mean_dominates = mean_dominates && res.mean_s_avg[robust] <= res.mean_s_avg[mean_row] &&
                   res.mean_s_avg[robust] <= res.mean_s_avg[var_row];

  std::size_t wins = 0;
  for (const auto& image : res.cells)
    if (image[robust].s_avg <= image[mean_row].s_avg) ++wins;
  const double win_rate = static_cast<double>(wins) / static_cast<double>(res.cells.size());

  const bool ok = mean_dominates && win_rate >= 0.9 && bench_secs < 300.0;
  report(4, "held-out robustness dominance", ok,
         fmt("agg_robust mean S_AVG %.4g (best method %.4g, mean %.4g, var %.4g), win rate "
             "%.0f%% (>=90%%), bench %.1fs (<300s)",
             res.mean_s_avg[robust],
             *std::min_element(res.mean_s_avg.begin(), res.mean_s_avg.begin() + res.n_methods),
             res.mean_s_avg[mean_row], res.mean_s_avg[var_row], 100.0 * win_rate, bench_secs));
}

void criterion_5_heldout_faithfulness(const BenchResult& res, double bench_secs) {
  const std::size_t faith = row_index(res, "agg_faith");
  bool faith_dominates = true;
  for (std::size_t r = 0; r < res.n_methods; ++r)
    faith_dominates = faith_dominates && res.mean_infd[faith] <= res.mean_infd[r];
  for (const char* name : {"agg_mean", "agg_var"})
    faith_dominates = faith_dominates && res.mean_infd[faith] <= res.mean_infd[row_index(res, name)];

  const std::vector<std::string> aggs{"agg_mean", "agg_var", "agg_robust", "agg_faith",
                                      "agg_opt"};
  std::size_t top2 = 0;
  for (const auto& image : res.cells) {
    std::vector<std::pair<double, std::string>> vals;
    for (const auto& a : aggs) vals.emplace_back(image[row_index(res, a)].infd, a);
    std::sort(vals.begin(), vals.end());
    if (vals[0].second == "agg_opt" || vals[1].second == "agg_opt") ++top2;
  }
  const double top2_rate = static_cast<double>(top2) / static_cast<double>(res.cells.size());

  const bool ok = faith_dominates && top2_rate >= 0.8 && bench_secs < 300.0;
  report(5, "held-out faithfulness dominance", ok,
         fmt("agg_faith mean INFD %.4g (best method %.4g), agg_opt top-2 rate %.0f%% (>=80%%)",
             res.mean_infd[faith],
             *std::min_element(res.mean_infd.begin(), res.mean_infd.begin() + res.n_methods),
             100.0 * top2_rate));
}

void criterion_6_regret_decay() {
  Timer timer;
  const Shape shape(8, 8);
  const ToyMlp model({64, 24, 1}, Activation::tanh, 77);
  const std::vector<MethodSpec> roster{
      {.kind = MethodKind::saliency},
      {.kind = MethodKind::input_x_grad},
      {.kind = MethodKind::integrated_gradients, .ig_steps = 8},
      {.kind = MethodKind::smoothgrad, .sg_samples = 4, .seed = 11}};
  const StackFn fn = [&](const std::vector<double>& x) {
    return compute_stack(model, roster, x, shape);
  };
  Rng xr(5);
  const auto x = rng_uniform(xr, 0.0, 1.0, shape.d());
  Rng rng(6);
  const MetricPlan plan{MetricPlan::Family::sensitivity, NoiseSpec{0.1}, {}, {}, nullptr};
  const auto rep = regret_study(fn, x, shape, plan, {10, 25, 50, 100, 200}, 50, 5000, rng);

  std::size_t inversions = 0;
  for (std::size_t i = 1; i < rep.median_regret.size(); ++i)
    if (rep.median_regret[i] > rep.median_regret[i - 1]) ++inversions;
  double min_regret = 0.0;
  for (const auto& per_m : rep.regrets)
    for (double r : per_m) min_regret = std::min(min_regret, r);
  const double ratio = rep.median_regret.back() / rep.median_regret.front();

  const double secs = timer.seconds();
  const bool ok = inversions <= 1 && ratio <= 0.25 && min_regret >= -1e-9 && secs < 180.0;
  report(6, "regret decay in sample count", ok,
         fmt("medians 10->200: %.2e -> %.2e (ratio %.3f <= 0.25), inversions %zu (<=1), min "
             "regret %.1e (>=-1e-9), %.1fs (<180s)",
             rep.median_regret.front(), rep.median_regret.back(), ratio, inversions, min_regret,
             secs));
}

void criterion_7_metric_oracles() {
  Rng rng(7007);
  const Shape shape(6, 6);
  double worst_gram = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + t % 5;
    const auto stack = random_stack(shape, k, rng);
    const auto set = random_samples(shape, k, 8, t % 2 == 0, rng);
    const auto q = gram(set, stack);
    const auto w = random_weights(k, rng);
    worst_gram = std::max(worst_gram, std::abs(q.quad(w) - estimate_aggregate(set, stack, w)));
  }

  double worst_cplx = 0.0, worst_scale = 0.0;
  for (int t = 0; t < 20; ++t) {
    const AttributionMap map{shape, rng_uniform(rng, 0.0, 1.0, shape.d()), false};
    worst_cplx = std::max(worst_cplx, std::abs(complexity_metric(map, 0.3) -
                                               complexity_metric_via_query(map, 0.3)));
    const auto set = random_samples(shape, 1, 10, false, rng);
    const double base = infd_normalized_from_samples(set, map.values);
    for (double c : {0.5, 2.0, 10.0}) {
      std::vector<double> scaled = map.values;
      for (double& v : scaled) v *= c;
      worst_scale = std::max(worst_scale,
                             std::abs(infd_normalized_from_samples(set, scaled) - base) /
                                 std::max(1.0, std::abs(base)));
    }
  }

  const bool ok = worst_gram <= 1e-10 && worst_cplx <= 1e-12 && worst_scale <= 1e-9;
  report(7, "metric oracle equivalences", ok,
         fmt("gram identity %.2e (<=1e-10), complexity two-path %.2e (<=1e-12), infd_norm scale "
             "invariance %.2e (<=1e-9)",
             worst_gram, worst_cplx, worst_scale));
}

void criterion_8_analytic_anchors() {
  const Shape shape(4, 4);
  Rng rng(8008);

  // ToyLinear + unnormalized input x grad + zero baseline.
  const auto w_pos = rng_uniform(rng, 0.25, 1.5, shape.d());
  const auto x_pos = rng_uniform(rng, 0.05, 1.0, shape.d());
  const ToyLinear lin(w_pos, 0.4);
  const auto ixg = input_x_grad(lin, x_pos, shape, false);
  Rng mask_rng(13);
  const auto set = build_infidelity_samples(lin, x_pos, shape,
                                            {RegionMaskSpec::Mode::scattered, 0.25},
                                            {BaselineSpec::Kind::zeros, 2.0}, 16, mask_rng);
  const double infd = estimate(set, ixg.values);
  const double fcor = fcor_from_samples(set, ixg.values);

  // IG on a linear model is exact for dyadic weights at any step count.
  auto dyadic = [&rng](double lo, double hi, std::size_t n) {
    std::vector<double> v = rng_uniform(rng, lo, hi, n);
    for (double& x : v) x = std::round(x * 1024.0) / 1024.0;
    return v;
  };
  const auto wd = dyadic(-1.5, 1.5, shape.d());
  const auto xd = dyadic(0.0, 1.0, shape.d());
  const auto x0 = dyadic(0.0, 1.0, shape.d());
  const ToyLinear lin2(wd, 0.25);
  double ig_err = 0.0;
  for (std::size_t steps : {1u, 7u, 64u}) {
    const auto ig = integrated_gradients(lin2, xd, shape, x0, steps, false);
    for (std::size_t i = 0; i < shape.d(); ++i)
      ig_err = std::max(ig_err, std::abs(ig.values[i] - std::abs(wd[i] * (xd[i] - x0[i]))));
  }

  // IG completeness on a tanh MLP at 256 steps.
  const ToyMlp mlp({16, 12, 8, 1}, Activation::tanh, 21);
  const auto xm = rng_uniform(rng, 0.0, 1.0, shape.d());
  const std::vector<double> zeros(shape.d(), 0.0);
  const auto signed_ig = integrated_gradients_signed(mlp, xm, zeros, 256);
  double total = 0.0;
  for (double v : signed_ig) total += v;
  const double completeness = std::abs(total - (mlp.predict(xm) - mlp.predict(zeros)));

  // Analytic gradients vs central differences.
  double grad_err = 0.0;
  for (int t = 0; t < 10; ++t) {
    const ToyMlp m({12, 10, 1}, Activation::tanh, 900 + t);
    const auto xg = rng_uniform(rng, 0.0, 1.0, 12);
    const auto g = m.gradient(xg);
    for (std::size_t i = 0; i < xg.size(); ++i) {
      std::vector<double> lo = xg, hi = xg;
      lo[i] -= 1e-5;
      hi[i] += 1e-5;
      const double fd = (m.predict(hi) - m.predict(lo)) / 2e-5;
      const double scale = std::max({std::abs(g[i]), std::abs(fd), 1e-8});
      grad_err = std::max(grad_err, std::abs(g[i] - fd) / scale);
    }
  }

  const bool ok = infd <= 1e-10 && std::abs(fcor - 1.0) <= 1e-9 && ig_err == 0.0 &&
                  completeness <= 1e-3 && grad_err <= 1e-5;
  report(8, "analytic linear-model anchors", ok,
         fmt("linear INFD %.2e (<=1e-10), FCOR-1 %.2e (<=1e-9), IG exactness err %.1e (=0), "
             "completeness %.2e (<=1e-3), grad rel err %.2e (<=1e-5)",
             infd, std::abs(fcor - 1.0), ig_err, completeness, grad_err));
}

void criterion_9_lime_sparsity() {
  Timer timer;
  BenchConfig cfg = parse_config(nlohmann::json::parse(R"({
    "seed": 42,
    "model": {"kind": "toy_linear"},
    "dataset": {"kind": "blobs", "n": 1, "height": 16, "width": 16, "channels": 1,
                 "noise_level": 0.05},
    "m_agg": 50,
    "lime_experiment": {"images_per_group": 100, "small_fraction": 0.05,
                         "large_fraction": 0.6, "lime_samples": 200}
  })"));
  cfg.threads = 0;
  const auto res = run_lime_sparsity_experiment(cfg, false);
  const double small_lo = res.small_mean[2] - res.small_ci_half[2];
  const double large_hi = res.large_mean[2] + res.large_ci_half[2];
  const double secs = timer.seconds();
  const bool ok = res.small_mean[2] > res.large_mean[2] && small_lo > large_hi && secs < 600.0;
  report(9, "lime sparsity direction", ok,
         fmt("high-sparsity weight small %.4f+-%.4f vs large %.4f+-%.4f (disjoint 95%% CIs), "
             "%.1fs (<600s)",
             res.small_mean[2], res.small_ci_half[2], res.large_mean[2], res.large_ci_half[2],
             secs));
}

void criterion_10_method_diversity() {
  Timer timer;
  const Shape shape(16, 16);
  const ToyMlp model({256, 32, 16, 1}, Activation::tanh, 7);
  const BaselineSpec blur{BaselineSpec::Kind::blur, 2.0};
  std::vector<MethodSpec> roster{
      {.kind = MethodKind::saliency},
      {.kind = MethodKind::input_x_grad},
      {.kind = MethodKind::smoothgrad, .sg_samples = 12},
      {.kind = MethodKind::occlusion, .occlusion_baseline = blur},
      {.kind = MethodKind::lime_patch,
       .lime_patch_h = 4,
       .lime_patch_w = 4,
       .lime_samples = 100,
       .lime_lambda = 0.0,
       .lime_baseline = blur},
      {.kind = MethodKind::lime_patch,
       .lime_patch_h = 2,
       .lime_patch_w = 2,
       .lime_samples = 200,
       .lime_lambda = 0.0,
       .lime_baseline = blur}};
  const auto seeded = materialize_method_seeds(roster, 42);
  const StackFn fn = [&](const std::vector<double>& x) {
    return compute_stack(model, seeded, x, shape);
  };
  Rng data_rng = Rng(42).child(0xDA7A);
  const BlobDataset data = gen_blob_dataset(50, shape, 0.05, 0.6, 0.05, data_rng);

  auto solve_subset = [](const GramMatrix& full, const std::vector<std::size_t>& idx,
                         std::size_t k_total) {
    GramMatrix sub;
    sub.k = idx.size();
    sub.q.resize(idx.size() * idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < idx.size(); ++c)
        sub.q[r * idx.size() + c] = full.at(idx[r], idx[c]);
    double fro = 0.0;
    for (double v : sub.q) fro += v * v;
    fro = std::sqrt(fro);
    if (fro > 0.0)
      for (double& v : sub.q) v /= fro;
    const Solution sol = solve(sub);
    std::vector<double> w(k_total, 0.0);
    for (std::size_t r = 0; r < idx.size(); ++r) w[idx[r]] = sol.omega[r];
    return SimplexWeights(w);
  };

  std::vector<int> wins(data.images.size(), 0);
  detail::parallel_for(data.images.size(), 0, [&](std::size_t i) {
    const auto& x = data.images[i];
    const AttributionStack stack = fn(x);
    const Rng img = Rng(42).child(0x2000 + i);
    Rng fit_rng = img.child(1);
    Rng eval_rng = img.child(2);
    const auto fit_set = build_sensitivity_samples(fn, x, shape, NoiseSpec{0.1}, 50, fit_rng);
    const auto eval_set = build_sensitivity_samples(fn, x, shape, NoiseSpec{0.1}, 200, eval_rng);
    const GramMatrix full = gram(fit_set, stack);
    const auto w_grad = solve_subset(full, {0, 1, 2}, 6);
    const auto w_pert = solve_subset(full, {3, 4, 5}, 6);
    const auto w_both = solve_subset(full, {0, 1, 2, 3, 4, 5}, 6);
    const double s_grad = estimate_aggregate(eval_set, stack, w_grad);
    const double s_pert = estimate_aggregate(eval_set, stack, w_pert);
    const double s_both = estimate_aggregate(eval_set, stack, w_both);
    wins[i] = s_both <= std::min(s_grad, s_pert) ? 1 : 0;
  });
  std::size_t total = 0;
  for (int w : wins) total += w;
  const double rate = static_cast<double>(total) / static_cast<double>(data.images.size());
  const double secs = timer.seconds();
  const bool ok = rate >= 0.7;
  report(10, "gradient+perturbation diversity", ok,
         fmt("combined <= better 3-method family in %.0f%% of images (>=70%%), %.1fs", 100.0 * rate,
             secs));
}

void criterion_11_determinism_and_formats() {
  const fs::path tmp =
      fs::temp_directory_path() / ("xagg_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };

  BenchConfig cfg = parse_config(nlohmann::json::parse(R"({
    "seed": 17,
    "dataset": {"kind": "blobs", "n": 4, "height": 8, "width": 8, "channels": 1},
    "methods": [{"kind": "saliency"}, {"kind": "input_x_grad"},
                 {"kind": "smoothgrad", "samples": 4}],
    "m_agg": 10,
    "m_eval": 20
  })"));
  cfg.output_dir = (tmp / "a").string();
  run_bench(cfg);
  BenchConfig cfg2 = cfg;
  cfg2.output_dir = (tmp / "b").string();
  cfg2.threads = 1;
  run_bench(cfg2);
  const bool bench_identical = slurp(tmp / "a" / "results.csv") == slurp(tmp / "b" / "results.csv") &&
                               slurp(tmp / "a" / "results.json") == slurp(tmp / "b" / "results.json") &&
                               slurp(tmp / "a" / "summary.csv") == slurp(tmp / "b" / "summary.csv");

  Rng rng(11);
  const auto stack = random_stack(Shape(8, 8), 3, rng);
  save_stack(stack, tmp / "s1");
  const auto loaded = load_stack(tmp / "s1");
  save_stack(loaded, tmp / "s2");
  const bool stack_roundtrip = slurp(tmp / "s1" / "data.f32") == slurp(tmp / "s2" / "data.f32") &&
                               slurp(tmp / "s1" / "manifest.json") == slurp(tmp / "s2" / "manifest.json");

  bool corrupt_detected = false;
  {
    auto bytes = slurp(tmp / "s1" / "data.f32");
    bytes[5] = static_cast<char>(bytes[5] ^ 0x10);
    std::ofstream(tmp / "s1" / "data.f32", std::ios::binary | std::ios::trunc)
        << bytes;
    try {
      load_stack(tmp / "s1");
    } catch (const FormatError&) {
      corrupt_detected = true;
    }
  }

  bool pgm_ok = true;
  {
    const AttributionMap map{Shape(4, 4), rng_uniform(rng, 0.0, 1.0, 16), false};
    export_heatmap(map, tmp / "m.pgm");
    const std::string bytes = slurp(tmp / "m.pgm");
    const std::string header = "P5\n4 4\n255\n";
    pgm_ok = bytes.rfind(header, 0) == 0 && bytes.size() == header.size() + 16;
    if (pgm_ok)
      for (std::size_t i = 0; i < 16; ++i) {
        const double v = static_cast<unsigned char>(bytes[header.size() + i]) / 255.0;
        if (std::abs(v - map.values[i]) > 1.0 / 255.0 + 1e-12) pgm_ok = false;
      }
  }

  fs::remove_all(tmp);
  const bool ok = bench_identical && stack_roundtrip && corrupt_detected && pgm_ok;
  report(11, "determinism and file formats", ok,
         fmt("bench byte-identical %s, stack round trip %s, corruption rejected %s, pgm round "
             "trip %s",
             bench_identical ? "yes" : "NO", stack_roundtrip ? "yes" : "NO",
             corrupt_detected ? "yes" : "NO", pgm_ok ? "yes" : "NO"));
}

}  // namespace

int main() {
  std::printf("xagg acceptance suite\n");
  criterion_1_decomposition_identity();
  criterion_2_qp_correctness();

  const Timer bench_timer;
  const BenchResult toy = run_toy_bench();
  const double bench_secs = bench_timer.seconds();
  criterion_3_vertex_dominance(toy);
  criterion_4_heldout_robustness(toy, bench_secs);
  criterion_5_heldout_faithfulness(toy, bench_secs);

  criterion_6_regret_decay();
  criterion_7_metric_oracles();
  criterion_8_analytic_anchors();
  criterion_9_lime_sparsity();
  criterion_10_method_diversity();
  criterion_11_determinism_and_formats();

  if (g_failures == 0) {
    std::printf("acceptance: all 11 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criteria FAILED\n", g_failures);
  return 1;
}
