#pragma once

// Self-check suite behind the `verify` subcommand: re-runs the library's
// structural identities (decomposition residual, Gram identity, QP vs grid
// oracle with KKT certificates, gradient checks, metric equivalences, regret
// trend) and emits a machine-readable report. Nonzero exit on any failure.

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "xagg/aggregation.hpp"
#include "xagg/attributions.hpp"
#include "xagg/metrics.hpp"
#include "xagg/models.hpp"
#include "xagg/qp.hpp"
#include "xagg/rng.hpp"
#include "xagg/version.hpp"

namespace xagg {

struct VerifyCheck {
  std::string name;
  bool passed = false;
  double measured = 0.0;  // worst observed value
  double tolerance = 0.0;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;
  bool all_passed = false;
  std::uint64_t seed = 0;
};

namespace detail {

inline AttributionStack verify_stack(const Shape& shape, std::size_t k, Rng& rng) {
  std::vector<std::string> names;
  std::vector<AttributionMap> cols;
  for (std::size_t i = 0; i < k; ++i) {
    names.push_back("m" + std::to_string(i));
    cols.push_back(normalize(rng_uniform(rng, -1.0, 1.0, shape.d()), shape));
  }
  return AttributionStack(shape, names, cols);
}

inline MetricSampleSet verify_samples(const Shape& shape, std::size_t k, std::size_t m,
                                      bool per_method, Rng& rng) {
  MetricSampleSet set;
  set.label = per_method ? "sens" : "infd";
  for (std::size_t j = 0; j < m; ++j) {
    if (per_method) {
      set.samples.push_back(MetricSample{LinearQuery::identity(shape.d()),
                                         rng_uniform(rng, 0.0, 1.0, shape.d() * k), k});
    } else {
      std::vector<double> row(shape.d());
      for (double& v : row) v = rng.next_unit() < 0.3 ? 1.0 : 0.0;
      set.samples.push_back(MetricSample{LinearQuery::row_mask(row), {rng.uniform(-2.0, 2.0)}, 0});
    }
  }
  return set;
}

inline GramMatrix verify_psd(std::size_t k, Rng& rng) {
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
  for (double& v : g.q) v /= fro;
  g.frobenius_norm = 1.0;
  g.m_used = 1;
  return g;
}

}  // namespace detail

inline VerifyReport run_verify(std::uint64_t seed, const SolverConfig& solver = {}) {
  VerifyReport report;
  report.seed = seed;
  const Shape shape(4, 4);
  auto add = [&](const std::string& name, double measured, double tolerance, bool lower_is_pass) {
    VerifyCheck c{name, lower_is_pass ? measured <= tolerance : measured >= tolerance, measured,
                  tolerance};
    report.checks.push_back(c);
  };

  {  // analytic gradients vs central differences
    Rng rng = Rng(seed).child(1);
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
      const ToyMlp model({8, 10, 1}, Activation::tanh, 400 + t);
      const auto x = rng_uniform(rng, 0.0, 1.0, 8);
      const auto g = model.gradient(x);
      for (std::size_t i = 0; i < 8; ++i) {
        std::vector<double> lo = x, hi = x;
        lo[i] -= 1e-5;
        hi[i] += 1e-5;
        const double fd = (model.predict(hi) - model.predict(lo)) / 2e-5;
        const double scale = std::max({std::abs(g[i]), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(g[i] - fd) / scale);
      }
    }
    add("gradient_vs_central_difference_rel_err", worst, 1e-5, true);
  }

  {  // decomposition identity and ambiguity sign
    Rng rng = Rng(seed).child(2);
    double worst_residual = 0.0, worst_ambiguity = 0.0;
    for (int t = 0; t < 20; ++t) {
      const std::size_t k = 2 + t % 6;
      const auto stack = detail::verify_stack(shape, k, rng);
      const auto set = detail::verify_samples(shape, k, 10, t % 2 == 0, rng);
      std::vector<double> w = rng_uniform(rng, 0.01, 1.0, k);
      double s = 0.0;
      for (double v : w) s += v;
      for (double& v : w) v /= s;
      const auto rep = theorem42_check(stack, SimplexWeights(w), set);
      worst_residual =
          std::max(worst_residual, rep.residual / std::max(1.0, rep.weighted_sum));
      worst_ambiguity = std::min(worst_ambiguity, rep.ambiguity);
    }
    add("decomposition_residual_rel", worst_residual, 1e-8, true);
    add("decomposition_ambiguity_min", worst_ambiguity, -1e-12, false);
  }

  {  // Gram identity: w^T Q w vs direct Gamma w evaluation
    Rng rng = Rng(seed).child(3);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const std::size_t k = 2 + t % 5;
      const auto stack = detail::verify_stack(shape, k, rng);
      const auto set = detail::verify_samples(shape, k, 8, t % 2 == 0, rng);
      const auto q = gram(set, stack);
      for (int wt = 0; wt < 5; ++wt) {
        std::vector<double> w = rng_uniform(rng, 0.01, 1.0, k);
        double s = 0.0;
        for (double v : w) s += v;
        for (double& v : w) v /= s;
        const SimplexWeights sw(w);
        worst = std::max(worst, std::abs(q.quad(sw) - estimate_aggregate(set, stack, sw)));
      }
    }
    add("gram_identity_abs_err", worst, 1e-10, true);
  }

  {  // QP vs lattice oracle, KKT certificates, vertex dominance
    Rng rng = Rng(seed).child(4);
    double worst_gap = 0.0, worst_kkt = 0.0, worst_vertex = -1e300;
    for (int t = 0; t < 20; ++t) {
      const std::size_t k = 2 + t % 3;
      const auto q = detail::verify_psd(k, rng);
      const auto sol = solve(q, solver);
      worst_kkt = std::max(worst_kkt, sol.kkt_residual);
      const auto [gw, gobj] = grid_oracle(q, 1e-3);
      worst_gap = std::max(worst_gap, std::abs(sol.objective - gobj));
      double min_diag = q.at(0, 0);
      for (std::size_t i = 1; i < k; ++i) min_diag = std::min(min_diag, q.at(i, i));
      worst_vertex = std::max(worst_vertex, sol.objective - min_diag);
    }
    add("qp_vs_grid_oracle_abs_err", worst_gap, 5e-6, true);
    add("qp_kkt_residual", worst_kkt, 1e-6, true);
    add("qp_vertex_dominance_excess", worst_vertex, 1e-9, true);
  }

  {  // evaluation-metric equivalences
    Rng rng = Rng(seed).child(5);
    double worst_cplx = 0.0, worst_scale = 0.0, worst_order = 0.0;
    for (int t = 0; t < 10; ++t) {
      const AttributionMap map{shape, rng_uniform(rng, 0.0, 1.0, shape.d()), false};
      worst_cplx = std::max(worst_cplx, std::abs(complexity_metric(map, 0.3) -
                                                 complexity_metric_via_query(map, 0.3)));
      const auto set = detail::verify_samples(shape, 1, 10, false, rng);
      const double base = infd_normalized_from_samples(set, map.values);
      for (double c : {0.5, 2.0, 10.0}) {
        std::vector<double> scaled = map.values;
        for (double& v : scaled) v *= c;
        worst_scale = std::max(worst_scale,
                               std::abs(infd_normalized_from_samples(set, scaled) - base) /
                                   std::max(1.0, std::abs(base)));
      }
      const std::size_t k = 3;
      const auto stack = detail::verify_stack(shape, k, rng);
      const auto sens = detail::verify_samples(shape, k, 10, true, rng);
      for (std::size_t i = 0; i < k; ++i) {
        const auto w = SimplexWeights::vertex(k, i);
        worst_order = std::max(worst_order, estimate_aggregate(sens, stack, w) -
                                                max_aggregate_distortion(sens, stack, w));
      }
    }
    add("complexity_two_path_abs_err", worst_cplx, 1e-12, true);
    add("infd_normalized_scale_invariance_rel", worst_scale, 1e-9, true);
    add("sens_avg_minus_sens_max", worst_order, 1e-12, true);
  }

  {  // regret trend on a light pipeline
    const ToyMlp model({16, 8, 1}, Activation::tanh, 77);
    std::vector<MethodSpec> roster{{.kind = MethodKind::saliency},
                                   {.kind = MethodKind::input_x_grad},
                                   {.kind = MethodKind::smoothgrad, .sg_samples = 3, .seed = 2}};
    const Shape small(4, 4);
    const StackFn fn = [&](const std::vector<double>& x) {
      return compute_stack(model, roster, x, small);
    };
    Rng xr = Rng(seed).child(6);
    const auto x = rng_uniform(xr, 0.0, 1.0, small.d());
    Rng rng = Rng(seed).child(7);
    const MetricPlan plan{MetricPlan::Family::sensitivity, NoiseSpec{0.1}, {}, {}, nullptr};
    const auto rep = regret_study(fn, x, small, plan, {5, 40}, 9, 300, rng, solver);
    double min_regret = 0.0;
    for (const auto& per_m : rep.regrets)
      for (double r : per_m) min_regret = std::min(min_regret, r);
    add("regret_min", min_regret, -1e-9, false);
    add("regret_trend_large_minus_small", rep.median_regret[1] - rep.median_regret[0], 1e-12,
        true);
  }

  report.all_passed = true;
  for (const auto& c : report.checks) report.all_passed = report.all_passed && c.passed;
  return report;
}

inline nlohmann::json verify_to_json(const VerifyReport& report) {
  nlohmann::json doc;
  doc["tool_version"] = kVersion;
  doc["seed"] = report.seed;
  doc["all_passed"] = report.all_passed;
  doc["checks"] = nlohmann::json::array();
  for (const auto& c : report.checks) {
    nlohmann::json j;
    j["name"] = c.name;
    j["passed"] = c.passed;
    j["measured"] = c.measured;
    j["tolerance"] = c.tolerance;
    doc["checks"].push_back(j);
  }
  return doc;
}

inline VerifyReport verify_from_json(const nlohmann::json& doc) {
  VerifyReport report;
  report.seed = doc.at("seed").get<std::uint64_t>();
  report.all_passed = doc.at("all_passed").get<bool>();
  for (const auto& j : doc.at("checks")) {
    VerifyCheck c;
    c.name = j.at("name").get<std::string>();
    c.passed = j.at("passed").get<bool>();
    c.measured = j.at("measured").get<double>();
    c.tolerance = j.at("tolerance").get<double>();
    report.checks.push_back(c);
  }
  return report;
}

}  // namespace xagg
