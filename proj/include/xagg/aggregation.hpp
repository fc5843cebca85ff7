#pragma once

// Aggregation strategies over a stack of attributions: the mean and
// variance-weighted baselines, the optimized strategies (robust / faith /
// opt / custom) backed by the simplex QP, the finite-sample decomposition
// check, and the sample-complexity regret study.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xagg/core.hpp"
#include "xagg/metrics.hpp"
#include "xagg/qp.hpp"
#include "xagg/rng.hpp"

namespace xagg {

enum class StrategyKind { mean, var, robust, faith, opt, custom };

inline const char* strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::mean: return "agg_mean";
    case StrategyKind::var: return "agg_var";
    case StrategyKind::robust: return "agg_robust";
    case StrategyKind::faith: return "agg_faith";
    case StrategyKind::opt: return "agg_opt";
    case StrategyKind::custom: return "agg_custom";
  }
  return "?";
}

struct StrategySpec {
  StrategyKind kind = StrategyKind::opt;
  double var_epsilon = 1e-6;
  // Per-metric weights for custom; robust/faith/opt use 1.
  std::vector<double> lambdas;
  // Divide each Gram matrix by its Frobenius norm before summing. Matters
  // only when combining more than one metric.
  bool frobenius_normalize = true;
  SolverConfig solver;
};

struct AggregationResult {
  StrategyKind kind = StrategyKind::mean;
  std::optional<SimplexWeights> weights;  // absent for agg_var
  AttributionMap map;
  std::optional<Solution> solution;  // optimized kinds
  bool degenerate_gram = false;      // all metrics had zero Gram: uniform fallback
};

inline AggregationResult agg_mean(const AttributionStack& stack) {
  const SimplexWeights w = SimplexWeights::uniform(stack.k());
  return AggregationResult{StrategyKind::mean, w, aggregate_linear(stack, w), std::nullopt, false};
}

// Feature-wise variance-weighted mean: (1/k) sum_i phi_i / (sigma + eps).
// Shared by agg_var and by sensitivity re-evaluation of the var row, where
// the perturbed columns come from a sample set instead of a stack.
inline std::vector<double> var_combine(const std::vector<const double*>& columns, std::size_t d,
                                       double epsilon) {
  const std::size_t k = columns.size();
  std::vector<double> out(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < k; ++i) mean += columns[i][j];
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double dlt = columns[i][j] - mean;
      var += dlt * dlt;
    }
    const double sigma = std::sqrt(var / static_cast<double>(k));
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) acc += columns[i][j] / (sigma + epsilon);
    out[j] = acc / static_cast<double>(k);
  }
  return out;
}

// agg_var is not a convex combination; its output is max-rescaled so all
// aggregates share the [0,1] range, and the weights field stays empty.
inline AggregationResult agg_var(const AttributionStack& stack, double epsilon = 1e-6) {
  if (!(epsilon > 0.0)) throw InvalidInput("agg_var: epsilon must be > 0");
  std::vector<const double*> cols(stack.k());
  for (std::size_t i = 0; i < stack.k(); ++i) cols[i] = stack.column(i).values.data();
  const std::vector<double> raw = var_combine(cols, stack.d(), epsilon);
  return AggregationResult{StrategyKind::var, std::nullopt, normalize(raw, stack.shape()),
                           std::nullopt, false};
}

// Optimized aggregation: Q_total = sum_j lambda_j (Q_j / ||Q_j||_F when
// normalizing), weights from the simplex QP, map = phi^w.
inline AggregationResult agg_optimize(const AttributionStack& stack,
                                      const std::vector<const MetricSampleSet*>& metrics,
                                      const StrategySpec& spec) {
  switch (spec.kind) {
    case StrategyKind::robust:
    case StrategyKind::faith:
      if (metrics.size() != 1) throw InvalidInput("agg_optimize: strategy needs exactly 1 metric");
      break;
    case StrategyKind::opt:
      if (metrics.size() != 2)
        throw InvalidInput("agg_optimize: opt needs exactly 2 metrics (infd, sens)");
      break;
    case StrategyKind::custom:
      if (metrics.empty()) throw InvalidInput("agg_optimize: custom needs >= 1 metric");
      break;
    default:
      throw InvalidInput("agg_optimize: not an optimized strategy kind");
  }
  std::vector<double> lambdas = spec.lambdas;
  if (lambdas.empty()) lambdas.assign(metrics.size(), 1.0);
  if (lambdas.size() != metrics.size())
    throw InvalidInput("agg_optimize: lambda count mismatch");
  for (double l : lambdas)
    if (!(l >= 0.0)) throw InvalidInput("agg_optimize: lambdas must be >= 0");

  const std::size_t k = stack.k();
  GramMatrix total;
  total.k = k;
  total.q.assign(k * k, 0.0);
  bool any_nonzero = false;
  for (std::size_t j = 0; j < metrics.size(); ++j) {
    GramMatrix qj = gram(*metrics[j], stack);
    total.m_used += qj.m_used;
    double scale = lambdas[j];
    if (spec.frobenius_normalize) {
      if (qj.frobenius_norm > 0.0)
        scale /= qj.frobenius_norm;
      else
        continue;
    }
    if (qj.frobenius_norm > 0.0) any_nonzero = true;
    for (std::size_t i = 0; i < k * k; ++i) total.q[i] += scale * qj.q[i];
  }
  double fro = 0.0;
  for (double v : total.q) fro += v * v;
  total.frobenius_norm = std::sqrt(fro);

  if (!any_nonzero) {
    const SimplexWeights w = SimplexWeights::uniform(k);
    return AggregationResult{spec.kind, w, aggregate_linear(stack, w), std::nullopt, true};
  }

  Solution sol = solve(total, spec.solver);
  AttributionMap map = aggregate_linear(stack, sol.omega);
  return AggregationResult{spec.kind, sol.omega, std::move(map), std::move(sol), false};
}

// Finite-sample decomposition on one sample set:
//   Q(phi^w) = sum_i w_i Q(phi^i) - (1/m) sum_j sum_i w_i ||Gamma_i - Gamma w||^2.
// All three quantities are evaluated by separate numeric routes on the same
// samples, so the residual is pure round-off.
struct IdentityReport {
  double lhs = 0.0;
  double weighted_sum = 0.0;
  double ambiguity = 0.0;
  double residual = 0.0;
};

inline IdentityReport theorem42_check(const AttributionStack& stack, const SimplexWeights& omega,
                                      const MetricSampleSet& set) {
  if (omega.k() != stack.k()) throw InvalidInput("theorem42_check: k mismatch");
  if (set.m() == 0) throw InvalidInput("theorem42_check: empty sample set");
  const std::size_t k = stack.k();
  IdentityReport rep;
  std::vector<double> per_method(k, 0.0);
  double lhs = 0.0, ambiguity = 0.0;
  std::vector<double> combo;
  for (const auto& sample : set.samples) {
    const auto gm = detail::gamma_matrix(sample, stack);
    const std::size_t g = sample.g();
    combo.assign(g, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const double* ci = gm.data() + i * g;
      double nrm = 0.0;
      for (std::size_t r = 0; r < g; ++r) {
        nrm += ci[r] * ci[r];
        combo[r] += omega[i] * ci[r];
      }
      per_method[i] += nrm;
    }
    for (std::size_t r = 0; r < g; ++r) lhs += combo[r] * combo[r];
    for (std::size_t i = 0; i < k; ++i) {
      const double* ci = gm.data() + i * g;
      double nrm = 0.0;
      for (std::size_t r = 0; r < g; ++r) {
        const double dlt = ci[r] - combo[r];
        nrm += dlt * dlt;
      }
      ambiguity += omega[i] * nrm;
    }
  }
  const double inv_m = 1.0 / static_cast<double>(set.m());
  rep.lhs = lhs * inv_m;
  rep.ambiguity = ambiguity * inv_m;
  rep.weighted_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) rep.weighted_sum += omega[i] * per_method[i] * inv_m;
  rep.residual = std::abs(rep.lhs - (rep.weighted_sum - rep.ambiguity));
  return rep;
}

// How one sample set family is drawn; lets the regret study and the bench
// rebuild independent sets of any size from child RNG streams.
struct MetricPlan {
  enum class Family { sensitivity, infidelity };
  Family family = Family::sensitivity;
  NoiseSpec noise{};
  RegionMaskSpec mask{};
  BaselineSpec baseline{};
  const Model* model = nullptr;  // required for infidelity
};

inline MetricSampleSet build_samples(const MetricPlan& plan, const StackFn& stack_fn,
                                     const std::vector<double>& x, const Shape& shape,
                                     std::size_t m, Rng& rng) {
  if (plan.family == MetricPlan::Family::sensitivity)
    return build_sensitivity_samples(stack_fn, x, shape, plan.noise, m, rng);
  if (plan.model == nullptr) throw InvalidInput("build_samples: infidelity plan needs a model");
  return build_infidelity_samples(*plan.model, x, shape, plan.mask, plan.baseline, m, rng);
}

// Empirical Theorem-4.3 study: fit weights on m fresh samples, score the
// regret against the pool optimum on a large fixed pool, repeat over trials.
struct RegretReport {
  std::vector<std::size_t> m_grid;
  std::vector<double> median_regret;           // per grid entry
  std::vector<std::vector<double>> regrets;    // [grid entry][trial]
  std::size_t trials = 0;
  std::size_t pool_size = 0;
  double pool_objective = 0.0;
};

inline RegretReport regret_study(const StackFn& stack_fn, const std::vector<double>& x,
                                 const Shape& shape, const MetricPlan& plan,
                                 const std::vector<std::size_t>& m_grid, std::size_t trials,
                                 std::size_t pool_size, Rng& rng,
                                 const SolverConfig& solver = {}) {
  if (m_grid.empty()) throw InvalidInput("regret_study: empty m grid");
  if (trials < 1) throw InvalidInput("regret_study: trials must be >= 1");
  for (std::size_t m : m_grid)
    if (m < 1 || m > pool_size) throw InvalidInput("regret_study: m grid out of range");

  const AttributionStack stack = stack_fn(x);

  Rng pool_rng = rng.child(0);
  const MetricSampleSet pool = build_samples(plan, stack_fn, x, shape, pool_size, pool_rng);
  const GramMatrix q_pool = gram(pool, stack);
  const Solution best = solve(q_pool, solver);

  RegretReport rep;
  rep.m_grid = m_grid;
  rep.trials = trials;
  rep.pool_size = pool_size;
  rep.pool_objective = best.objective;
  rep.regrets.assign(m_grid.size(), std::vector<double>(trials, 0.0));

  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t gi = 0; gi < m_grid.size(); ++gi) {
      Rng trial_rng = rng.child(1 + t * m_grid.size() + gi);
      const MetricSampleSet fit_set =
          build_samples(plan, stack_fn, x, shape, m_grid[gi], trial_rng);
      const Solution fit = solve(gram(fit_set, stack), solver);
      rep.regrets[gi][t] = q_pool.quad(fit.omega) - best.objective;
    }
  }

  rep.median_regret.resize(m_grid.size());
  for (std::size_t gi = 0; gi < m_grid.size(); ++gi) {
    std::vector<double> r = rep.regrets[gi];
    std::sort(r.begin(), r.end());
    rep.median_regret[gi] =
        trials % 2 == 1 ? r[trials / 2] : 0.5 * (r[trials / 2 - 1] + r[trials / 2]);
  }
  return rep;
}

}  // namespace xagg
