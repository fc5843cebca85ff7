#pragma once

// Generalized L2 quality metrics: Q(phi) = E[ ||gamma1 phi - gamma2||^2 ].
// A metric is represented by m sampled (gamma1, gamma2) pairs. Stacking k
// attributions into Phi gives the per-sample matrix Gamma whose column i is
// gamma1 phi^i - gamma2; the aggregation objective is then
// w^T mean(Gamma^T Gamma) w over the simplex.
//
// gamma2 comes in two forms. Infidelity-style metrics share one gamma2 across
// methods (the paper's "k copies" construction). Sensitivity-style metrics
// need a per-method gamma2 (phi^i evaluated at the perturbed input); because
// the weights sum to one the same quadratic algebra goes through with
// per-method columns, and Gamma w equals phi^w(x) - phi^w(x+eps) exactly.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "xagg/attributions.hpp"
#include "xagg/core.hpp"
#include "xagg/models.hpp"
#include "xagg/perturb.hpp"
#include "xagg/rng.hpp"

namespace xagg {

enum class QueryKind { identity, row_mask, dense, diagonal };

// The linear query gamma1 in R^{g x d}, in the shapes the metrics actually
// use: identity (g = d), a single 0/1 row (g = 1), a dense matrix, or a 0/1
// diagonal (g = d).
class LinearQuery {
 public:
  static LinearQuery identity(std::size_t d) { return LinearQuery(QueryKind::identity, d, d, {}); }

  static LinearQuery row_mask(std::vector<double> row) {
    for (double v : row)
      if (v != 0.0 && v != 1.0) throw InvalidInput("LinearQuery::row_mask: entries must be 0/1");
    const std::size_t d = row.size();
    return LinearQuery(QueryKind::row_mask, 1, d, std::move(row));
  }

  static LinearQuery dense(std::size_t g, std::size_t d, std::vector<double> data) {
    if (data.size() != g * d) throw InvalidInput("LinearQuery::dense: data size != g*d");
    check_finite(data, "LinearQuery::dense");
    return LinearQuery(QueryKind::dense, g, d, std::move(data));
  }

  static LinearQuery diagonal(std::vector<double> diag) {
    for (double v : diag)
      if (v != 0.0 && v != 1.0) throw InvalidInput("LinearQuery::diagonal: entries must be 0/1");
    const std::size_t d = diag.size();
    return LinearQuery(QueryKind::diagonal, d, d, std::move(diag));
  }

  QueryKind kind() const { return kind_; }
  std::size_t g() const { return g_; }
  std::size_t d() const { return d_; }
  const std::vector<double>& data() const { return data_; }

  // out = gamma1 * x, out resized to g.
  void apply(const std::vector<double>& x, std::vector<double>& out) const {
    if (x.size() != d_) throw InvalidInput("LinearQuery::apply: dimension mismatch");
    out.resize(g_);
    switch (kind_) {
      case QueryKind::identity:
        std::copy(x.begin(), x.end(), out.begin());
        break;
      case QueryKind::row_mask: {
        double s = 0.0;
        for (std::size_t i = 0; i < d_; ++i)
          if (data_[i] != 0.0) s += x[i];
        out[0] = s;
        break;
      }
      case QueryKind::dense:
        for (std::size_t r = 0; r < g_; ++r) {
          double s = 0.0;
          const double* row = data_.data() + r * d_;
          for (std::size_t i = 0; i < d_; ++i) s += row[i] * x[i];
          out[r] = s;
        }
        break;
      case QueryKind::diagonal:
        for (std::size_t i = 0; i < d_; ++i) out[i] = data_[i] != 0.0 ? x[i] : 0.0;
        break;
    }
  }

 private:
  LinearQuery(QueryKind kind, std::size_t g, std::size_t d, std::vector<double> data)
      : kind_(kind), g_(g), d_(d), data_(std::move(data)) {}

  QueryKind kind_;
  std::size_t g_, d_;
  std::vector<double> data_;
};

// One metric evaluation sample. gamma2 holds g values (shared) or g*k values
// column-major (per-method, column i belongs to method i).
struct MetricSample {
  LinearQuery gamma1;
  std::vector<double> gamma2;
  std::size_t per_method_k = 0;

  bool per_method() const { return per_method_k > 0; }
  std::size_t g() const { return gamma1.g(); }

  const double* gamma2_col(std::size_t i) const {
    return per_method() ? gamma2.data() + i * g() : gamma2.data();
  }
};

struct MetricSampleSet {
  std::string label;
  std::vector<MetricSample> samples;

  std::size_t m() const { return samples.size(); }
};

// Q = (1/m) sum_j Gamma_j^T Gamma_j, the k x k PSD matrix defining the QP.
struct GramMatrix {
  std::size_t k = 0;
  std::vector<double> q;  // row-major k x k
  std::size_t m_used = 0;
  double frobenius_norm = 0.0;

  double at(std::size_t i, std::size_t j) const { return q[i * k + j]; }

  double quad(const SimplexWeights& w) const {
    if (w.k() != k) throw InvalidInput("GramMatrix::quad: k mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) s += w[i] * q[i * k + j] * w[j];
    return s;
  }
};

namespace detail {

// Gamma for one sample: g x k column-major, column i = gamma1 phi^i - gamma2_i.
inline std::vector<double> gamma_matrix(const MetricSample& sample, const AttributionStack& stack) {
  if (sample.per_method() && sample.per_method_k != stack.k())
    throw InvalidInput("metric sample per-method k does not match stack");
  const std::size_t g = sample.g();
  const std::size_t k = stack.k();
  std::vector<double> gm(g * k);
  std::vector<double> q;
  for (std::size_t i = 0; i < k; ++i) {
    sample.gamma1.apply(stack.column(i).values, q);
    const double* g2 = sample.gamma2_col(i);
    for (std::size_t r = 0; r < g; ++r) gm[i * g + r] = q[r] - g2[r];
  }
  return gm;
}

}  // namespace detail

using StackFn = std::function<AttributionStack(const std::vector<double>&)>;

// SENS_AVG samples: gamma1 = I_d, gamma2 = per-method columns phi^i(x + eps_j)
// with eps ~ U[-delta, delta)^d. The stack function re-evaluates every method
// at the perturbed input.
inline MetricSampleSet build_sensitivity_samples(const StackFn& stack_fn,
                                                 const std::vector<double>& x, const Shape& shape,
                                                 const NoiseSpec& noise, std::size_t m, Rng& rng) {
  if (m < 1) throw InvalidInput("build_sensitivity_samples: m must be >= 1");
  MetricSampleSet set;
  set.label = "sens_avg";
  set.samples.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::vector<double> eps = sample_noise(noise, shape, rng);
    std::vector<double> xp(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xp[i] = x[i] + eps[i];
    const AttributionStack pert = stack_fn(xp);
    if (pert.d() != shape.d()) throw InvalidInput("build_sensitivity_samples: stack d mismatch");
    MetricSample sample{LinearQuery::identity(shape.d()), {}, pert.k()};
    sample.gamma2.resize(shape.d() * pert.k());
    for (std::size_t i = 0; i < pert.k(); ++i)
      std::copy(pert.column(i).values.begin(), pert.column(i).values.end(),
                sample.gamma2.begin() + i * shape.d());
    set.samples.push_back(std::move(sample));
  }
  return set;
}

// INFD samples: gamma1 = I^T (one 0/1 row), shared scalar gamma2 =
// f(x) - f(h(x, x_b, I)). Model calls are batched.
inline MetricSampleSet build_infidelity_samples(const Model& model, const std::vector<double>& x,
                                                const Shape& shape, const RegionMaskSpec& mask_spec,
                                                const BaselineSpec& baseline_spec, std::size_t m,
                                                Rng& rng) {
  if (m < 1) throw InvalidInput("build_infidelity_samples: m must be >= 1");
  const std::vector<double> xb = make_baseline(baseline_spec, x, shape);
  std::vector<std::vector<double>> masks;
  masks.reserve(m);
  std::vector<std::vector<double>> batch;
  batch.reserve(m + 1);
  batch.push_back(x);
  for (std::size_t j = 0; j < m; ++j) {
    masks.push_back(sample_mask(mask_spec, shape, rng));
    batch.push_back(apply_h(x, xb, masks.back()));
  }
  const std::vector<double> scores = model.predict_batch(batch);

  MetricSampleSet set;
  set.label = "infd";
  set.samples.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    MetricSample sample{LinearQuery::row_mask(std::move(masks[j])),
                        {scores[0] - scores[j + 1]},
                        0};
    set.samples.push_back(std::move(sample));
  }
  return set;
}

// Empirical metric value for a fixed map. Per-method gamma2 has no meaning
// for an arbitrary map; use estimate_aggregate for convex combinations.
inline double estimate(const MetricSampleSet& set, const std::vector<double>& map) {
  if (set.m() == 0) throw InvalidInput("estimate: empty sample set");
  double acc = 0.0;
  std::vector<double> q;
  for (const auto& sample : set.samples) {
    if (sample.per_method())
      throw Unsupported("estimate: per-method gamma2 requires estimate_aggregate");
    sample.gamma1.apply(map, q);
    for (std::size_t r = 0; r < sample.g(); ++r) {
      const double dlt = q[r] - sample.gamma2[r];
      acc += dlt * dlt;
    }
  }
  return acc / static_cast<double>(set.m());
}

inline double estimate(const MetricSampleSet& set, const AttributionMap& map) {
  return estimate(set, map.values);
}

// Direct evaluation of (1/m) sum_j ||Gamma_j w||^2 — the route that must
// agree with w^T Q w.
inline double estimate_aggregate(const MetricSampleSet& set, const AttributionStack& stack,
                                 const SimplexWeights& w) {
  if (w.k() != stack.k()) throw InvalidInput("estimate_aggregate: weight/stack k mismatch");
  if (set.m() == 0) throw InvalidInput("estimate_aggregate: empty sample set");
  double acc = 0.0;
  for (const auto& sample : set.samples) {
    const auto gm = detail::gamma_matrix(sample, stack);
    const std::size_t g = sample.g();
    for (std::size_t r = 0; r < g; ++r) {
      double v = 0.0;
      for (std::size_t i = 0; i < stack.k(); ++i) v += w[i] * gm[i * g + r];
      acc += v * v;
    }
  }
  return acc / static_cast<double>(set.m());
}

// Max-sample analogue: max_j ||Gamma_j w||^2. On sensitivity sets this is
// SENS_MAX of the aggregate over the same draws as SENS_AVG.
inline double max_aggregate_distortion(const MetricSampleSet& set, const AttributionStack& stack,
                                       const SimplexWeights& w) {
  if (set.m() == 0) throw InvalidInput("max_aggregate_distortion: empty sample set");
  double mx = 0.0;
  for (const auto& sample : set.samples) {
    const auto gm = detail::gamma_matrix(sample, stack);
    const std::size_t g = sample.g();
    double acc = 0.0;
    for (std::size_t r = 0; r < g; ++r) {
      double v = 0.0;
      for (std::size_t i = 0; i < stack.k(); ++i) v += w[i] * gm[i * g + r];
      acc += v * v;
    }
    mx = std::max(mx, acc);
  }
  return mx;
}

inline GramMatrix gram(const MetricSampleSet& set, const AttributionStack& stack) {
  if (set.m() == 0) throw InvalidInput("gram: empty sample set");
  const std::size_t k = stack.k();
  GramMatrix out;
  out.k = k;
  out.q.assign(k * k, 0.0);
  out.m_used = set.m();
  // Fixed sample order, upper triangle then mirror, so Q is exactly symmetric.
  for (const auto& sample : set.samples) {
    const auto gm = detail::gamma_matrix(sample, stack);
    const std::size_t g = sample.g();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i; j < k; ++j) {
        double dot = 0.0;
        const double* ci = gm.data() + i * g;
        const double* cj = gm.data() + j * g;
        for (std::size_t r = 0; r < g; ++r) dot += ci[r] * cj[r];
        out.q[i * k + j] += dot;
      }
  }
  const double inv_m = 1.0 / static_cast<double>(set.m());
  double fro = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      out.q[i * k + j] *= inv_m;
      out.q[j * k + i] = out.q[i * k + j];
    }
  for (double v : out.q) fro += v * v;
  out.frobenius_norm = std::sqrt(fro);
  return out;
}

// SENS_MAX as a standalone evaluation: fresh perturbations, selector picks the
// map to track (an individual method or a fixed-weight aggregate).
using MapSelector = std::function<std::vector<double>(const AttributionStack&)>;

inline double sens_max_eval(const StackFn& stack_fn, const std::vector<double>& x,
                            const Shape& shape, const NoiseSpec& noise, std::size_t m, Rng& rng,
                            const MapSelector& selector) {
  if (m < 1) throw InvalidInput("sens_max_eval: m must be >= 1");
  const std::vector<double> base = selector(stack_fn(x));
  double mx = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const std::vector<double> eps = sample_noise(noise, shape, rng);
    std::vector<double> xp(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xp[i] = x[i] + eps[i];
    const std::vector<double> pert = selector(stack_fn(xp));
    double acc = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double dlt = base[i] - pert[i];
      acc += dlt * dlt;
    }
    mx = std::max(mx, acc);
  }
  return mx;
}

inline MapSelector select_column(std::size_t i) {
  return [i](const AttributionStack& s) { return s.column(i).values; };
}

inline MapSelector select_aggregate(SimplexWeights w) {
  return [w](const AttributionStack& s) { return aggregate_linear(s, w).values; };
}

namespace detail {

// (mask . map, delta_f) pairs from an infidelity-style sample set.
inline std::pair<std::vector<double>, std::vector<double>> faithfulness_series(
    const MetricSampleSet& set, const std::vector<double>& map) {
  std::vector<double> a, b;
  a.reserve(set.m());
  b.reserve(set.m());
  std::vector<double> q;
  for (const auto& sample : set.samples) {
    if (sample.gamma1.kind() != QueryKind::row_mask || sample.per_method() || sample.g() != 1)
      throw InvalidInput("expected row-mask samples with shared scalar gamma2");
    sample.gamma1.apply(map, q);
    a.push_back(q[0]);
    b.push_back(sample.gamma2[0]);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace detail

// Pearson correlation between mask-projected attribution scores and the
// prediction drops. A constant series has no correlation: that is reported
// as DegenerateCorrelation, never as 0.
inline double fcor_from_samples(const MetricSampleSet& set, const std::vector<double>& map) {
  if (set.m() < 3) throw InvalidInput("fcor: need m >= 3");
  auto [a, b] = detail::faithfulness_series(set, map);
  const auto range_zero = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi;
  };
  if (range_zero(a) || range_zero(b))
    throw DegenerateCorrelation("fcor: zero variance in a series");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    ma += a[j];
    mb += b[j];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    saa += (a[j] - ma) * (a[j] - ma);
    sbb += (b[j] - mb) * (b[j] - mb);
    sab += (a[j] - ma) * (b[j] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DegenerateCorrelation("fcor: zero variance in a series");
  return sab / std::sqrt(saa * sbb);
}

inline double fcor_eval(const Model& model, const std::vector<double>& x, const Shape& shape,
                        const RegionMaskSpec& mask_spec, const BaselineSpec& baseline_spec,
                        std::size_t m, Rng& rng, const std::vector<double>& map) {
  return fcor_from_samples(build_infidelity_samples(model, x, shape, mask_spec, baseline_spec, m, rng),
                           map);
}

// Scale-normalized infidelity: beta = sum(a b) / sum(a^2) (1 when the map
// projects to ~0 everywhere), then mean (beta a - b)^2. Invariant under
// positive rescaling of the map.
inline double infd_normalized_from_samples(const MetricSampleSet& set,
                                           const std::vector<double>& map) {
  if (set.m() < 1) throw InvalidInput("infd_normalized: need m >= 1");
  auto [a, b] = detail::faithfulness_series(set, map);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    num += a[j] * b[j];
    den += a[j] * a[j];
  }
  const double beta = den <= 1e-18 ? 1.0 : num / den;
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double dlt = beta * a[j] - b[j];
    acc += dlt * dlt;
  }
  return acc / static_cast<double>(a.size());
}

// Alignment against a desired attribution: one deterministic sample with
// gamma1 = I_d, gamma2 = target.
inline MetricSampleSet alignment_target_samples(const AttributionMap& target) {
  MetricSampleSet set;
  set.label = "alignment_target";
  set.samples.push_back(
      MetricSample{LinearQuery::identity(target.values.size()), target.values, 0});
  return set;
}

// Alignment against a region of interest: gamma1 = I_d - diag(region) and
// gamma2 = 0, so the metric is the attribution mass outside the region.
inline MetricSampleSet alignment_region_samples(const std::vector<double>& region,
                                                std::size_t d) {
  if (region.size() != d) throw InvalidInput("alignment_region_samples: size mismatch");
  std::vector<double> data(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) data[i * d + i] = region[i] != 0.0 ? 0.0 : 1.0;
  MetricSampleSet set;
  set.label = "alignment_region";
  set.samples.push_back(
      MetricSample{LinearQuery::dense(d, d, std::move(data)), std::vector<double>(d, 0.0), 0});
  return set;
}

// Parameter-randomization sanity check: -(1/n) sum_j || phi_theta(x) -
// phi_theta~j(x) ||^2 with every layer resampled per draw. More negative is
// better; a model-ignoring attribution scores the 0 worst case.
using AttributionFn =
    std::function<AttributionMap(const Model&, const std::vector<double>&, const Shape&)>;

inline double randomization_metric(const ToyMlp& model, const std::vector<double>& x,
                                   const Shape& shape, const AttributionFn& attribution,
                                   std::size_t n_rand, Rng& rng) {
  if (n_rand < 1) throw InvalidInput("randomization_metric: n_rand must be >= 1");
  const AttributionMap base = attribution(model, x, shape);
  std::vector<std::size_t> all_layers(model.layer_count());
  for (std::size_t l = 0; l < all_layers.size(); ++l) all_layers[l] = l;
  double acc = 0.0;
  for (std::size_t j = 0; j < n_rand; ++j) {
    const RandomizedModel rm(model, all_layers, rng.next_u64());
    const AttributionMap pert = attribution(rm, x, shape);
    for (std::size_t i = 0; i < base.values.size(); ++i) {
      const double dlt = base.values[i] - pert.values[i];
      acc += dlt * dlt;
    }
  }
  return -acc / static_cast<double>(n_rand);
}

inline double randomization_metric(const ToyMlp& model, const std::vector<double>& x,
                                   const Shape& shape, const MethodSpec& method,
                                   std::size_t n_rand, Rng& rng) {
  return randomization_metric(
      model, x, shape,
      [&method](const Model& m, const std::vector<double>& xi, const Shape& s) {
        return compute_attribution(m, method, xi, s);
      },
      n_rand, rng);
}

// Truncated-L2 complexity, direct form: sum_i min(|v_i|, t)^2.
inline double complexity_metric(const AttributionMap& map, double t) {
  if (!(t > 0.0)) throw InvalidInput("complexity_metric: t must be > 0");
  double acc = 0.0;
  for (double v : map.values) {
    const double m = std::min(std::abs(v), t);
    acc += m * m;
  }
  return acc;
}

// Same metric through the gamma construction: gamma1 a 0/1 diagonal keeping
// entries with |v| < t, gamma2_i = -t where |v| > t and 0 elsewhere. Must
// agree with the direct form.
inline double complexity_metric_via_query(const AttributionMap& map, double t) {
  if (!(t > 0.0)) throw InvalidInput("complexity_metric: t must be > 0");
  const std::size_t d = map.values.size();
  std::vector<double> diag(d), gamma2(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double av = std::abs(map.values[i]);
    diag[i] = av < t ? 1.0 : 0.0;
    gamma2[i] = av > t ? -t : 0.0;
  }
  MetricSampleSet set;
  set.label = "complexity";
  set.samples.push_back(MetricSample{LinearQuery::diagonal(std::move(diag)), std::move(gamma2), 0});
  return estimate(set, map.values);
}

}  // namespace xagg
