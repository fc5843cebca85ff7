#pragma once

// End-to-end bench: synthetic data, the per-image optimize/evaluate pipeline
// (fit weights on m_agg samples, score every row on m_eval fresh samples),
// the LIME sparsity experiment and the self-check (verify) suite.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xagg/aggregation.hpp"
#include "xagg/attributions.hpp"
#include "xagg/config.hpp"
#include "xagg/core.hpp"
#include "xagg/io.hpp"
#include "xagg/metrics.hpp"
#include "xagg/models.hpp"
#include "xagg/msp.hpp"
#include "xagg/qp.hpp"
#include "xagg/rng.hpp"
#include "xagg/version.hpp"

namespace xagg {

struct BlobDataset {
  Shape shape;
  std::vector<std::vector<double>> images;
  std::vector<std::vector<double>> region_masks;  // 0/1 per feature
};

// Grayscale blobs: Gaussian background around 0.2, one bright axis-aligned
// rectangle at 0.9 whose area fraction is drawn uniformly from the range.
inline BlobDataset gen_blob_dataset(std::size_t n, const Shape& shape, double frac_lo,
                                    double frac_hi, double noise_level, Rng& rng) {
  if (shape.channels != 1) throw InvalidInput("gen_blob_dataset: grayscale only");
  if (!(frac_lo > 0.0 && frac_hi < 1.0 && frac_lo <= frac_hi))
    throw InvalidInput("gen_blob_dataset: fraction range must be within (0, 1)");
  BlobDataset out;
  out.shape = shape;
  const std::size_t H = shape.height, W = shape.width;
  for (std::size_t img = 0; img < n; ++img) {
    std::vector<double> x(shape.d());
    for (double& v : x) v = 0.2 + (noise_level > 0.0 ? rng.gaussian(0.0, noise_level) : 0.0);

    const double frac = frac_lo == frac_hi ? frac_lo : rng.uniform(frac_lo, frac_hi);
    const double area = frac * static_cast<double>(H * W);
    auto rect_h = static_cast<std::size_t>(std::llround(std::sqrt(area)));
    rect_h = std::clamp<std::size_t>(rect_h, 1, H);
    auto rect_w = static_cast<std::size_t>(std::llround(area / static_cast<double>(rect_h)));
    rect_w = std::clamp<std::size_t>(rect_w, 1, W);

    const std::size_t top = rng.next_index(H - rect_h + 1);
    const std::size_t left = rng.next_index(W - rect_w + 1);
    std::vector<double> mask(shape.d(), 0.0);
    for (std::size_t y = top; y < top + rect_h; ++y)
      for (std::size_t xx = left; xx < left + rect_w; ++xx) {
        x[y * W + xx] = 0.9;
        mask[y * W + xx] = 1.0;
      }
    out.images.push_back(std::move(x));
    out.region_masks.push_back(std::move(mask));
  }
  return out;
}

inline std::unique_ptr<Model> construct_model(const ModelConfig& cfg, std::size_t d) {
  switch (cfg.kind) {
    case ModelConfig::Kind::toy_mlp: {
      std::vector<std::size_t> sizes{d};
      sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
      sizes.push_back(1);
      return std::make_unique<ToyMlp>(sizes, cfg.activation, cfg.seed);
    }
    case ModelConfig::Kind::toy_linear: {
      std::vector<double> w = cfg.weights.empty() ? std::vector<double>(d, 1.0) : cfg.weights;
      if (w.size() != d) throw ConfigError("model.weights length does not match dataset d");
      return std::make_unique<ToyLinear>(std::move(w), cfg.bias);
    }
    case ModelConfig::Kind::external:
      return external_model_connect(cfg.command, cfg.timeout_ms);
  }
  throw ConfigError("construct_model: unknown kind");
}

// Method-internal sampling seeds derive from the experiment seed once, so an
// attribution is a fixed deterministic function of its input everywhere.
inline std::vector<MethodSpec> materialize_method_seeds(std::vector<MethodSpec> methods,
                                                        std::uint64_t seed) {
  const Rng root(seed);
  for (std::size_t j = 0; j < methods.size(); ++j)
    methods[j].seed = root.child(0x4D00 + j).seed();
  return methods;
}

namespace detail {

inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::mutex error_mutex;
  std::exception_ptr error;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline std::string sanitize_filename(const std::string& name) {
  std::string out;
  for (char c : name) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

// Claims child-stream indices and rejects reuse; backs the sample
// disjointness invariant between the m_agg and m_eval draws.
class StreamLedger {
 public:
  Rng claim(const Rng& parent, std::uint64_t index) {
    if (!used_.insert(index).second)
      throw std::logic_error("rng stream index reused: " + std::to_string(index));
    return parent.child(index);
  }

 private:
  std::set<std::uint64_t> used_;
};

}  // namespace detail

struct MetricCell {
  double s_avg = std::numeric_limits<double>::quiet_NaN();
  double s_max = std::numeric_limits<double>::quiet_NaN();
  double infd = std::numeric_limits<double>::quiet_NaN();
  double infd_norm = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> fcor;
};

struct StrategyDiagnostics {
  std::string name;
  std::vector<double> weights;  // empty for agg_var
  double in_sample_objective = std::numeric_limits<double>::quiet_NaN();
  double min_diagonal = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
  bool converged = true;
  bool degenerate = false;
};

struct BenchResult {
  Shape shape;
  std::vector<std::string> row_names;
  std::size_t n_methods = 0;
  std::vector<std::vector<MetricCell>> cells;              // [image][row]
  std::vector<std::vector<StrategyDiagnostics>> strategy_diags;  // [image][optimized]
  std::vector<double> mean_s_avg, mean_s_max, mean_infd, mean_infd_norm, mean_fcor;
  std::uint64_t seed = 0;
  bool partial = false;
  std::string error;
};

// Average / max squared distortion of the var-combined row under the
// sensitivity draws: the var pipeline is re-applied to the perturbed columns
// stored in each per-method sample.
inline std::pair<double, double> var_row_sensitivity(const MetricSampleSet& set,
                                                     const AttributionStack& stack,
                                                     double epsilon) {
  std::vector<const double*> cols(stack.k());
  for (std::size_t i = 0; i < stack.k(); ++i) cols[i] = stack.column(i).values.data();
  const std::vector<double> base =
      normalize(var_combine(cols, stack.d(), epsilon), stack.shape()).values;

  double acc = 0.0, mx = 0.0;
  for (const auto& sample : set.samples) {
    if (!sample.per_method() || sample.gamma1.kind() != QueryKind::identity ||
        sample.per_method_k != stack.k())
      throw InvalidInput("var_row_sensitivity: needs per-method identity samples");
    for (std::size_t i = 0; i < stack.k(); ++i) cols[i] = sample.gamma2_col(i);
    const std::vector<double> pert =
        normalize(var_combine(cols, stack.d(), epsilon), stack.shape()).values;
    double dist = 0.0;
    for (std::size_t f = 0; f < base.size(); ++f) {
      const double dlt = base[f] - pert[f];
      dist += dlt * dlt;
    }
    acc += dist;
    mx = std::max(mx, dist);
  }
  return {acc / static_cast<double>(set.m()), mx};
}

namespace detail {

struct ImageOutcome {
  std::vector<MetricCell> cells;
  std::vector<StrategyDiagnostics> diags;
  std::vector<AttributionMap> row_maps;  // kept only when heatmaps are on
};

struct RowPlan {
  std::string name;
  bool is_method = false;
  StrategyKind strategy = StrategyKind::mean;  // when !is_method
  std::size_t method_index = 0;                // when is_method
};

inline MetricCell evaluate_fixed_map(const MetricSampleSet& infd_eval,
                                     const std::vector<double>& map_values) {
  MetricCell cell;
  cell.infd = estimate(infd_eval, map_values);
  cell.infd_norm = infd_normalized_from_samples(infd_eval, map_values);
  try {
    cell.fcor = fcor_from_samples(infd_eval, map_values);
  } catch (const DegenerateCorrelation&) {
    cell.fcor = std::nullopt;
  }
  return cell;
}

inline ImageOutcome run_image_pipeline(const BenchConfig& cfg, const Model& model,
                                       const std::vector<MethodSpec>& roster,
                                       const std::vector<double>& x, std::size_t image_index,
                                       bool keep_maps) {
  const Shape& shape = cfg.dataset.shape;
  const StackFn stack_fn = [&](const std::vector<double>& xi) {
    return compute_stack(model, roster, xi, shape);
  };
  const AttributionStack stack = stack_fn(x);
  const std::size_t k = stack.k();

  const Rng image_rng = Rng(cfg.seed).child(0x1000 + image_index);
  StreamLedger streams;
  Rng agg_sens_rng = streams.claim(image_rng, 1);
  Rng agg_infd_rng = streams.claim(image_rng, 2);
  Rng eval_sens_rng = streams.claim(image_rng, 3);
  Rng eval_infd_rng = streams.claim(image_rng, 4);

  const MetricSampleSet sens_agg =
      build_sensitivity_samples(stack_fn, x, shape, cfg.noise, cfg.m_agg, agg_sens_rng);
  const MetricSampleSet infd_agg = build_infidelity_samples(model, x, shape, cfg.mask,
                                                            cfg.baseline, cfg.m_agg, agg_infd_rng);

  // Resolve strategies on the m_agg sets.
  struct ResolvedRow {
    RowPlan plan;
    std::optional<SimplexWeights> weights;
    AttributionMap map;
  };
  std::vector<ResolvedRow> rows;
  std::vector<StrategyDiagnostics> diags;
  for (std::size_t i = 0; i < k; ++i) {
    AttributionMap map = stack.column(i);
    rows.push_back({RowPlan{stack.method_names()[i], true, StrategyKind::mean, i},
                    SimplexWeights::vertex(k, i), std::move(map)});
  }
  for (StrategyKind kind : cfg.strategies) {
    StrategySpec spec;
    spec.kind = kind;
    spec.var_epsilon = cfg.var_epsilon;
    spec.solver = cfg.solver;
    AggregationResult res = [&] {
      switch (kind) {
        case StrategyKind::mean:
          return agg_mean(stack);
        case StrategyKind::var:
          return agg_var(stack, cfg.var_epsilon);
        case StrategyKind::robust:
          return agg_optimize(stack, {&sens_agg}, spec);
        case StrategyKind::faith:
          return agg_optimize(stack, {&infd_agg}, spec);
        case StrategyKind::opt:
          return agg_optimize(stack, {&infd_agg, &sens_agg}, spec);
        default:
          throw InvalidInput("run_bench: unsupported strategy");
      }
    }();
    if (kind == StrategyKind::robust || kind == StrategyKind::faith ||
        kind == StrategyKind::opt) {
      StrategyDiagnostics diag;
      diag.name = strategy_name(kind);
      diag.degenerate = res.degenerate_gram;
      if (res.weights) diag.weights = res.weights->omega();
      // In-sample Gram of the strategy objective for the vertex-dominance
      // certificate.
      GramMatrix total;
      total.k = k;
      total.q.assign(k * k, 0.0);
      const std::vector<const MetricSampleSet*> sets =
          kind == StrategyKind::robust
              ? std::vector<const MetricSampleSet*>{&sens_agg}
              : kind == StrategyKind::faith
                    ? std::vector<const MetricSampleSet*>{&infd_agg}
                    : std::vector<const MetricSampleSet*>{&infd_agg, &sens_agg};
      for (const auto* set : sets) {
        const GramMatrix qj = gram(*set, stack);
        if (qj.frobenius_norm <= 0.0) continue;
        for (std::size_t i = 0; i < k * k; ++i) total.q[i] += qj.q[i] / qj.frobenius_norm;
      }
      double min_diag = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < k; ++i) min_diag = std::min(min_diag, total.at(i, i));
      diag.min_diagonal = min_diag;
      if (res.weights) diag.in_sample_objective = total.quad(*res.weights);
      if (res.solution) {
        diag.kkt_residual = res.solution->kkt_residual;
        diag.converged = res.solution->converged;
      }
      diags.push_back(std::move(diag));
    }
    rows.push_back({RowPlan{strategy_name(kind), false, kind, 0}, res.weights,
                    std::move(res.map)});
  }

  // Fresh evaluation sets from disjoint streams.
  const MetricSampleSet sens_eval =
      build_sensitivity_samples(stack_fn, x, shape, cfg.noise, cfg.m_eval, eval_sens_rng);
  const MetricSampleSet infd_eval = build_infidelity_samples(
      model, x, shape, cfg.mask, cfg.baseline, cfg.m_eval, eval_infd_rng);

  ImageOutcome outcome;
  for (const auto& row : rows) {
    MetricCell cell = evaluate_fixed_map(infd_eval, row.map.values);
    if (row.plan.strategy == StrategyKind::var && !row.plan.is_method) {
      const auto [avg, mx] = var_row_sensitivity(sens_eval, stack, cfg.var_epsilon);
      cell.s_avg = avg;
      cell.s_max = mx;
    } else {
      cell.s_avg = estimate_aggregate(sens_eval, stack, *row.weights);
      cell.s_max = max_aggregate_distortion(sens_eval, stack, *row.weights);
    }
    outcome.cells.push_back(cell);
    if (keep_maps) outcome.row_maps.push_back(row.map);
  }
  outcome.diags = std::move(diags);
  return outcome;
}

}  // namespace detail

inline nlohmann::json bench_to_json(const BenchConfig& cfg, const BenchResult& res) {
  nlohmann::json doc;
  doc["tool_version"] = kVersion;
  doc["seed"] = res.seed;
  doc["config"] = cfg.echo.is_null() ? nlohmann::json::object() : cfg.echo;
  doc["rows"] = res.row_names;
  doc["n_methods"] = res.n_methods;
  doc["partial"] = res.partial;
  if (!res.error.empty()) doc["error"] = res.error;
  auto cell_json = [](const MetricCell& c) {
    nlohmann::json j;
    j["s_avg"] = c.s_avg;
    j["s_max"] = c.s_max;
    j["infd"] = c.infd;
    j["infd_norm"] = c.infd_norm;
    if (c.fcor)
      j["fcor"] = *c.fcor;
    else
      j["fcor"] = nullptr;
    return j;
  };
  doc["images"] = nlohmann::json::array();
  for (std::size_t i = 0; i < res.cells.size(); ++i) {
    nlohmann::json img;
    img["cells"] = nlohmann::json::array();
    for (const auto& c : res.cells[i]) img["cells"].push_back(cell_json(c));
    img["strategies"] = nlohmann::json::array();
    for (const auto& d : res.strategy_diags[i]) {
      nlohmann::json sj;
      sj["name"] = d.name;
      sj["weights"] = d.weights;
      sj["in_sample_objective"] = d.in_sample_objective;
      sj["min_diagonal"] = d.min_diagonal;
      sj["kkt_residual"] = d.kkt_residual;
      sj["converged"] = d.converged;
      sj["degenerate"] = d.degenerate;
      img["strategies"].push_back(sj);
    }
    doc["images"].push_back(img);
  }
  nlohmann::json summary;
  summary["mean_s_avg"] = res.mean_s_avg;
  summary["mean_s_max"] = res.mean_s_max;
  summary["mean_infd"] = res.mean_infd;
  summary["mean_infd_norm"] = res.mean_infd_norm;
  summary["mean_fcor"] = res.mean_fcor;
  doc["summary"] = summary;
  return doc;
}

inline void write_bench_outputs(const BenchConfig& cfg, const BenchResult& res) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  CsvWriter csv;
  for (const char* h : {"image", "row", "kind", "s_avg", "s_max", "infd", "infd_norm", "fcor"})
    csv.cell(std::string(h));
  csv.end_row();
  for (std::size_t i = 0; i < res.cells.size(); ++i)
    for (std::size_t r = 0; r < res.cells[i].size(); ++r) {
      const MetricCell& c = res.cells[i][r];
      csv.cell(static_cast<double>(i));
      csv.cell(res.row_names[r]);
      csv.cell(std::string(r < res.n_methods ? "method" : "strategy"));
      csv.cell(c.s_avg);
      csv.cell(c.s_max);
      csv.cell(c.infd);
      csv.cell(c.infd_norm);
      if (c.fcor)
        csv.cell(*c.fcor);
      else
        csv.cell_missing();
      csv.end_row();
    }
  csv.write(fs::path(cfg.output_dir) / "results.csv");

  CsvWriter summary;
  for (const char* h :
       {"row", "kind", "mean_s_avg", "mean_s_max", "mean_infd", "mean_infd_norm", "mean_fcor"})
    summary.cell(std::string(h));
  summary.end_row();
  for (std::size_t r = 0; r < res.mean_s_avg.size(); ++r) {
    summary.cell(res.row_names[r]);
    summary.cell(std::string(r < res.n_methods ? "method" : "strategy"));
    summary.cell(res.mean_s_avg[r]);
    summary.cell(res.mean_s_max[r]);
    summary.cell(res.mean_infd[r]);
    summary.cell(res.mean_infd_norm[r]);
    if (std::isnan(res.mean_fcor[r]))
      summary.cell_missing();
    else
      summary.cell(res.mean_fcor[r]);
    summary.end_row();
  }
  summary.write(fs::path(cfg.output_dir) / "summary.csv");

  const std::string json_text = bench_to_json(cfg, res).dump(2) + "\n";
  detail::write_file(fs::path(cfg.output_dir) / "results.json", json_text.data(),
                     json_text.size());
}

inline BenchResult run_bench(const BenchConfig& cfg, bool write_outputs = true) {
  const Shape& shape = cfg.dataset.shape;

  // Dataset: synthetic blobs or pre-computed stacks (stack input evaluates
  // faithfulness only and is handled by the evaluate entry point; the bench
  // needs re-computable attributions).
  if (cfg.dataset.kind != DatasetConfig::Kind::blobs)
    throw ConfigError("run_bench: dataset.kind must be 'blobs' (use evaluate for stack files)");
  Rng dataset_rng = Rng(cfg.seed).child(0xDA7A);
  const BlobDataset data = gen_blob_dataset(cfg.dataset.n, shape, cfg.dataset.fraction_lo,
                                            cfg.dataset.fraction_hi, cfg.dataset.noise_level,
                                            dataset_rng);

  const std::unique_ptr<Model> model = construct_model(cfg.model, shape.d());
  if (model->input_dim() != shape.d()) throw ConfigError("model input_dim != dataset d");
  const std::vector<MethodSpec> roster = materialize_method_seeds(cfg.methods, cfg.seed);

  BenchResult res;
  res.shape = shape;
  res.seed = cfg.seed;

  res.row_names = roster_labels(roster);
  res.n_methods = res.row_names.size();
  for (StrategyKind kind : cfg.strategies) res.row_names.push_back(strategy_name(kind));

  const std::size_t n = data.images.size();
  res.cells.resize(n);
  res.strategy_diags.resize(n);
  std::vector<detail::ImageOutcome> outcomes(n);

  try {
    detail::parallel_for(n, cfg.threads, [&](std::size_t i) {
      outcomes[i] =
          detail::run_image_pipeline(cfg, *model, roster, data.images[i], i, cfg.heatmaps);
    });
  } catch (const ModelUnavailable& e) {
    res.partial = true;
    res.error = e.what();
    if (write_outputs) write_bench_outputs(cfg, res);
    throw;
  }

  for (std::size_t i = 0; i < n; ++i) {
    res.cells[i] = std::move(outcomes[i].cells);
    res.strategy_diags[i] = std::move(outcomes[i].diags);
  }

  const std::size_t n_rows = res.row_names.size();
  res.mean_s_avg.assign(n_rows, 0.0);
  res.mean_s_max.assign(n_rows, 0.0);
  res.mean_infd.assign(n_rows, 0.0);
  res.mean_infd_norm.assign(n_rows, 0.0);
  res.mean_fcor.assign(n_rows, 0.0);
  for (std::size_t r = 0; r < n_rows; ++r) {
    std::size_t fcor_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const MetricCell& c = res.cells[i][r];
      res.mean_s_avg[r] += c.s_avg;
      res.mean_s_max[r] += c.s_max;
      res.mean_infd[r] += c.infd;
      res.mean_infd_norm[r] += c.infd_norm;
      if (c.fcor) {
        res.mean_fcor[r] += *c.fcor;
        ++fcor_count;
      }
    }
    res.mean_s_avg[r] /= n;
    res.mean_s_max[r] /= n;
    res.mean_infd[r] /= n;
    res.mean_infd_norm[r] /= n;
    res.mean_fcor[r] = fcor_count > 0 ? res.mean_fcor[r] / static_cast<double>(fcor_count)
                                      : std::numeric_limits<double>::quiet_NaN();
  }

  if (write_outputs) {
    write_bench_outputs(cfg, res);
    if (cfg.heatmaps) {
      namespace fs = std::filesystem;
      for (std::size_t i = 0; i < n; ++i) {
        const fs::path dir = fs::path(cfg.output_dir) / "heatmaps" /
                             ("img_" + std::to_string(i));
        fs::create_directories(dir);
        for (std::size_t r = 0; r < n_rows; ++r)
          export_heatmap(outcomes[i].row_maps[r],
                         dir / (detail::sanitize_filename(res.row_names[r]) + ".pgm"));
      }
    }
  }
  return res;
}

// Six LIME variants (patch sizes x lambda in {0, 0.01, 0.1}) aggregated by
// agg_opt over two blob groups (small vs large objects); reports the mean
// weight allocated to each lambda level with 95% normal intervals.
struct LimeSparsityResult {
  std::array<double, 3> lambdas{0.0, 0.01, 0.1};
  std::array<double, 3> small_mean{}, small_ci_half{};
  std::array<double, 3> large_mean{}, large_ci_half{};
  std::vector<std::array<double, 3>> small_per_image, large_per_image;
};

inline LimeSparsityResult run_lime_sparsity_experiment(const BenchConfig& cfg,
                                                       bool write_outputs = true) {
  const Shape& shape = cfg.dataset.shape;
  const std::unique_ptr<Model> model = construct_model(cfg.model, shape.d());

  std::vector<MethodSpec> roster;
  for (std::size_t patch : cfg.lime.patch_sizes)
    for (double lambda : {0.0, 0.01, 0.1}) {
      MethodSpec spec;
      spec.kind = MethodKind::lime_patch;
      spec.lime_patch_h = patch;
      spec.lime_patch_w = patch;
      spec.lime_samples = cfg.lime.lime_samples;
      spec.lime_lambda = lambda;
      spec.lime_baseline = cfg.baseline;
      roster.push_back(spec);
    }
  const std::vector<MethodSpec> seeded = materialize_method_seeds(roster, cfg.seed);

  LimeSparsityResult result;
  auto run_group = [&](double fraction, std::uint64_t group_stream,
                       std::vector<std::array<double, 3>>& per_image) {
    Rng data_rng = Rng(cfg.seed).child(group_stream);
    const BlobDataset data = gen_blob_dataset(cfg.lime.images_per_group, shape, fraction,
                                              fraction, cfg.dataset.noise_level, data_rng);
    per_image.assign(data.images.size(), {0.0, 0.0, 0.0});
    detail::parallel_for(data.images.size(), cfg.threads, [&](std::size_t i) {
      const std::vector<double>& x = data.images[i];
      const StackFn stack_fn = [&](const std::vector<double>& xi) {
        return compute_stack(*model, seeded, xi, shape);
      };
      const AttributionStack stack = stack_fn(x);
      const Rng image_rng = Rng(cfg.seed).child(group_stream + 0x100 + i);
      Rng sens_rng = image_rng.child(1);
      Rng infd_rng = image_rng.child(2);
      const MetricSampleSet sens =
          build_sensitivity_samples(stack_fn, x, shape, cfg.noise, cfg.m_agg, sens_rng);
      const MetricSampleSet infd = build_infidelity_samples(*model, x, shape, cfg.mask,
                                                            cfg.baseline, cfg.m_agg, infd_rng);
      StrategySpec spec;
      spec.kind = StrategyKind::opt;
      spec.solver = cfg.solver;
      const AggregationResult res = agg_optimize(stack, {&infd, &sens}, spec);
      std::array<double, 3> group_weight{0.0, 0.0, 0.0};
      for (std::size_t m = 0; m < seeded.size(); ++m) {
        const double lambda = seeded[m].lime_lambda;
        const std::size_t li = lambda == 0.0 ? 0 : (lambda == 0.01 ? 1 : 2);
        group_weight[li] += (*res.weights)[m];
      }
      per_image[i] = group_weight;
    });
  };

  run_group(cfg.lime.small_fraction, 0x51A11, result.small_per_image);
  run_group(cfg.lime.large_fraction, 0x1A26E, result.large_per_image);

  auto summarize = [](const std::vector<std::array<double, 3>>& rows,
                      std::array<double, 3>& mean, std::array<double, 3>& ci_half) {
    const double n = static_cast<double>(rows.size());
    for (std::size_t li = 0; li < 3; ++li) {
      double m = 0.0;
      for (const auto& r : rows) m += r[li];
      m /= n;
      double var = 0.0;
      for (const auto& r : rows) var += (r[li] - m) * (r[li] - m);
      var = rows.size() > 1 ? var / (n - 1.0) : 0.0;
      mean[li] = m;
      ci_half[li] = 1.96 * std::sqrt(var / n);
    }
  };
  summarize(result.small_per_image, result.small_mean, result.small_ci_half);
  summarize(result.large_per_image, result.large_mean, result.large_ci_half);

  if (write_outputs) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    CsvWriter csv;
    for (const char* h : {"group", "lambda", "mean_weight", "ci_low", "ci_high"})
      csv.cell(std::string(h));
    csv.end_row();
    for (int g = 0; g < 2; ++g) {
      const auto& mean = g == 0 ? result.small_mean : result.large_mean;
      const auto& ci = g == 0 ? result.small_ci_half : result.large_ci_half;
      for (std::size_t li = 0; li < 3; ++li) {
        csv.cell(std::string(g == 0 ? "small" : "large"));
        csv.cell(result.lambdas[li]);
        csv.cell(mean[li]);
        csv.cell(mean[li] - ci[li]);
        csv.cell(mean[li] + ci[li]);
        csv.end_row();
      }
    }
    csv.write(fs::path(cfg.output_dir) / "lime_sparsity.csv");
  }
  return result;
}

}  // namespace xagg
