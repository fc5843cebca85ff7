#pragma once

// Attribution methods the harness aggregates: gradient-based (saliency,
// input x gradient, integrated gradients, smoothgrad, vargrad) and
// perturbation-based (patch occlusion, patch-LIME with a weighted LASSO
// surrogate fitted by cyclic coordinate descent).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "xagg/core.hpp"
#include "xagg/models.hpp"
#include "xagg/perturb.hpp"
#include "xagg/rng.hpp"

namespace xagg {

// Tiles an image into patch_h x patch_w cells; ragged cells at the right and
// bottom edge are full patches of their own.
class PatchGrid {
 public:
  PatchGrid(const Shape& shape, std::size_t patch_h, std::size_t patch_w)
      : shape_(shape), patch_h_(patch_h), patch_w_(patch_w) {
    if (patch_h < 1 || patch_w < 1) throw InvalidInput("PatchGrid: patch size must be >= 1");
    cells_x_ = (shape.width + patch_w - 1) / patch_w;
    cells_y_ = (shape.height + patch_h - 1) / patch_h;
  }

  const Shape& shape() const { return shape_; }
  std::size_t patch_h() const { return patch_h_; }
  std::size_t patch_w() const { return patch_w_; }
  std::size_t n_patches() const { return cells_x_ * cells_y_; }

  std::size_t patch_of_pixel(std::size_t py, std::size_t px) const {
    return (py / patch_h_) * cells_x_ + (px / patch_w_);
  }

  // 0/1 feature mask selecting patch p (all channels).
  std::vector<double> patch_mask(std::size_t p) const {
    std::vector<double> mask(shape_.d(), 0.0);
    for (std::size_t py = 0; py < shape_.height; ++py)
      for (std::size_t px = 0; px < shape_.width; ++px)
        if (patch_of_pixel(py, px) == p)
          for (std::size_t c = 0; c < shape_.channels; ++c)
            mask[(py * shape_.width + px) * shape_.channels + c] = 1.0;
    return mask;
  }

  // Writes score[p] to every feature of patch p.
  std::vector<double> scatter(const std::vector<double>& per_patch) const {
    if (per_patch.size() != n_patches()) throw InvalidInput("PatchGrid::scatter: size mismatch");
    std::vector<double> out(shape_.d());
    for (std::size_t py = 0; py < shape_.height; ++py)
      for (std::size_t px = 0; px < shape_.width; ++px) {
        const double v = per_patch[patch_of_pixel(py, px)];
        for (std::size_t c = 0; c < shape_.channels; ++c)
          out[(py * shape_.width + px) * shape_.channels + c] = v;
      }
    return out;
  }

 private:
  Shape shape_;
  std::size_t patch_h_, patch_w_;
  std::size_t cells_x_ = 0, cells_y_ = 0;
};

namespace detail {

inline AttributionMap finish_map(std::vector<double> raw, const Shape& shape, bool normalize_output) {
  if (normalize_output) return normalize(raw, shape);
  check_finite(raw, "attribution");
  return AttributionMap{shape, std::move(raw), false};
}

inline std::vector<double> abs_values(std::vector<double> v) {
  for (double& x : v) x = std::abs(x);
  return v;
}

}  // namespace detail

inline AttributionMap saliency(const Model& model, const std::vector<double>& x, const Shape& shape,
                               bool normalize_output = true) {
  return detail::finish_map(detail::abs_values(model.gradient(x)), shape, normalize_output);
}

inline AttributionMap input_x_grad(const Model& model, const std::vector<double>& x,
                                   const Shape& shape, bool normalize_output = true) {
  std::vector<double> g = model.gradient(x);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::abs(x[i] * g[i]);
  return detail::finish_map(std::move(g), shape, normalize_output);
}

// Signed midpoint-rule path integral, kept separate so the completeness
// identity sum(IG) = f(x) - f(x0) can be checked before the absolute value.
inline std::vector<double> integrated_gradients_signed(const Model& model,
                                                       const std::vector<double>& x,
                                                       const std::vector<double>& baseline,
                                                       std::size_t steps) {
  if (steps < 1) throw InvalidInput("integrated_gradients: steps must be >= 1");
  if (baseline.size() != x.size()) throw InvalidInput("integrated_gradients: baseline size");
  std::vector<double> acc(x.size(), 0.0);
  std::vector<double> point(x.size());
  for (std::size_t s = 1; s <= steps; ++s) {
    const double t = (static_cast<double>(s) - 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = baseline[i] + t * (x[i] - baseline[i]);
    const std::vector<double> g = model.gradient(point);
    for (std::size_t i = 0; i < x.size(); ++i) acc[i] += g[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i)
    acc[i] = (x[i] - baseline[i]) * (acc[i] / static_cast<double>(steps));
  return acc;
}

inline AttributionMap integrated_gradients(const Model& model, const std::vector<double>& x,
                                           const Shape& shape, const std::vector<double>& baseline,
                                           std::size_t steps, bool normalize_output = true) {
  return detail::finish_map(
      detail::abs_values(integrated_gradients_signed(model, x, baseline, steps)), shape,
      normalize_output);
}

// |mean of signed gradients| over Gaussian neighbors. sigma = 0 collapses to
// the plain gradient so the saliency identity holds exactly.
inline AttributionMap smoothgrad(const Model& model, const std::vector<double>& x,
                                 const Shape& shape, std::size_t n, double sigma,
                                 std::uint64_t seed, bool normalize_output = true) {
  if (n < 1) throw InvalidInput("smoothgrad: n must be >= 1");
  if (sigma < 0.0) throw InvalidInput("smoothgrad: sigma must be >= 0");
  if (sigma == 0.0)
    return detail::finish_map(detail::abs_values(model.gradient(x)), shape, normalize_output);

  Rng rng(seed);
  std::vector<double> acc(x.size(), 0.0);
  std::vector<double> noisy(x.size());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = x[i] + rng.gaussian(0.0, sigma);
    const std::vector<double> g = model.gradient(noisy);
    for (std::size_t i = 0; i < x.size(); ++i) acc[i] += g[i];
  }
  for (double& v : acc) v = std::abs(v / static_cast<double>(n));
  return detail::finish_map(std::move(acc), shape, normalize_output);
}

// Elementwise population variance of gradients over Gaussian neighbors.
inline AttributionMap vargrad(const Model& model, const std::vector<double>& x, const Shape& shape,
                              std::size_t n, double sigma, std::uint64_t seed,
                              bool normalize_output = true) {
  if (n < 2) throw InvalidInput("vargrad: n must be >= 2");
  if (sigma < 0.0) throw InvalidInput("vargrad: sigma must be >= 0");
  if (sigma == 0.0)
    return detail::finish_map(std::vector<double>(x.size(), 0.0), shape, normalize_output);

  Rng rng(seed);
  std::vector<std::vector<double>> grads;
  grads.reserve(n);
  std::vector<double> noisy(x.size());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = x[i] + rng.gaussian(0.0, sigma);
    grads.push_back(model.gradient(noisy));
  }
  std::vector<double> mean(x.size(), 0.0);
  for (const auto& g : grads)
    for (std::size_t i = 0; i < x.size(); ++i) mean[i] += g[i];
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<double> var(x.size(), 0.0);
  for (const auto& g : grads)
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double dlt = g[i] - mean[i];
      var[i] += dlt * dlt;
    }
  for (double& v : var) v /= static_cast<double>(n);
  return detail::finish_map(std::move(var), shape, normalize_output);
}

// Per patch p: |f(x) - f(h(x, x_b, I_p))| written to every feature of p.
inline AttributionMap occlusion(const Model& model, const std::vector<double>& x,
                                const Shape& shape, const PatchGrid& grid,
                                const std::vector<double>& baseline,
                                bool normalize_output = true) {
  if (!(grid.shape() == shape)) throw InvalidInput("occlusion: grid/shape mismatch");
  const std::size_t P = grid.n_patches();
  std::vector<std::vector<double>> batch;
  batch.reserve(P + 1);
  batch.push_back(x);
  for (std::size_t p = 0; p < P; ++p) batch.push_back(apply_h(x, baseline, grid.patch_mask(p)));
  const std::vector<double> scores = model.predict_batch(batch);
  std::vector<double> per_patch(P);
  for (std::size_t p = 0; p < P; ++p) per_patch[p] = std::abs(scores[0] - scores[p + 1]);
  return detail::finish_map(grid.scatter(per_patch), shape, normalize_output);
}

namespace detail {

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Weighted LASSO with unpenalized intercept:
//   min_b sum_j pi_j (y_j - b0 - b.z_j)^2 + penalty * sum_p |b_p|
// by cyclic coordinate descent with soft thresholding. The intercept is
// profiled out exactly by weighted centering (same minimizer), and the
// coordinate updates run on the precomputed weighted Gram matrix, so a sweep
// costs O(P^2) instead of O(P n).
struct LassoFit {
  double intercept = 0.0;
  std::vector<double> beta;
  std::size_t sweeps = 0;
};

inline LassoFit weighted_lasso_cd(const std::vector<std::vector<double>>& z,
                                  const std::vector<double>& y, const std::vector<double>& pi,
                                  double penalty, double tol = 1e-8,
                                  std::size_t max_sweeps = 10000) {
  const std::size_t n = z.size();
  const std::size_t P = z.front().size();

  double sw = 0.0, y_mean = 0.0;
  std::vector<double> mu(P, 0.0);  // weighted column means
  for (std::size_t j = 0; j < n; ++j) {
    sw += pi[j];
    y_mean += pi[j] * y[j];
    for (std::size_t p = 0; p < P; ++p) mu[p] += pi[j] * z[j][p];
  }
  LassoFit fit;
  fit.beta.assign(P, 0.0);
  if (sw <= 0.0) return fit;
  y_mean /= sw;
  for (double& m : mu) m /= sw;

  // G = Zc' Pi Zc and b = Zc' Pi yc on centered data.
  std::vector<double> gramm(P * P, 0.0), b(P, 0.0);
  std::vector<double> zc(P);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < P; ++p) zc[p] = z[j][p] - mu[p];
    const double yc = y[j] - y_mean;
    for (std::size_t p = 0; p < P; ++p) {
      const double wz = pi[j] * zc[p];
      b[p] += wz * yc;
      for (std::size_t q = p; q < P; ++q) gramm[p * P + q] += wz * zc[q];
    }
  }
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t q = 0; q < p; ++q) gramm[p * P + q] = gramm[q * P + p];

  std::vector<double> gb(P, 0.0);  // G beta, maintained incrementally
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double gpp = gramm[p * P + p];
      if (gpp <= 0.0) continue;  // constant column (patch never/always kept)
      const double c = b[p] - gb[p] + gpp * fit.beta[p];
      const double b_new = soft_threshold(c, penalty / 2.0) / gpp;
      const double db = b_new - fit.beta[p];
      if (db != 0.0) {
        const double* col = gramm.data() + p * P;
        for (std::size_t q = 0; q < P; ++q) gb[q] += db * col[q];
        fit.beta[p] = b_new;
        max_change = std::max(max_change, std::abs(db));
      }
    }
    fit.sweeps = sweep + 1;
    if (max_change <= tol) break;
  }

  fit.intercept = y_mean;
  for (std::size_t p = 0; p < P; ++p) fit.intercept -= fit.beta[p] * mu[p];
  return fit;
}

}  // namespace detail

// Patch-LIME: Bernoulli(0.5) keep-masks per patch, removal via h against the
// baseline, proximity kernel pi(z) = exp(-(1-s)^2 / 0.25) with s the kept
// fraction, |beta_p| scattered onto patch features. The L1 weight is
// lambda * n_samples so the lambda grid has sample-size-independent meaning.
inline AttributionMap lime_patch(const Model& model, const std::vector<double>& x,
                                 const Shape& shape, const PatchGrid& grid,
                                 std::size_t n_samples, double lambda,
                                 const std::vector<double>& baseline, std::uint64_t seed,
                                 bool normalize_output = true) {
  if (!(grid.shape() == shape)) throw InvalidInput("lime_patch: grid/shape mismatch");
  if (lambda < 0.0) throw InvalidInput("lime_patch: lambda must be >= 0");
  const std::size_t P = grid.n_patches();
  if (n_samples < P + 1)
    throw InvalidInput("lime_patch: n_samples must be >= n_patches + 1 (underdetermined)");

  Rng rng(seed);
  std::vector<std::vector<double>> z(n_samples, std::vector<double>(P));
  std::vector<double> pi(n_samples);
  std::vector<std::vector<double>> batch;
  batch.reserve(n_samples);
  std::vector<double> removal_mask(shape.d());
  for (std::size_t j = 0; j < n_samples; ++j) {
    std::size_t kept = 0;
    for (std::size_t p = 0; p < P; ++p) {
      z[j][p] = rng.next_unit() < 0.5 ? 1.0 : 0.0;
      kept += z[j][p] != 0.0 ? 1u : 0u;
    }
    const double s = static_cast<double>(kept) / static_cast<double>(P);
    pi[j] = std::exp(-(1.0 - s) * (1.0 - s) / 0.25);

    std::fill(removal_mask.begin(), removal_mask.end(), 0.0);
    for (std::size_t py = 0; py < shape.height; ++py)
      for (std::size_t px = 0; px < shape.width; ++px)
        if (z[j][grid.patch_of_pixel(py, px)] == 0.0)
          for (std::size_t c = 0; c < shape.channels; ++c)
            removal_mask[(py * shape.width + px) * shape.channels + c] = 1.0;
    batch.push_back(apply_h(x, baseline, removal_mask));
  }

  const std::vector<double> y = model.predict_batch(batch);
  const auto fit = detail::weighted_lasso_cd(z, y, pi, lambda * static_cast<double>(n_samples));

  std::vector<double> per_patch(P);
  for (std::size_t p = 0; p < P; ++p) per_patch[p] = std::abs(fit.beta[p]);
  return detail::finish_map(grid.scatter(per_patch), shape, normalize_output);
}

enum class MethodKind {
  saliency,
  input_x_grad,
  integrated_gradients,
  smoothgrad,
  vargrad,
  occlusion,
  lime_patch
};

struct MethodSpec {
  MethodKind kind = MethodKind::saliency;

  std::size_t ig_steps = 64;
  BaselineSpec ig_baseline{BaselineSpec::Kind::zeros};

  std::size_t sg_samples = 25;
  double sg_sigma = 0.1;

  std::size_t occlusion_patch_h = 4, occlusion_patch_w = 4;
  BaselineSpec occlusion_baseline{BaselineSpec::Kind::zeros};

  std::size_t lime_patch_h = 4, lime_patch_w = 4;
  std::size_t lime_samples = 200;
  double lime_lambda = 0.0;
  BaselineSpec lime_baseline{BaselineSpec::Kind::zeros};

  bool normalize_output = true;
  std::uint64_t seed = 0;

  std::string label() const {
    std::ostringstream os;
    switch (kind) {
      case MethodKind::saliency:
        return "saliency";
      case MethodKind::input_x_grad:
        return "input_x_grad";
      case MethodKind::integrated_gradients:
        os << "intgrad[s=" << ig_steps << "]";
        break;
      case MethodKind::smoothgrad:
        os << "smoothgrad[n=" << sg_samples << ",sig=" << sg_sigma << "]";
        break;
      case MethodKind::vargrad:
        os << "vargrad[n=" << sg_samples << ",sig=" << sg_sigma << "]";
        break;
      case MethodKind::occlusion:
        os << "occlusion[" << occlusion_patch_h << "x" << occlusion_patch_w << "]";
        break;
      case MethodKind::lime_patch:
        os << "lime[" << lime_patch_h << "x" << lime_patch_w << ",lam=" << lime_lambda << "]";
        break;
    }
    return os.str();
  }
};

inline AttributionMap compute_attribution(const Model& model, const MethodSpec& spec,
                                          const std::vector<double>& x, const Shape& shape) {
  switch (spec.kind) {
    case MethodKind::saliency:
      return saliency(model, x, shape, spec.normalize_output);
    case MethodKind::input_x_grad:
      return input_x_grad(model, x, shape, spec.normalize_output);
    case MethodKind::integrated_gradients:
      return integrated_gradients(model, x, shape, make_baseline(spec.ig_baseline, x, shape),
                                  spec.ig_steps, spec.normalize_output);
    case MethodKind::smoothgrad:
      return smoothgrad(model, x, shape, spec.sg_samples, spec.sg_sigma, spec.seed,
                        spec.normalize_output);
    case MethodKind::vargrad:
      return vargrad(model, x, shape, spec.sg_samples, spec.sg_sigma, spec.seed,
                     spec.normalize_output);
    case MethodKind::occlusion:
      return occlusion(model, x, shape, PatchGrid(shape, spec.occlusion_patch_h, spec.occlusion_patch_w),
                       make_baseline(spec.occlusion_baseline, x, shape), spec.normalize_output);
    case MethodKind::lime_patch:
      return lime_patch(model, x, shape, PatchGrid(shape, spec.lime_patch_h, spec.lime_patch_w),
                        spec.lime_samples, spec.lime_lambda,
                        make_baseline(spec.lime_baseline, x, shape), spec.seed,
                        spec.normalize_output);
  }
  throw InvalidInput("compute_attribution: unknown method kind");
}

// Unique stack labels for a roster; duplicates (the roster may repeat a
// method on purpose) get a #n suffix.
inline std::vector<std::string> roster_labels(const std::vector<MethodSpec>& roster) {
  std::vector<std::string> names;
  for (const auto& spec : roster) {
    std::string label = spec.label();
    std::size_t suffix = 2;
    while (std::find(names.begin(), names.end(), label) != names.end())
      label = spec.label() + "#" + std::to_string(suffix++);
    names.push_back(label);
  }
  return names;
}

// Evaluates the whole roster at x.
inline AttributionStack compute_stack(const Model& model, const std::vector<MethodSpec>& roster,
                                      const std::vector<double>& x, const Shape& shape) {
  if (roster.empty()) throw InvalidInput("compute_stack: empty roster");
  std::vector<AttributionMap> cols;
  for (const auto& spec : roster) cols.push_back(compute_attribution(model, spec, x, shape));
  return AttributionStack(shape, roster_labels(roster), std::move(cols));
}

}  // namespace xagg
