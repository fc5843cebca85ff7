#pragma once

// min_{w in simplex} w^T Q w for a small PSD Gram matrix Q, solved by
// projected gradient with a fixed 1/L step (L from power iteration), plus a
// KKT optimality certificate and an exhaustive lattice oracle for k <= 4.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "xagg/core.hpp"
#include "xagg/metrics.hpp"

namespace xagg {

struct SolverConfig {
  double tol_objective = 1e-10;  // relative per-iteration objective decrease
  double tol_kkt = 1e-6;
  double tol_step = 1e-13;  // max iterate movement; the objective gap is
                            // quadratic in the iterate error and saturates at
                            // one ulp long before the weights stop improving
  std::size_t max_iters = 20000;
  double step_scale = 1.0;  // fault-injection hook used by verify tests
  std::vector<double>* objective_trace = nullptr;  // per-iteration objective, diagnostics only
};

struct Solution {
  SimplexWeights omega;
  double objective = 0.0;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Euclidean projection onto the simplex, sort-and-threshold. Ties sort by
// descending value then ascending index.
inline SimplexWeights project_simplex(const std::vector<double>& v) {
  if (v.empty()) throw InvalidInput("project_simplex: empty input");
  check_finite(v, "project_simplex");
  const std::size_t k = v.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  });
  double cum = 0.0, tau = 0.0;
  std::size_t rho = 0;
  for (std::size_t j = 0; j < k; ++j) {
    cum += v[order[j]];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (v[order[j]] - t > 0.0) {
      rho = j + 1;
      tau = t;
    }
  }
  (void)rho;
  std::vector<double> out(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = std::max(v[i] - tau, 0.0);
    sum += out[i];
  }
  // Renormalize the round-off so downstream sum checks stay exact.
  if (sum > 0.0 && sum != 1.0)
    for (double& x : out) x /= sum;
  return SimplexWeights(std::move(out));
}

namespace detail {

inline std::vector<double> gram_times(const GramMatrix& Q, const std::vector<double>& w) {
  std::vector<double> out(Q.k, 0.0);
  for (std::size_t i = 0; i < Q.k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < Q.k; ++j) s += Q.q[i * Q.k + j] * w[j];
    out[i] = s;
  }
  return out;
}

inline double quad_value(const GramMatrix& Q, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < Q.k; ++i)
    for (std::size_t j = 0; j < Q.k; ++j) s += w[i] * Q.q[i * Q.k + j] * w[j];
  return s;
}

inline double kkt_residual_impl(const std::vector<double>& grad, const std::vector<double>& w) {
  const double mu = *std::min_element(grad.begin(), grad.end());
  double res = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (w[i] > 1e-9) res = std::max(res, grad[i] - mu);
    res = std::max(res, std::max(mu - grad[i], 0.0));
  }
  return res;
}

// Largest eigenvalue estimate: 50 power-iteration steps from the normalized
// all-ones vector.
inline double power_lambda_max(const GramMatrix& Q) {
  const std::size_t k = Q.k;
  std::vector<double> v(k, 1.0 / std::sqrt(static_cast<double>(k)));
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    std::vector<double> w = gram_times(Q, v);
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) return 0.0;
    lambda = norm;
    for (std::size_t i = 0; i < k; ++i) v[i] = w[i] / norm;
  }
  return lambda;
}

}  // namespace detail

// Optimality certificate: with g = 2 Q w and mu = min_i g_i, active
// coordinates must satisfy g_i = mu at the optimum.
inline double kkt_residual(const GramMatrix& Q, const SimplexWeights& omega) {
  if (omega.k() != Q.k) throw InvalidInput("kkt_residual: k mismatch");
  std::vector<double> g = detail::gram_times(Q, omega.omega());
  for (double& x : g) x *= 2.0;
  return detail::kkt_residual_impl(g, omega.omega());
}

inline Solution solve(const GramMatrix& Q, const SolverConfig& cfg = {}) {
  if (Q.k == 0 || Q.q.size() != Q.k * Q.k) throw InvalidInput("solve: malformed Gram matrix");
  for (std::size_t i = 0; i < Q.k; ++i)
    for (std::size_t j = i + 1; j < Q.k; ++j)
      if (std::abs(Q.at(i, j) - Q.at(j, i)) > 1e-9)
        throw InvalidInput("solve: Q is not symmetric");

  // Q = 0: every feasible point is optimal; return the canonical one.
  double max_abs = 0.0;
  for (double v : Q.q) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs == 0.0)
    return Solution{SimplexWeights::uniform(Q.k), 0.0, 0.0, 0, true};

  const double lambda_max = detail::power_lambda_max(Q);
  const double L = std::max(2.0 * lambda_max * 1.01, 1e-12);
  const double step = cfg.step_scale / L;

  SimplexWeights omega = SimplexWeights::uniform(Q.k);
  double f = detail::quad_value(Q, omega.omega());
  Solution sol{omega, f, 0.0, 0, false};
  if (cfg.objective_trace) {
    cfg.objective_trace->clear();
    cfg.objective_trace->push_back(f);
  }

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    std::vector<double> g = detail::gram_times(Q, omega.omega());
    for (double& x : g) x *= 2.0;
    const double kkt = detail::kkt_residual_impl(g, omega.omega());

    std::vector<double> v(Q.k);
    for (std::size_t i = 0; i < Q.k; ++i) v[i] = omega.omega()[i] - step * g[i];
    SimplexWeights next = project_simplex(v);
    const double f_next = detail::quad_value(Q, next.omega());
    const double decrease = f - f_next;
    const bool stalled = decrease <= cfg.tol_objective * std::max(std::abs(f), 1.0);
    double movement = 0.0;
    for (std::size_t i = 0; i < Q.k; ++i)
      movement = std::max(movement, std::abs(next.omega()[i] - omega.omega()[i]));

    sol.iterations = it;
    if (!(f_next > f)) {
      omega = std::move(next);
      f = f_next;
    } else if (stalled) {
      // Overshoot without a certificate (bad step scale): report honestly.
      break;
    }
    if (stalled && movement <= cfg.tol_step && kkt <= cfg.tol_kkt) {
      sol.converged = true;
      break;
    }
    if (cfg.objective_trace) cfg.objective_trace->push_back(f);
  }

  sol.omega = omega;
  sol.objective = detail::quad_value(Q, omega.omega());
  sol.kkt_residual = kkt_residual(Q, omega);

  // Active-set polish: on flat faces the PG iterates identify the support
  // quickly but crawl along low-curvature directions. Solving the
  // equality-constrained KKT system on that face is exact; adopt it only if
  // it certifies at least as well as the PG endpoint.
  if (cfg.step_scale == 1.0) {
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < Q.k; ++i)
      if (omega.omega()[i] > 1e-9) support.push_back(i);
    while (support.size() >= 1) {
      const std::size_t s = support.size();
      // [ 2Q_SS  1 ] [w_S]   [0]
      // [ 1^T    0 ] [-mu] = [1]
      std::vector<std::vector<double>> a(s + 1, std::vector<double>(s + 1, 0.0));
      std::vector<double> rhs(s + 1, 0.0);
      for (std::size_t r = 0; r < s; ++r) {
        for (std::size_t c = 0; c < s; ++c) a[r][c] = 2.0 * Q.at(support[r], support[c]);
        a[r][s] = 1.0;
        a[s][r] = 1.0;
      }
      rhs[s] = 1.0;
      // Gaussian elimination with partial pivoting; bail out on a singular
      // face (duplicated columns) and keep the PG endpoint.
      bool singular = false;
      for (std::size_t c = 0; c <= s; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r <= s; ++r)
          if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        if (std::abs(a[piv][c]) < 1e-14) {
          singular = true;
          break;
        }
        std::swap(a[c], a[piv]);
        std::swap(rhs[c], rhs[piv]);
        for (std::size_t r = c + 1; r <= s; ++r) {
          const double f_el = a[r][c] / a[c][c];
          for (std::size_t cc = c; cc <= s; ++cc) a[r][cc] -= f_el * a[c][cc];
          rhs[r] -= f_el * rhs[c];
        }
      }
      if (singular) break;
      std::vector<double> x(s + 1);
      for (std::size_t c = s + 1; c-- > 0;) {
        double acc = rhs[c];
        for (std::size_t cc = c + 1; cc <= s; ++cc) acc -= a[c][cc] * x[cc];
        x[c] = acc / a[c][c];
      }
      std::size_t most_negative = s;
      double worst = -1e-12;
      for (std::size_t r = 0; r < s; ++r)
        if (x[r] < worst) {
          worst = x[r];
          most_negative = r;
        }
      if (most_negative < s) {
        support.erase(support.begin() + static_cast<std::ptrdiff_t>(most_negative));
        continue;
      }
      std::vector<double> w(Q.k, 0.0);
      for (std::size_t r = 0; r < s; ++r) w[support[r]] = std::max(x[r], 0.0);
      double sum = 0.0;
      for (double v : w) sum += v;
      if (sum <= 0.0) break;
      for (double& v : w) v /= sum;
      SimplexWeights polished(std::move(w));
      const double f_pol = detail::quad_value(Q, polished.omega());
      const double kkt_pol = kkt_residual(Q, polished);
      if (f_pol <= sol.objective + 1e-12 * std::max(1.0, std::abs(sol.objective)) &&
          kkt_pol <= sol.kkt_residual) {
        sol.omega = std::move(polished);
        sol.objective = f_pol;
        sol.kkt_residual = kkt_pol;
      }
      break;
    }
  }

  if (!sol.converged) sol.converged = sol.kkt_residual <= cfg.tol_kkt;
  return sol;
}

// Exhaustive lattice search over the simplex at the given resolution,
// independent of the solver path. Along the innermost line (moving lattice
// mass between the last two coordinates) the objective is a convex parabola
// in the integer step t, so its lattice minimum sits at the clamped rounding
// neighbors of the vertex; each line is minimized in closed form instead of
// scanned, with the identical result.
inline std::pair<SimplexWeights, double> grid_oracle(const GramMatrix& Q, double resolution) {
  if (Q.k > 4) throw Unsupported("grid_oracle: k must be <= 4");
  if (Q.k == 0) throw InvalidInput("grid_oracle: empty matrix");
  if (!(resolution >= 1e-3)) throw InvalidInput("grid_oracle: resolution must be >= 1e-3");
  const std::size_t k = Q.k;
  if (k == 1) return {SimplexWeights::vertex(1, 0), Q.at(0, 0)};

  const auto N = static_cast<std::size_t>(std::llround(1.0 / resolution));
  const double h = 1.0 / static_cast<double>(N);

  // Direction of the inner line: move h from coordinate k-1 to k-2.
  std::vector<double> u(k, 0.0);
  u[k - 2] = h;
  u[k - 1] = -h;
  const auto uqu = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) s += u[i] * Q.q[i * k + j] * u[j];
    return s;
  }();

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_idx(k, 0);
  std::vector<std::size_t> outer(k >= 2 ? k - 2 : 0, 0);
  std::vector<double> w0(k, 0.0);

  // Enumerate the first k-2 coordinates, minimize over the last two exactly.
  auto sweep = [&](std::size_t used) {
    const std::size_t rem = N - used;
    for (std::size_t i = 0; i + 2 < k; ++i) w0[i] = static_cast<double>(outer[i]) * h;
    w0[k - 2] = 0.0;
    w0[k - 1] = static_cast<double>(rem) * h;

    const double f0 = detail::quad_value(Q, w0);
    double lin = 0.0;  // f(t) = f0 + 2(u.Qw0) t + (u.Qu) t^2
    {
      const std::vector<double> qw = detail::gram_times(Q, w0);
      for (std::size_t i = 0; i < k; ++i) lin += u[i] * qw[i];
    }
    lin *= 2.0;

    std::size_t candidates[4];
    std::size_t n_cand = 0;
    candidates[n_cand++] = 0;
    candidates[n_cand++] = rem;
    if (uqu > 0.0) {
      const double t_star = -lin / (2.0 * uqu);
      if (t_star > 0.0 && t_star < static_cast<double>(rem)) {
        const auto lo = static_cast<std::size_t>(t_star);
        candidates[n_cand++] = lo;
        if (lo + 1 <= rem) candidates[n_cand++] = lo + 1;
      }
    }
    for (std::size_t ci = 0; ci < n_cand; ++ci) {
      const std::size_t t = candidates[ci];
      const double td = static_cast<double>(t);
      const double f = f0 + td * (lin + td * uqu);
      if (f < best) {
        best = f;
        for (std::size_t i = 0; i + 2 < k; ++i) best_idx[i] = outer[i];
        best_idx[k - 2] = t;
        best_idx[k - 1] = rem - t;
      }
    }
  };

  if (k == 2) {
    sweep(0);
  } else if (k == 3) {
    for (outer[0] = 0; outer[0] <= N; ++outer[0]) sweep(outer[0]);
  } else {
    for (outer[0] = 0; outer[0] <= N; ++outer[0])
      for (outer[1] = 0; outer[1] <= N - outer[0]; ++outer[1]) sweep(outer[0] + outer[1]);
  }

  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = static_cast<double>(best_idx[i]) * h;
  // Exact lattice weights can drift from 1 by rounding; normalize.
  double sum = 0.0;
  for (double x : w) sum += x;
  for (double& x : w) x /= sum;
  SimplexWeights omega(std::move(w));
  return {omega, detail::quad_value(Q, omega.omega())};
}

}  // namespace xagg
