#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "hila/diffcore/matrix.hpp"
#include "hila/embeddings/types.hpp"

namespace hila::opl {

struct SinkhornOptions {
  double epsilon = 0.1;
  double tol = 1e-6;
  int max_iters = 1000;
  /// Sweeps before switching to Newton steps on the column potential. Plain
  /// sweeps contract slowly when the optimal plan is nearly a permutation.
  int newton_after = 50;
};

/// Entropic transport problem between M tokens and N prompts.
struct TransportProblem {
  Matrix cost;  // M x N
  std::vector<double> u;
  std::vector<double> v;
  SinkhornOptions options;
};

struct TransportPlan {
  Matrix plan;
  double cost_value = 0.0;  // <plan, cost>
  bool converged = false;
  double residual = 0.0;  // max marginal violation at exit
  int iterations = 0;
};

/// Rows kept by select_top, in original order, with their values.
struct SelectedTokens {
  std::vector<std::size_t> indices;
  Matrix tokens;
};

struct MatchingResult {
  TransportPlan transport;
  Matrix probability;
  std::vector<double> score;
  std::vector<std::size_t> selected;
};

inline std::vector<double> uniform_marginal(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

/// C[m, n] = 1 - cos(token_m, prompt_n), clipped into [0, 2].
inline Matrix cost_matrix(const Matrix& tokens, const Matrix& prompts) {
  if (tokens.cols() != prompts.cols()) {
    throw DimensionError("cost_matrix: tokens d=" + std::to_string(tokens.cols()) + " vs prompts d=" +
                         std::to_string(prompts.cols()));
  }
  std::vector<double> tn(tokens.rows()), pn(prompts.rows());
  for (std::size_t m = 0; m < tokens.rows(); ++m) {
    tn[m] = diff::norm2(tokens.row(m));
    if (tn[m] == 0.0) throw DegenerateError("zero-norm token at index " + std::to_string(m));
  }
  for (std::size_t n = 0; n < prompts.rows(); ++n) {
    pn[n] = diff::norm2(prompts.row(n));
    if (pn[n] == 0.0) throw DegenerateError("zero-norm prompt at index " + std::to_string(n));
  }
  Matrix c(tokens.rows(), prompts.rows());
  for (std::size_t m = 0; m < tokens.rows(); ++m)
    for (std::size_t n = 0; n < prompts.rows(); ++n)
      c(m, n) = std::clamp(1.0 - diff::dot(tokens.row(m), prompts.row(n)) / (tn[m] * pn[n]), 0.0, 2.0);
  return c;
}

inline Matrix cost_matrix(const FeatureBag& bag, const PromptSet& prompts) {
  return cost_matrix(bag.tokens, prompts.prompts);
}

namespace detail {

inline double log_sum_exp(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

inline void validate_marginal(const std::vector<double>& w, std::size_t n, const char* name) {
  if (w.size() != n) throw DimensionError(std::string("marginal ") + name + " has wrong length");
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError(std::string("marginal ") + name + " must be nonnegative");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError(std::string("marginal ") + name + " must sum to 1");
}

}  // namespace detail

namespace detail {

/// Row potential that makes every row marginal exact for the given column potential.
inline void fit_rows(const Matrix& c, const std::vector<double>& log_u, const std::vector<double>& g, double eps,
                     std::vector<double>& f, std::vector<double>& buf) {
  const std::size_t M = c.rows(), N = c.cols();
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t n = 0; n < N; ++n) buf[n] = (g[n] - c(m, n)) / eps;
    f[m] = eps * (log_u[m] - log_sum_exp({buf.data(), N}));
  }
}

/// Semi-dual objective sum_m u_m f_m(g) + sum_n v_n g_n (concave in g).
inline double semi_dual(const std::vector<double>& u, const std::vector<double>& v, const std::vector<double>& f,
                        const std::vector<double>& g) {
  double j = 0.0;
  for (std::size_t m = 0; m < f.size(); ++m) j += u[m] * f[m];
  for (std::size_t n = 0; n < g.size(); ++n) j += v[n] * g[n];
  return j;
}

/// Solves A x = b for symmetric A by Gaussian elimination with partial
/// pivoting. Returns false when a pivot vanishes.
inline bool solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n, std::vector<double>& x) {
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i * n + k]) > std::abs(a[piv * n + k])) piv = i;
    if (!(std::abs(a[piv * n + k]) > 1e-300)) return false;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double l = a[i * n + k] / a[k * n + k];
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= l * a[k * n + j];
      b[i] -= l * b[k];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k * n + j] * x[j];
    x[k] = s / a[k * n + k];
  }
  return true;
}

}  // namespace detail

/// Log-domain Sinkhorn. Each sweep updates the column potential then the row
/// potential, so on exit the row marginals hold to rounding and convergence
/// is judged on the column marginals. After `newton_after` sweeps the column
/// potential is instead updated by damped Newton steps on the semi-dual (an
/// N x N solve), which has the same fixed point but converges quadratically.
/// A non-converged result is returned flagged, not thrown.
inline TransportPlan sinkhorn(const TransportProblem& prob) {
  const Matrix& c = prob.cost;
  const std::size_t M = c.rows(), N = c.cols();
  if (M == 0 || N == 0) throw DegenerateError("sinkhorn on empty cost matrix");
  detail::validate_marginal(prob.u, M, "u");
  detail::validate_marginal(prob.v, N, "v");
  const double eps = prob.options.epsilon;
  if (!(eps > 0.0)) throw ConfigError("sinkhorn epsilon must be > 0");

  std::vector<double> log_u(M), log_v(N);
  for (std::size_t m = 0; m < M; ++m) log_u[m] = std::log(prob.u[m]);
  for (std::size_t n = 0; n < N; ++n) log_v[n] = std::log(prob.v[n]);
  const bool strictly_positive = std::all_of(prob.u.begin(), prob.u.end(), [](double x) { return x > 0.0; }) &&
                                 std::all_of(prob.v.begin(), prob.v.end(), [](double x) { return x > 0.0; });

  std::vector<double> f(M, 0.0), g(N, 0.0), buf(std::max(M, N));
  const auto log_plan = [&](std::size_t m, std::size_t n) { return (f[m] + g[n] - c(m, n)) / eps; };
  const auto columns = [&] {
    std::vector<double> col(N, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n) col[n] += std::exp(log_plan(m, n));
    return col;
  };

  const auto sweep = [&] {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) buf[m] = (f[m] - c(m, n)) / eps;
      g[n] = prob.v[n] == 0.0 ? -std::numeric_limits<double>::infinity()
                              : eps * (log_v[n] - detail::log_sum_exp({buf.data(), M}));
    }
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t n = 0; n < N; ++n) buf[n] = (g[n] - c(m, n)) / eps;
      f[m] = prob.u[m] == 0.0 ? -std::numeric_limits<double>::infinity()
                              : eps * (log_u[m] - detail::log_sum_exp({buf.data(), N}));
    }
  };

  // One damped Newton step in g with the last coordinate held fixed (the
  // objective is invariant to a common shift). Returns false if it stalls.
  const auto newton = [&](const std::vector<double>& col) {
    const std::size_t k = N - 1;
    std::vector<double> hess(k * k, 0.0), rhs(k), step;
    for (std::size_t i = 0; i < k; ++i) {
      hess[i * k + i] = col[i];
      rhs[i] = eps * (prob.v[i] - col[i]);
    }
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t i = 0; i < k; ++i) {
        const double pi = std::exp(log_plan(m, i));
        for (std::size_t j = 0; j < k; ++j) hess[i * k + j] -= pi * std::exp(log_plan(m, j)) / prob.u[m];
      }
    }
    if (!detail::solve_dense(hess, rhs, k, step)) return false;
    double slope = 0.0;
    for (std::size_t i = 0; i < k; ++i) slope += (prob.v[i] - col[i]) * step[i];
    if (!(slope > 0.0)) return false;
    // Accept on sufficient ascent, or on a smaller gradient once the ascent
    // itself is below rounding.
    const auto grad_norm = [&](const std::vector<double>& cs) {
      double s = 0.0;
      for (std::size_t i = 0; i < N; ++i) s += (prob.v[i] - cs[i]) * (prob.v[i] - cs[i]);
      return std::sqrt(s);
    };
    const double base = detail::semi_dual(prob.u, prob.v, f, g);
    const double base_grad = grad_norm(col);
    const std::vector<double> g0 = g;
    for (double t = 1.0; t > 1e-10; t *= 0.5) {
      for (std::size_t i = 0; i < k; ++i) g[i] = g0[i] + t * step[i];
      detail::fit_rows(c, log_u, g, eps, f, buf);
      if (detail::semi_dual(prob.u, prob.v, f, g) >= base + 1e-4 * t * slope) return true;
      const bool below_rounding = t * slope < 1e-12 * (1.0 + std::abs(base));
      if (below_rounding && grad_norm(columns()) < (1.0 - 1e-4 * t) * base_grad) return true;
    }
    g = g0;
    detail::fit_rows(c, log_u, g, eps, f, buf);
    return false;
  };

  TransportPlan res;
  res.residual = std::numeric_limits<double>::infinity();
  bool use_newton = false;
  for (int it = 1; it <= prob.options.max_iters; ++it) {
    if (use_newton) {
      if (!newton(columns())) {
        use_newton = false;
        sweep();
      }
    } else {
      sweep();
    }
    const std::vector<double> col = columns();
    double resid = 0.0;
    for (std::size_t n = 0; n < N; ++n) resid = std::max(resid, std::abs(col[n] - prob.v[n]));
    res.iterations = it;
    res.residual = resid;
    if (resid <= prob.options.tol) {
      res.converged = true;
      break;
    }
    if (strictly_positive && N > 1 && prob.options.newton_after >= 0 && it >= prob.options.newton_after)
      use_newton = true;
  }

  res.plan = Matrix(M, N);
  double row_resid = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    double row = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      res.plan(m, n) = std::exp(log_plan(m, n));
      row += res.plan(m, n);
      res.cost_value += res.plan(m, n) * c(m, n);
    }
    row_resid = std::max(row_resid, std::abs(row - prob.u[m]));
  }
  res.residual = std::max(res.residual, row_resid);
  return res;
}

/// O'[m, n] = exp(1 - O[m, n]) / sum_m' exp(1 - O[m', n]).
inline Matrix matching_probability(const Matrix& plan) {
  Matrix shifted(plan.rows(), plan.cols());
  for (std::size_t i = 0; i < plan.size(); ++i) shifted.data()[i] = 1.0 - plan.data()[i];
  return diff::softmax_cols(shifted);
}

/// Row sums of the matching probability: one score per token.
inline std::vector<double> alignment_score(const Matrix& probability) {
  std::vector<double> s(probability.rows(), 0.0);
  for (std::size_t m = 0; m < probability.rows(); ++m)
    for (std::size_t n = 0; n < probability.cols(); ++n) s[m] += probability(m, n);
  return s;
}

inline std::size_t selection_size(std::size_t m, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw ConfigError("selection ratio r must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(m) * r));
  return std::clamp<std::size_t>(k, 1, m);
}

/// Indices of the ceil(M r) highest scores (ties to the lower index),
/// returned in ascending original order.
inline std::vector<std::size_t> top_indices(std::span<const double> score, double r) {
  const std::size_t k = selection_size(score.size(), r);
  std::vector<std::size_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline SelectedTokens select_top(const Matrix& tokens, std::span<const double> score, double r) {
  if (score.size() != tokens.rows()) {
    throw DimensionError("select_top: " + std::to_string(score.size()) + " scores for " +
                         std::to_string(tokens.rows()) + " tokens");
  }
  SelectedTokens s;
  s.indices = top_indices(score, r);
  s.tokens = tokens.gather_rows(s.indices);
  return s;
}

inline SelectedTokens select_top(const FeatureBag& bag, std::span<const double> score, double r) {
  return select_top(bag.tokens, score, r);
}

/// Full alignment for one bag: cost -> plan -> probability -> score -> top-r.
inline MatchingResult match(const Matrix& tokens, const Matrix& prompts, double r, const SinkhornOptions& opts) {
  TransportProblem prob{cost_matrix(tokens, prompts), uniform_marginal(tokens.rows()),
                        uniform_marginal(prompts.rows()), opts};
  MatchingResult res;
  res.transport = sinkhorn(prob);
  res.probability = matching_probability(res.transport.plan);
  res.score = alignment_score(res.probability);
  res.selected = top_indices(res.score, r);
  return res;
}

/// Mean cosine similarity of each token to the prompts (the non-transport scorer).
inline std::vector<double> cosine_score(const Matrix& tokens, const Matrix& prompts) {
  const Matrix c = cost_matrix(tokens, prompts);
  std::vector<double> s(tokens.rows(), 0.0);
  for (std::size_t m = 0; m < c.rows(); ++m) {
    for (std::size_t n = 0; n < c.cols(); ++n) s[m] += 1.0 - c(m, n);
    s[m] /= static_cast<double>(c.cols());
  }
  return s;
}

}  // namespace hila::opl
