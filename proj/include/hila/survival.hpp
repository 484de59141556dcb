#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hila/diffcore/adam.hpp"

namespace hila::survival {

using diff::Matrix;
using diff::Parameter;
using diff::Var;

inline constexpr double kLogClamp = 1e-12;

/// Mean-pooled tokens -> linear (d -> T) -> sigmoid hazards.
struct SurvivalHead {
  Parameter weight;
  Parameter bias;

  static SurvivalHead init(std::size_t d, std::size_t bins, std::uint64_t seed) {
    if (bins < 2) throw ConfigError("survival head needs T >= 2 bins");
    return {diff::init_uniform("head/weight", d, bins, d, seed), diff::init_uniform("head/bias", 1, bins, d, seed)};
  }

  std::size_t bins() const { return weight.value().cols(); }
  std::vector<Parameter*> all() { return {&weight, &bias}; }
};

struct LossConfig {
  double lambda = 0.01;  // MCL weight
};

/// Row-concatenation of selected patch and region tokens.
inline Var fuse(const Var& selected_patch, const Var& selected_region) {
  if (selected_patch.cols() != selected_region.cols()) {
    throw DimensionError("fuse: patch d=" + std::to_string(selected_patch.cols()) + " vs region d=" +
                         std::to_string(selected_region.cols()));
  }
  return diff::concat_rows(selected_patch, selected_region);
}

/// Hazards from an already pooled 1 x d vector.
inline Var hazards_from_pooled(const Var& pooled, const SurvivalHead& head) {
  return diff::sigmoid(diff::linear(pooled, head.weight.var, head.bias.var));
}

/// h(t) = sigmoid(mean_rows(H_F) W + b), a 1 x T row.
inline Var hazards(const Var& fused, const SurvivalHead& head) {
  if (fused.rows() == 0) throw DegenerateError("hazards of an empty token set");
  return hazards_from_pooled(diff::mean_rows(fused), head);
}

/// S(t) = prod_{s <= t} (1 - h(s)), a 1 x T row.
inline Var survival_curve(const Var& h) { return diff::cumprod_cols(diff::one_minus(h)); }

inline std::vector<double> survival_curve(std::span<const double> h) {
  std::vector<double> s(h.size());
  double p = 1.0;
  for (std::size_t t = 0; t < h.size(); ++t) s[t] = (p *= 1.0 - h[t]);
  return s;
}

/// Censored (c = 1): -log S(t). Event (c = 0): -log S(t - 1) - log h(t),
/// with S(0) = 1 and log arguments clamped at 1e-12. `bin` is 1-based.
inline Var nll_loss(const Var& h, const Var& s, int censor, int bin) {
  const auto T = static_cast<int>(h.cols());
  if (bin < 1 || bin > T) throw ConfigError("time bin " + std::to_string(bin) + " outside [1, " + std::to_string(T) + "]");
  const auto t = static_cast<std::size_t>(bin - 1);
  const auto neg_log = [](const Var& x) { return diff::neg(diff::log(diff::clamp_min(x, kLogClamp))); };
  if (censor == 1) return neg_log(diff::element(s, 0, t));
  Var loss = neg_log(diff::element(h, 0, t));
  if (t > 0) loss = diff::add(loss, neg_log(diff::element(s, 0, t - 1)));
  return loss;
}

inline double nll_loss(std::span<const double> h, std::span<const double> s, int censor, int bin) {
  const auto T = static_cast<int>(h.size());
  if (bin < 1 || bin > T) throw ConfigError("time bin " + std::to_string(bin) + " outside [1, " + std::to_string(T) + "]");
  const auto t = static_cast<std::size_t>(bin - 1);
  const auto neg_log = [](double x) { return -std::log(std::max(x, kLogClamp)); };
  if (censor == 1) return neg_log(s[t]);
  return neg_log(h[t]) + (t > 0 ? neg_log(s[t - 1]) : 0.0);
}

/// Negative expected discrete survival, -sum_t S(t); higher means riskier.
inline double risk_score(std::span<const double> s) {
  double acc = 0.0;
  for (double x : s) acc += x;
  return -acc;
}

inline Var total_loss(const Var& survival_loss, const Var& mcl_loss, const LossConfig& cfg) {
  return diff::add(survival_loss, diff::scale(mcl_loss, cfg.lambda));
}

}  // namespace hila::survival
