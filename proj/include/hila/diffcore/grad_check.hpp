#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hila/diffcore/adam.hpp"

namespace hila::diff {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of a scalar computation with central
/// differences. `f` must rebuild its graph from the current parameter values
/// on every call. Error per coordinate is |analytic - numeric| / max(1, |analytic|).
inline GradCheckResult grad_check(const std::function<Var()>& f, std::vector<Parameter*> params,
                                  double h = 1e-5) {
  if (!(h > 0.0 && h <= 1e-3)) throw ConfigError("grad_check step must lie in (0, 1e-3]");

  zero_grad(params);
  backward(f());
  std::vector<Matrix> analytic;
  for (auto* p : params) analytic.push_back(p->var.grad());

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& w = params[pi]->value().data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double orig = w[j];
      w[j] = orig + h;
      const double up = f().item();
      w[j] = orig - h;
      const double down = f().item();
      w[j] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw DomainError("non-finite value at perturbed point of " + params[pi]->name);
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi].data()[j];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++res.coordinates;
      if (err >= res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_parameter = params[pi]->name;
        res.worst_index = j;
      }
    }
  }
  zero_grad(params);
  return res;
}

}  // namespace hila::diff
