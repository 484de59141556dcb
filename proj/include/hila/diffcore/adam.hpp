#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hila/diffcore/var.hpp"
#include "hila/random.hpp"

namespace hila::diff {

/// Named trainable tensor. The underlying leaf persists across steps; each
/// step builds a fresh graph on top of it.
struct Parameter {
  std::string name;
  Var var;

  Matrix& value() { return var.node().value; }
  const Matrix& value() const { return var.node().value; }
};

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], drawn from a stream keyed by
/// the parameter name so initialization is independent of construction order.
inline Parameter init_uniform(std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                              std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "init/" + name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.uniform(-bound, bound);
  return Parameter{std::move(name), leaf(std::move(m))};
}

inline void zero_grad(std::vector<Parameter*>& params) {
  for (auto* p : params) p->var.node().zero_grad();
}

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are keyed by parameter position, so
/// the parameter list passed to step() must be stable.
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  const AdamOptions& options() const { return opts_; }
  std::uint64_t step_count() const { return step_; }

  void step(std::vector<Parameter*>& params) {
    if (first_.empty()) {
      for (auto* p : params) {
        first_.emplace_back(p->value().rows(), p->value().cols());
        second_.emplace_back(p->value().rows(), p->value().cols());
      }
    }
    if (first_.size() != params.size()) throw DimensionError("Adam parameter list changed size");

    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix g = params[i]->var.grad();
      if (!g.same_shape(first_[i])) {
        throw DimensionError("Adam moment shape " + first_[i].shape() + " vs parameter " +
                             params[i]->name + " " + g.shape());
      }
      if (!g.all_finite()) throw DivergenceError("non-finite gradient for parameter " + params[i]->name);
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix g = params[i]->var.grad();
      auto& m = first_[i].data();
      auto& v = second_[i].data();
      auto& w = params[i]->value().data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = g.data()[j];
        m[j] = opts_.beta1 * m[j] + (1.0 - opts_.beta1) * gj;
        v[j] = opts_.beta2 * v[j] + (1.0 - opts_.beta2) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
      }
    }
  }

  const Matrix& first_moment(std::size_t i) const { return first_.at(i); }
  const Matrix& second_moment(std::size_t i) const { return second_.at(i); }

 private:
  AdamOptions opts_;
  std::uint64_t step_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace hila::diff
