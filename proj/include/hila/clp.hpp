#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hila/diffcore/adam.hpp"
#include "hila/opl.hpp"

namespace hila::clp {

using diff::Parameter;
using diff::Var;

/// Gate projection (2d -> d) and the two stream projections (d -> d), each with bias.
struct GateParams {
  Parameter gate_w, gate_b;
  Parameter patch_w, patch_b;
  Parameter region_w, region_b;

  static GateParams init(std::size_t d, std::uint64_t seed) {
    return {diff::init_uniform("clp/gate_w", 2 * d, d, 2 * d, seed),
            diff::init_uniform("clp/gate_b", 1, d, 2 * d, seed),
            diff::init_uniform("clp/patch_w", d, d, d, seed),
            diff::init_uniform("clp/patch_b", 1, d, d, seed),
            diff::init_uniform("clp/region_w", d, d, d, seed),
            diff::init_uniform("clp/region_b", 1, d, d, seed)};
  }

  std::vector<Parameter*> all() { return {&gate_w, &gate_b, &patch_w, &patch_b, &region_w, &region_b}; }
};

/// One-hot (M_R x k) matrix mapping each selected patch to its parent region.
inline Matrix pooling_matrix(std::span<const std::size_t> selected, std::span<const std::size_t> parent_region,
                             std::size_t n_regions) {
  Matrix a(n_regions, selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (selected[i] >= parent_region.size()) {
      throw DimensionError("selected patch " + std::to_string(selected[i]) + " has no parent entry");
    }
    const std::size_t region = parent_region[selected[i]];
    if (region >= n_regions) {
      throw DimensionError("parent region " + std::to_string(region) + " >= region count " +
                           std::to_string(n_regions));
    }
    a(region, i) = 1.0;
  }
  return a;
}

/// Row j = sum of the selected patch tokens whose parent is region j (zero if none).
inline Matrix pool_to_regions(const opl::SelectedTokens& selected, std::span<const std::size_t> parent_region,
                              std::size_t n_regions) {
  return diff::matmul(pooling_matrix(selected.indices, parent_region, n_regions), selected.tokens);
}

/// G = sigmoid([pooled, region] W_g + b_g);
/// out = G * tanh(pooled W_p + b_p) + (1 - G) * tanh(region W_r + b_r).
inline Var gate_fuse(const Var& pooled, const Var& region, const GateParams& p) {
  if (!pooled.value().same_shape(region.value())) {
    throw DimensionError("gate_fuse shape mismatch: pooled " + pooled.value().shape() + " vs region " +
                         region.value().shape());
  }
  const Var gate = diff::sigmoid(diff::linear(diff::concat_cols(pooled, region), p.gate_w.var, p.gate_b.var));
  const Var patch_stream = diff::tanh(diff::linear(pooled, p.patch_w.var, p.patch_b.var));
  const Var region_stream = diff::tanh(diff::linear(region, p.region_w.var, p.region_b.var));
  return diff::add(diff::mul(gate, patch_stream), diff::mul(diff::one_minus(gate), region_stream));
}

}  // namespace hila::clp
