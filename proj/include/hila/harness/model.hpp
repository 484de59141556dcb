#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hila/clp.hpp"
#include "hila/embeddings/types.hpp"
#include "hila/harness/config.hpp"
#include "hila/mcl.hpp"
#include "hila/opl.hpp"
#include "hila/survival.hpp"

namespace hila::harness {

using diff::Parameter;
using diff::Var;

/// Gated attention pooling over a bag (the variant-A baseline):
/// a = softmax_m( (tanh(H V) * sigmoid(H U)) w ), pooled = a^T H.
struct AttentionPool {
  Parameter v_w, v_b, u_w, u_b, w;

  static AttentionPool init(std::size_t d, std::size_t hidden, std::uint64_t seed) {
    return {diff::init_uniform("attn/v_w", d, hidden, d, seed), diff::init_uniform("attn/v_b", 1, hidden, d, seed),
            diff::init_uniform("attn/u_w", d, hidden, d, seed), diff::init_uniform("attn/u_b", 1, hidden, d, seed),
            diff::init_uniform("attn/w", hidden, 1, hidden, seed)};
  }

  std::vector<Parameter*> all() { return {&v_w, &v_b, &u_w, &u_b, &w}; }

  Var pool(const Var& tokens) const {
    const Var content = diff::tanh(diff::linear(tokens, v_w.var, v_b.var));
    const Var gate = diff::sigmoid(diff::linear(tokens, u_w.var, u_b.var));
    const Var weights = diff::softmax_cols(diff::matmul(diff::mul(content, gate), w.var));  // M x 1
    return diff::matmul(diff::transpose(weights), tokens);
  }
};

/// Patch-level token selection for the variant's scorer. Depends only on the
/// (fixed) patch bag and prompts, so it can be computed once per patient.
inline std::vector<std::size_t> select_patches(const FeatureBag& bag, const Cohort& cohort, const TrainConfig& cfg) {
  const Switches sw = cfg.switches();
  switch (sw.patch_scorer) {
    case PatchScorer::none: return {};
    case PatchScorer::single_cosine: {
      const Matrix& prompts = cohort.patch_prompts.prompts;
      Matrix single(1, prompts.cols());
      for (std::size_t n = 0; n < prompts.rows(); ++n)
        for (std::size_t j = 0; j < prompts.cols(); ++j) single(0, j) += prompts(n, j) / static_cast<double>(prompts.rows());
      return opl::top_indices(opl::cosine_score(bag.tokens, single), cfg.r);
    }
    case PatchScorer::multi_cosine:
      return opl::top_indices(opl::cosine_score(bag.tokens, cohort.patch_prompts.prompts), cfg.r);
    case PatchScorer::transport:
      return opl::match(bag.tokens, cohort.patch_prompts.prompts, cfg.r, cfg.sinkhorn).selected;
  }
  return {};
}

struct ForwardResult {
  Var hazards;   // 1 x T
  Var survival;  // 1 x T
  std::optional<mcl::Prototype> f_patch;
  std::optional<mcl::Prototype> f_region;
  std::vector<std::size_t> region_selected;
  std::size_t fused_rows = 0;
};

/// Trainable state for one variant: survival head plus whichever of the
/// gate and attention pool the switches require.
class Model {
 public:
  Model(std::size_t d, const TrainConfig& cfg)
      : cfg_(cfg), switches_(cfg.switches()), head_(survival::SurvivalHead::init(d, static_cast<std::size_t>(cfg.bins), cfg.seed)) {
    if (switches_.attention_pool()) attention_ = AttentionPool::init(d, cfg.attention_dim, cfg.seed);
    if (switches_.cross_level) gate_ = clp::GateParams::init(d, cfg.seed);
  }

  // Parameters are shared graph leaves; a copy would alias them.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const Switches& switches() const { return switches_; }
  const survival::SurvivalHead& head() const { return head_; }
  const std::optional<clp::GateParams>& gate() const { return gate_; }

  /// Stable order: head, then gate, then attention.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out = head_.all();
    if (gate_) for (auto* p : gate_->all()) out.push_back(p);
    if (attention_) for (auto* p : attention_->all()) out.push_back(p);
    return out;
  }

  ForwardResult forward(const PatientRecord& patient, const Cohort& cohort,
                        std::span<const std::size_t> patch_selection) const {
    ForwardResult out;
    if (switches_.attention_pool()) {
      const Var pooled = attention_->pool(diff::constant(patient.patch_bag.tokens));
      out.hazards = survival::hazards_from_pooled(pooled, head_);
      out.survival = survival::survival_curve(out.hazards);
      out.fused_rows = 1;
      return out;
    }

    const opl::SelectedTokens patch_sel{std::vector<std::size_t>(patch_selection.begin(), patch_selection.end()),
                                        patient.patch_bag.tokens.gather_rows(patch_selection)};
    const Var sel_patch = diff::constant(patch_sel.tokens);
    Var fused = sel_patch;
    if (switches_.region_tokens) {
      Var region = diff::constant(patient.region_bag.tokens);
      if (switches_.cross_level) {
        const Matrix pooled = clp::pool_to_regions(patch_sel, patient.patch_bag.parent_region, patient.region_bag.size());
        region = clp::gate_fuse(diff::constant(pooled), region, *gate_);
      }
      out.region_selected = opl::match(region.value(), cohort.region_prompts.prompts, cfg_.r, cfg_.sinkhorn).selected;
      const Var sel_region = diff::gather_rows(region, out.region_selected);
      fused = survival::fuse(sel_patch, sel_region);
      if (switches_.contrastive) {
        out.f_patch = mcl::prototype(sel_patch, patient.patient_id);
        out.f_region = mcl::prototype(sel_region, patient.patient_id);
      }
    }
    out.fused_rows = fused.rows();
    out.hazards = survival::hazards(fused, head_);
    out.survival = survival::survival_curve(out.hazards);
    return out;
  }

  /// Risk score for reporting (negative expected discrete survival).
  double risk(const PatientRecord& patient, const Cohort& cohort, std::span<const std::size_t> patch_selection) const {
    return survival::risk_score(forward(patient, cohort, patch_selection).survival.value().data());
  }

 private:
  TrainConfig cfg_;
  Switches switches_;
  survival::SurvivalHead head_;
  std::optional<clp::GateParams> gate_;
  std::optional<AttentionPool> attention_;
};

}  // namespace hila::harness
