#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hila/embeddings/discretize.hpp"
#include "hila/harness/model.hpp"
#include "hila/log.hpp"
#include "hila/metrics.hpp"
#include "hila/random.hpp"

namespace hila::harness {

/// Per-patient patch selections, indexed like cohort.patients.
using PatchSelections = std::vector<std::vector<std::size_t>>;

inline PatchSelections precompute_patch_selections(const Cohort& cohort, const TrainConfig& cfg) {
  PatchSelections out;
  out.reserve(cohort.patients.size());
  for (const auto& p : cohort.patients) out.push_back(select_patches(p.patch_bag, cohort, cfg));
  return out;
}

struct TrainedFold {
  Model model;
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::uint64_t steps = 0;
};

/// Mutable training state that persists across steps.
struct TrainingState {
  diff::Adam optimizer;
  mcl::MemoryQueue patch_queue;
  mcl::MemoryQueue region_queue;
};

/// One optimizer step on one patient (batch size 1). Returns the total loss.
inline double train_step(Model& model, TrainingState& state, const Cohort& cohort, std::size_t patient,
                         int time_bin, std::span<const std::size_t> patch_selection, const TrainConfig& cfg) {
  const auto& rec = cohort.patients[patient];
  auto params = model.parameters();
  diff::zero_grad(params);

  ForwardResult fw = model.forward(rec, cohort, patch_selection);
  Var loss = survival::nll_loss(fw.hazards, fw.survival, rec.censor, time_bin);
  if (fw.f_patch && fw.f_region) {
    const Var contrastive = mcl::mcl_loss(*fw.f_patch, *fw.f_region, state.patch_queue, state.region_queue, cfg.temperature);
    loss = survival::total_loss(loss, contrastive, {cfg.lambda});
  }
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw DivergenceError("non-finite loss at optimizer step " + std::to_string(state.optimizer.step_count() + 1) +
                          " (patient " + rec.patient_id + ")");
  }
  diff::backward(loss);
  state.optimizer.step(params);
  if (fw.f_patch && fw.f_region) {
    state.patch_queue.push(*fw.f_patch);
    state.region_queue.push(*fw.f_region);
  }
  return value;
}

/// Trains on `train` (indices into cohort.patients) with the given per-patient
/// time bins. Patient order is reshuffled each epoch from a dedicated stream.
inline TrainedFold train_fold(const Cohort& cohort, std::span<const std::size_t> train, std::span<const int> bins,
                              const PatchSelections& selections, const TrainConfig& cfg, int fold = 0) {
  cfg.validate();
  if (train.empty()) throw DegenerateError("training split is empty");
  TrainedFold out{Model(cohort.dim(), cfg), {}, 0};
  TrainingState state{diff::Adam({cfg.lr}), mcl::MemoryQueue::for_length(cfg.queue_length),
                      mcl::MemoryQueue::for_length(cfg.queue_length)};
  Rng shuffle = Rng::stream(cfg.seed, "shuffle/fold" + std::to_string(fold));
  std::vector<std::size_t> order(train.begin(), train.end());
  static const std::vector<std::size_t> kNoSelection;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.reset_queues_each_epoch) {
      state.patch_queue.clear();
      state.region_queue.clear();
    }
    shuffle.shuffle(order);
    double sum = 0.0;
    for (std::size_t idx : order) {
      const auto& sel = selections.empty() ? kNoSelection : selections[idx];
      sum += train_step(out.model, state, cohort, idx, bins[idx], sel, cfg);
    }
    out.epoch_loss.push_back(sum / static_cast<double>(order.size()));
  }
  out.steps = state.optimizer.step_count();
  return out;
}

/// Convenience form: trains on every patient using their stored time_bin.
inline TrainedFold train_fold(const Cohort& cohort, const TrainConfig& cfg) {
  validate_cohort(cohort);
  std::vector<std::size_t> all(cohort.patients.size());
  std::vector<int> bins(cohort.patients.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = i;
    bins[i] = cohort.patients[i].time_bin;
    if (bins[i] < 1 || bins[i] > cfg.bins) {
      throw ConfigError("patient " + cohort.patients[i].patient_id + " is not discretized into [1, " +
                        std::to_string(cfg.bins) + "]");
    }
  }
  const PatchSelections sel = cfg.switches().needs_prompts() ? precompute_patch_selections(cohort, cfg) : PatchSelections{};
  return train_fold(cohort, all, bins, sel, cfg, 0);
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Seeded patient-level split, stratified by censor status: each stratum is
/// shuffled and dealt round-robin, events first.
inline std::vector<std::vector<std::size_t>> make_folds(const Cohort& cohort, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds");
  std::vector<std::size_t> events, censored;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) (cohort.patients[i].censor == 0 ? events : censored).push_back(i);
  Rng rng = Rng::stream(seed, "split");
  rng.shuffle(events);
  rng.shuffle(censored);
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t pos = 0;
  for (const auto* group : {&events, &censored})
    for (std::size_t i : *group) folds[pos++ % folds.size()].push_back(i);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

struct PatientRisk {
  std::string patient_id;
  double time = 0.0;
  int censor = 0;
  double risk = 0.0;
};

struct FoldReport {
  int fold = 0;
  std::optional<double> c_index;  // empty when the held-out fold has no comparable pair
  std::vector<double> epoch_loss;
  std::uint64_t steps = 0;
  std::vector<PatientRisk> risks;
  metrics::KMCurve km_low, km_high;
  long n_low = 0, n_high = 0;
  std::optional<metrics::LogRankResult> logrank;
  std::vector<double> bin_edges;
};

struct Summary {
  std::optional<double> mean;
  std::optional<double> std;
  std::size_t folds_used = 0;

  /// "0.659 ± 0.044"
  std::string formatted() const {
    if (!mean) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f \xC2\xB1 %.3f", *mean, std.value_or(0.0));
    return buf;
  }
};

struct CrossValidation {
  Variant variant = Variant::G;
  Switches switches;
  std::vector<FoldReport> folds;
  Summary summary;
};

/// Mean and sample standard deviation of the folds that produced a C-index.
inline Summary summarize(const std::vector<FoldReport>& folds) {
  std::vector<double> v;
  for (const auto& f : folds)
    if (f.c_index) v.push_back(*f.c_index);
  Summary s;
  s.folds_used = v.size();
  if (v.empty()) return s;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  s.mean = m;
  s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

inline FoldReport evaluate_fold(const Model& model, const Cohort& cohort, std::span<const std::size_t> test,
                                const PatchSelections& selections) {
  static const std::vector<std::size_t> kNoSelection;
  FoldReport rep;
  std::vector<metrics::RiskedPatient> rp;
  for (std::size_t i : test) {
    const auto& p = cohort.patients[i];
    const double risk = model.risk(p, cohort, selections.empty() ? kNoSelection : selections[i]);
    rep.risks.push_back({p.patient_id, p.time, p.censor, risk});
    rp.push_back({risk, p.time, p.censor});
  }
  try {
    rep.c_index = metrics::concordance_index(rp);
  } catch (const UndefinedMetricError&) {
    rep.c_index.reset();
  }
  if (rp.size() >= 2) {
    const auto strata = metrics::stratify_median(rp);
    const auto low = metrics::gather(rp, strata.low);
    const auto high = metrics::gather(rp, strata.high);
    rep.n_low = static_cast<long>(low.size());
    rep.n_high = static_cast<long>(high.size());
    if (!low.empty()) rep.km_low = metrics::kaplan_meier(low);
    if (!high.empty()) rep.km_high = metrics::kaplan_meier(high);
    try {
      rep.logrank = metrics::logrank_test(low, high);
    } catch (const DegenerateError& e) {
      log::warn(std::string("log-rank test skipped: ") + e.what());
    }
  }
  return rep;
}

/// k-fold cross-validation of one configuration. With `only_fold` set, just
/// that fold is trained and evaluated (a single train/test split).
inline CrossValidation cross_validate(const Cohort& cohort, const TrainConfig& cfg, std::optional<int> only_fold = {}) {
  cfg.validate();
  validate_cohort(cohort);
  const Switches sw = cfg.switches();
  if (sw.needs_prompts() && cohort.patch_prompts.empty()) throw ConfigError("variant needs patch prompts");
  if (sw.region_tokens && cohort.region_prompts.empty()) throw ConfigError("variant needs region prompts");
  const auto n = cohort.patients.size();
  if (n < static_cast<std::size_t>(5 * cfg.folds)) {
    log::warn("cohort of " + std::to_string(n) + " patients is small for " + std::to_string(cfg.folds) + "-fold CV");
  }

  if (only_fold && (*only_fold < 0 || *only_fold >= cfg.folds)) throw ConfigError("fold index out of range");
  const auto folds = make_folds(cohort, cfg.folds, cfg.seed);
  const PatchSelections selections = sw.needs_prompts() ? precompute_patch_selections(cohort, cfg) : PatchSelections{};

  CrossValidation cv;
  cv.variant = cfg.variant;
  cv.switches = sw;
  for (int k = 0; k < cfg.folds; ++k) {
    if (only_fold && *only_fold != k) continue;
    std::vector<std::size_t> train;
    for (int j = 0; j < cfg.folds; ++j)
      if (j != k) train.insert(train.end(), folds[static_cast<std::size_t>(j)].begin(), folds[static_cast<std::size_t>(j)].end());
    std::sort(train.begin(), train.end());

    std::vector<PatientRecord> train_records;
    for (std::size_t i : train) train_records.push_back(cohort.patients[i]);
    const auto edges = quantile_edges(train_records, cfg.bins);
    std::vector<int> bins(n);
    for (std::size_t i = 0; i < n; ++i) bins[i] = time_bin(edges, cohort.patients[i].time);

    TrainedFold trained = train_fold(cohort, train, bins, selections, cfg, k);
    FoldReport rep = evaluate_fold(trained.model, cohort, folds[static_cast<std::size_t>(k)], selections);
    rep.fold = k;
    rep.epoch_loss = std::move(trained.epoch_loss);
    rep.steps = trained.steps;
    rep.bin_edges = edges;
    if (!rep.c_index) log::warn("fold " + std::to_string(k) + " has no comparable pairs; excluded from the mean");
    cv.folds.push_back(std::move(rep));
  }
  cv.summary = summarize(cv.folds);
  return cv;
}

/// Cross-validates each requested variant with otherwise identical settings.
inline std::vector<CrossValidation> run_ablation(const Cohort& cohort, const TrainConfig& cfg,
                                                 const std::vector<Variant>& variants = all_variants()) {
  std::vector<CrossValidation> out;
  for (Variant v : variants) {
    TrainConfig c = cfg;
    c.variant = v;
    c.region_tokens.reset();
    c.cross_level.reset();
    c.contrastive.reset();
    out.push_back(cross_validate(cohort, c));
  }
  return out;
}

}  // namespace hila::harness
