#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hila/embeddings/types.hpp"
#include "hila/random.hpp"

namespace hila {

/// Shape and difficulty of a synthetic cohort. Defaults are the desk-scale
/// cohort used by the acceptance suite.
struct SynthSpec {
  std::size_t n_patients = 200;
  std::size_t n_regions = 8;
  std::size_t patches_per_region = 16;
  std::size_t d = 32;
  std::size_t n_prompts_patch = 4;
  std::size_t n_prompts_region = 4;
  double signal_fraction = 0.6;
  double noise_sigma = 0.5;
  double censor_rate = 0.3;
  std::uint64_t seed = 7;

  std::size_t n_patches() const { return n_regions * patches_per_region; }

  void validate() const {
    if (n_patients < 1 || n_regions < 1 || patches_per_region < 1 || d < 1 || n_prompts_patch < 1 ||
        n_prompts_region < 1) {
      throw ConfigError("synthetic spec counts must all be >= 1");
    }
    if (!(signal_fraction > 0.0 && signal_fraction <= 1.0)) throw ConfigError("signal_fraction must lie in (0, 1]");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(censor_rate >= 0.0 && censor_rate < 1.0)) throw ConfigError("censor_rate must lie in [0, 1)");
    if (d < n_prompts_patch + n_prompts_region + 2) {
      throw ConfigError("d must exceed the total prompt count by at least 2 (risk direction plus background)");
    }
  }
};

/// Generator output plus the planted ground truth.
struct SyntheticCohort {
  Cohort cohort;
  std::vector<double> planted_risk;
  /// Per patient, per patch token: drawn near a prompt direction.
  std::vector<std::vector<bool>> patch_signal;
  std::vector<std::vector<bool>> region_signal;
  /// Per patient (M_R x d): region token minus the mean of its child patches.
  std::vector<Matrix> region_component;
  /// Unit direction along which signal tokens encode risk; orthogonal to every prompt.
  std::vector<double> risk_direction;
};

namespace synth_constants {
inline constexpr double prompt_scale = 3.0;      // signal token offset along its prompt
inline constexpr double risk_scale = 1.0;        // risk coordinate gain along the risk direction
inline constexpr double background_scale = 1.5;  // background spread, prompt-orthogonal
inline constexpr double confounder_scale = 2.0;  // per-patient nuisance shift of background tokens
inline constexpr double base_time = 24.0;        // months at zero risk
inline constexpr double time_gain = 1.0;
}  // namespace synth_constants

namespace detail {

inline std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double n = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n = diff::norm2(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

/// Removes components along each (orthonormal) basis vector.
inline void project_out(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    const double c = diff::dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
  }
}

inline std::vector<std::size_t> choose_subset(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Builds a cohort with a recoverable signal: a `signal_fraction` of tokens sit
/// near prompt directions and carry the patient's risk along a prompt-orthogonal
/// direction; the remaining tokens are prompt-orthogonal background shifted by a
/// per-patient confounder along that same direction. Event times fall
/// monotonically with risk before the log-normal time noise.
inline SyntheticCohort generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  namespace k = synth_constants;
  const std::size_t d = spec.d;
  const std::size_t mp = spec.n_patches();
  const std::size_t mr = spec.n_regions;

  Rng prompt_rng = Rng::stream(spec.seed, "synth/prompts");
  Rng patient_rng = Rng::stream(spec.seed, "synth/patients");

  SyntheticCohort out;
  Cohort& c = out.cohort;
  c.patch_prompts = {Level::patch, Matrix(spec.n_prompts_patch, d)};
  c.region_prompts = {Level::region, Matrix(spec.n_prompts_region, d)};
  std::vector<std::vector<double>> patch_prompts, region_prompts;
  for (std::size_t i = 0; i < spec.n_prompts_patch; ++i) {
    patch_prompts.push_back(detail::random_unit(prompt_rng, d));
    std::copy(patch_prompts.back().begin(), patch_prompts.back().end(), c.patch_prompts.prompts.row(i).begin());
  }
  for (std::size_t i = 0; i < spec.n_prompts_region; ++i) {
    region_prompts.push_back(detail::random_unit(prompt_rng, d));
    std::copy(region_prompts.back().begin(), region_prompts.back().end(), c.region_prompts.prompts.row(i).begin());
  }

  // Orthonormal basis of the joint prompt span (Gram-Schmidt).
  std::vector<std::vector<double>> prompt_basis;
  for (const auto* group : {&patch_prompts, &region_prompts}) {
    for (auto v : *group) {
      detail::project_out(v, prompt_basis);
      detail::project_out(v, prompt_basis);
      const double n = diff::norm2(v);
      if (n > 1e-9) {
        for (double& x : v) x /= n;
        prompt_basis.push_back(std::move(v));
      }
    }
  }
  std::vector<double> w;
  do {
    w = detail::random_unit(prompt_rng, d);
    detail::project_out(w, prompt_basis);
    detail::project_out(w, prompt_basis);
  } while (diff::norm2(w) < 1e-6);
  {
    const double n = diff::norm2(w);
    for (double& x : w) x /= n;
  }
  out.risk_direction = w;
  auto background_basis = prompt_basis;
  background_basis.push_back(w);

  const std::size_t n_signal_patch = std::min(mp, static_cast<std::size_t>(std::ceil(mp * spec.signal_fraction)));
  const std::size_t n_signal_region = std::min(mr, static_cast<std::size_t>(std::ceil(mr * spec.signal_fraction)));

  for (std::size_t n = 0; n < spec.n_patients; ++n) {
    const double risk = patient_rng.normal();
    const double confounder = k::confounder_scale * patient_rng.normal();

    PatientRecord p;
    p.patient_id = "P" + std::to_string(n);
    p.patch_bag = {Level::patch, Matrix(mp, d), std::vector<std::size_t>(mp)};
    p.region_bag = {Level::region, Matrix(mr, d), {}};
    for (std::size_t i = 0; i < mp; ++i) p.patch_bag.parent_region[i] = i / spec.patches_per_region;

    std::vector<bool> sig(mp, false);
    for (auto i : detail::choose_subset(patient_rng, mp, n_signal_patch)) sig[i] = true;
    std::size_t next_prompt = 0;
    for (std::size_t i = 0; i < mp; ++i) {
      auto row = p.patch_bag.tokens.row(i);
      if (sig[i]) {
        const auto& pr = patch_prompts[next_prompt++ % patch_prompts.size()];
        for (std::size_t j = 0; j < d; ++j) {
          row[j] = k::prompt_scale * pr[j] + k::risk_scale * risk * w[j];
        }
        if (spec.noise_sigma > 0.0)
          for (std::size_t j = 0; j < d; ++j) row[j] += spec.noise_sigma * patient_rng.normal();
      } else {
        std::vector<double> g(d);
        for (double& x : g) x = patient_rng.normal();
        detail::project_out(g, background_basis);
        for (std::size_t j = 0; j < d; ++j) row[j] = k::background_scale * g[j] + confounder * w[j];
      }
    }

    std::vector<bool> rsig(mr, false);
    for (auto j : detail::choose_subset(patient_rng, mr, n_signal_region)) rsig[j] = true;
    Matrix component(mr, d);
    std::size_t next_region_prompt = 0;
    for (std::size_t r = 0; r < mr; ++r) {
      if (!rsig[r]) continue;
      const auto& pr = region_prompts[next_region_prompt++ % region_prompts.size()];
      for (std::size_t j = 0; j < d; ++j) {
        component(r, j) = k::prompt_scale * pr[j] + k::risk_scale * risk * w[j];
      }
      if (spec.noise_sigma > 0.0)
        for (std::size_t j = 0; j < d; ++j) component(r, j) += spec.noise_sigma * patient_rng.normal();
    }
    for (std::size_t r = 0; r < mr; ++r) {
      auto row = p.region_bag.tokens.row(r);
      std::size_t count = 0;
      for (std::size_t i = 0; i < mp; ++i) {
        if (p.patch_bag.parent_region[i] != r) continue;
        ++count;
        const auto src = p.patch_bag.tokens.row(i);
        for (std::size_t j = 0; j < d; ++j) row[j] += src[j];
      }
      for (std::size_t j = 0; j < d; ++j) row[j] = row[j] / static_cast<double>(count) + component(r, j);
    }

    const double time_noise = patient_rng.normal();
    const double event_time = k::base_time * std::exp(-k::time_gain * risk + spec.noise_sigma * time_noise);
    const bool censored = patient_rng.uniform() < spec.censor_rate;
    const double censor_draw = patient_rng.uniform_open();
    p.censor = censored ? 1 : 0;
    p.time = censored ? censor_draw * event_time : event_time;

    out.planted_risk.push_back(risk);
    out.patch_signal.push_back(std::move(sig));
    out.region_signal.push_back(std::move(rsig));
    out.region_component.push_back(std::move(component));
    c.patients.push_back(std::move(p));
  }
  validate_cohort(c);
  return out;
}

}  // namespace hila
