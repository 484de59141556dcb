#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hila/diffcore/matrix.hpp"
#include "hila/error.hpp"

namespace hila {

using diff::Matrix;

enum class Level { patch, region };

inline const char* to_string(Level l) { return l == Level::patch ? "patch" : "region"; }

/// Visual tokens of one patient at one hierarchy level (M x d).
struct FeatureBag {
  Level level = Level::patch;
  Matrix tokens;
  /// Patch level only: region index of every patch row.
  std::vector<std::size_t> parent_region;

  std::size_t size() const { return tokens.rows(); }
  std::size_t dim() const { return tokens.cols(); }
};

/// Encoded prompt vectors for one level (N x d).
struct PromptSet {
  Level level = Level::patch;
  Matrix prompts;

  std::size_t size() const { return prompts.rows(); }
  std::size_t dim() const { return prompts.cols(); }
  bool empty() const { return prompts.rows() == 0; }
};

/// censor: 0 = event observed, 1 = right-censored.
struct PatientRecord {
  std::string patient_id;
  int censor = 0;
  double time = 0.0;
  int time_bin = 0;  // 1..T once discretized
  FeatureBag patch_bag{Level::patch, {}, {}};
  FeatureBag region_bag{Level::region, {}, {}};
};

struct Cohort {
  std::vector<PatientRecord> patients;
  PromptSet patch_prompts{Level::patch, {}};
  PromptSet region_prompts{Level::region, {}};
  /// Quantile edges used by discretize_times (T + 1 values); empty until set.
  std::vector<double> bin_edges;

  std::size_t dim() const { return patients.empty() ? 0 : patients.front().patch_bag.dim(); }
  bool has_prompts() const { return !patch_prompts.empty() && !region_prompts.empty(); }
};

namespace detail {
inline void check_finite(const Matrix& m, const std::string& what) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      throw DomainError("non-finite embedding entry in " + what + " at (" + std::to_string(i / m.cols()) +
                        ", " + std::to_string(i % m.cols()) + ")");
    }
  }
}
}  // namespace detail

/// Structural checks shared by the loader and the generator.
inline void validate_patient(const PatientRecord& p) {
  const auto& pb = p.patch_bag;
  const auto& rb = p.region_bag;
  if (pb.size() == 0 || rb.size() == 0) throw DegenerateError("patient " + p.patient_id + " has an empty bag");
  if (pb.dim() != rb.dim()) {
    throw DimensionError("patient " + p.patient_id + ": patch d=" + std::to_string(pb.dim()) +
                         " vs region d=" + std::to_string(rb.dim()));
  }
  if (pb.parent_region.size() != pb.size()) {
    throw DimensionError("patient " + p.patient_id + ": parent map has " + std::to_string(pb.parent_region.size()) +
                         " entries for " + std::to_string(pb.size()) + " patches");
  }
  for (std::size_t i = 0; i < pb.parent_region.size(); ++i) {
    if (pb.parent_region[i] >= rb.size()) {
      throw DimensionError("patient " + p.patient_id + ": parent_region[" + std::to_string(i) +
                           "] = " + std::to_string(pb.parent_region[i]) + " out of range [0, " +
                           std::to_string(rb.size()) + ")");
    }
  }
  if (p.censor != 0 && p.censor != 1) throw ConfigError("patient " + p.patient_id + ": censor must be 0 or 1");
  if (!(p.time > 0.0) || !std::isfinite(p.time)) throw ConfigError("patient " + p.patient_id + ": time must be > 0");
  detail::check_finite(pb.tokens, "patient " + p.patient_id + " patch bag");
  detail::check_finite(rb.tokens, "patient " + p.patient_id + " region bag");
}

inline void validate_cohort(const Cohort& c) {
  if (c.patients.empty()) throw DegenerateError("cohort has no patients");
  const std::size_t d = c.dim();
  for (const auto& p : c.patients) {
    validate_patient(p);
    if (p.patch_bag.dim() != d) {
      throw DimensionError("patient " + p.patient_id + " has d=" + std::to_string(p.patch_bag.dim()) +
                           ", cohort d=" + std::to_string(d));
    }
  }
  for (const PromptSet* ps : {&c.patch_prompts, &c.region_prompts}) {
    if (!ps->empty() && ps->dim() != d) {
      throw DimensionError(std::string(to_string(ps->level)) + " prompts have d=" + std::to_string(ps->dim()) +
                           ", cohort d=" + std::to_string(d));
    }
    detail::check_finite(ps->prompts, std::string(to_string(ps->level)) + " prompts");
  }
}

}  // namespace hila
