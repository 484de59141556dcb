#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "hila/embeddings/types.hpp"
#include "hila/log.hpp"

namespace hila {

/// Linear-interpolation sample quantile of sorted data (the "type 7" rule).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DegenerateError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// T + 1 edges at the 0, 1/T, ..., 1 quantiles of the uncensored times.
inline std::vector<double> quantile_edges(const std::vector<PatientRecord>& patients, int bins) {
  if (bins < 2) throw ConfigError("need at least 2 time bins, got " + std::to_string(bins));
  std::vector<double> events;
  for (const auto& p : patients)
    if (p.censor == 0) events.push_back(p.time);
  if (events.size() < static_cast<std::size_t>(bins)) {
    throw ConfigError("discretizing into " + std::to_string(bins) + " bins needs at least that many uncensored " +
                      "patients, found " + std::to_string(events.size()));
  }
  std::sort(events.begin(), events.end());
  std::vector<double> edges;
  for (int b = 0; b <= bins; ++b) edges.push_back(sorted_quantile(events, static_cast<double>(b) / bins));
  return edges;
}

/// Bins are right-closed, (e_{k-1}, e_k]; times below the first edge land in
/// bin 1 and times above the last in bin T.
inline int time_bin(std::span<const double> edges, double t) {
  const int bins = static_cast<int>(edges.size()) - 1;
  int b = 1;
  for (int k = 1; k < bins; ++k)
    if (edges[static_cast<std::size_t>(k)] < t) b = k + 1;
  return b;
}

/// Assigns time_bin to every patient using edges from the uncensored times.
inline void discretize_times(Cohort& cohort, int bins) {
  cohort.bin_edges = quantile_edges(cohort.patients, bins);
  const auto& e = cohort.bin_edges;
  if (std::adjacent_find(e.begin(), e.end()) != e.end()) {
    log::warn("duplicate time-bin edges; some bins are empty (degenerate event times)");
  }
  for (auto& p : cohort.patients) p.time_bin = time_bin(e, p.time);
}

/// Applies already-fitted edges (e.g. from the training split) to other patients.
inline void apply_time_bins(std::vector<PatientRecord>& patients, std::span<const double> edges) {
  for (auto& p : patients) p.time_bin = time_bin(edges, p.time);
}

}  // namespace hila
