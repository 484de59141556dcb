#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "hila/error.hpp"
#include "hila/log.hpp"

namespace hila::metrics {

/// censor: 0 = event, 1 = censored.
struct RiskedPatient {
  double risk = 0.0;
  double time = 0.0;
  int censor = 0;
};

// ---------------------------------------------------------------------------
// Concordance

namespace detail {

/// Counts over inserted keys in [0, n).
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  /// Number of inserted keys < i.
  long long prefix(std::size_t i) const {
    long long s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<long long> tree_;
};

}  // namespace detail

/// Harrell's C. A pair is comparable when the shorter time is an observed
/// event (strictly shorter; equal times are not comparable). Concordant when
/// that patient has the higher risk; tied risks earn half credit.
/// Sweeps times downwards with a Fenwick tree over risk ranks: O(n log n).
inline double concordance_index(std::span<const RiskedPatient> patients) {
  const std::size_t n = patients.size();
  std::vector<double> risks;
  risks.reserve(n);
  for (const auto& p : patients) risks.push_back(p.risk);
  std::sort(risks.begin(), risks.end());
  risks.erase(std::unique(risks.begin(), risks.end()), risks.end());
  const auto rank = [&](double r) {
    return static_cast<std::size_t>(std::lower_bound(risks.begin(), risks.end(), r) - risks.begin());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return patients[a].time > patients[b].time; });

  detail::Fenwick later(risks.size());
  long long inserted = 0;
  double concordant = 0.0;
  long long comparable = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && patients[order[j]].time == patients[order[i]].time) ++j;
    // [i, j) share a time; everything already inserted has a strictly longer time.
    for (std::size_t k = i; k < j; ++k) {
      const auto& p = patients[order[k]];
      if (p.censor != 0) continue;
      const std::size_t rk = rank(p.risk);
      const long long below = later.prefix(rk);
      const long long not_above = later.prefix(rk + 1);
      concordant += static_cast<double>(below) + 0.5 * static_cast<double>(not_above - below);
      comparable += inserted;
    }
    for (std::size_t k = i; k < j; ++k) {
      later.add(rank(patients[order[k]].risk));
      ++inserted;
    }
    i = j;
  }
  if (comparable == 0) throw UndefinedMetricError("concordance index undefined: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

// ---------------------------------------------------------------------------
// Kaplan-Meier

struct KMCurve {
  std::vector<double> times;     // distinct event times, ascending
  std::vector<double> survival;  // S just after each time
  std::vector<long> at_risk;
  std::vector<long> events;

  /// S(t) as a right-continuous step function.
  double at(double t) const {
    double s = 1.0;
    for (std::size_t i = 0; i < times.size() && times[i] <= t; ++i) s = survival[i];
    return s;
  }
};

/// Product-limit estimator. Subjects censored at t stay at risk for events at t.
inline KMCurve kaplan_meier(std::span<const RiskedPatient> patients) {
  if (patients.empty()) throw DegenerateError("kaplan_meier of an empty group");
  std::vector<std::size_t> order(patients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return patients[a].time < patients[b].time; });

  KMCurve km;
  long at_risk = static_cast<long>(patients.size());
  double s = 1.0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = patients[order[i]].time;
    long d = 0, leaving = 0;
    for (; i < order.size() && patients[order[i]].time == t; ++i) {
      if (patients[order[i]].censor == 0) ++d;
      ++leaving;
    }
    if (d > 0) {
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
      km.times.push_back(t);
      km.survival.push_back(s);
      km.at_risk.push_back(at_risk);
      km.events.push_back(d);
    }
    at_risk -= leaving;
  }
  return km;
}

struct StepPoint {
  double time;
  double survival;
  long at_risk;
};

/// Plot-ready step function: starts at (0, 1, n) then one point per event time.
inline std::vector<StepPoint> step_points(const KMCurve& km, long n) {
  std::vector<StepPoint> pts{{0.0, 1.0, n}};
  for (std::size_t i = 0; i < km.times.size(); ++i) pts.push_back({km.times[i], km.survival[i], km.at_risk[i]});
  return pts;
}

// ---------------------------------------------------------------------------
// Chi-square tail

/// Regularized upper incomplete gamma Q(a, x): series below a + 1,
/// Lentz continued fraction above.
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_q needs a > 0 and x >= 0");
  if (x == 0.0) return 1.0;
  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term, ap = a;
    for (int n = 0; n < kMaxIter; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return std::max(0.0, 1.0 - sum * std::exp(log_prefactor));
  }
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(log_prefactor) * h;
}

inline double chi_square_sf(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * dof, 0.5 * x);
}

// ---------------------------------------------------------------------------
// Log-rank

struct LogRankResult {
  double chi_square = 0.0;
  double p_value = 1.0;
  double observed_a = 0.0;
  double expected_a = 0.0;
  double variance = 0.0;
};

/// Two-group log-rank test with hypergeometric variance, 1 degree of freedom.
inline LogRankResult logrank_test(std::span<const RiskedPatient> group_a, std::span<const RiskedPatient> group_b) {
  if (group_a.empty() || group_b.empty()) throw DegenerateError("log-rank test needs two nonempty groups");
  struct Obs {
    double time;
    int censor;
    bool in_a;
  };
  std::vector<Obs> all;
  for (const auto& p : group_a) all.push_back({p.time, p.censor, true});
  for (const auto& p : group_b) all.push_back({p.time, p.censor, false});
  std::sort(all.begin(), all.end(), [](const Obs& x, const Obs& y) { return x.time < y.time; });

  double n_a = static_cast<double>(group_a.size());
  double n_b = static_cast<double>(group_b.size());
  LogRankResult r;
  bool any_event = false;
  for (std::size_t i = 0; i < all.size();) {
    const double t = all[i].time;
    double d_a = 0, d = 0, leave_a = 0, leave_b = 0;
    for (; i < all.size() && all[i].time == t; ++i) {
      if (all[i].censor == 0) {
        ++d;
        if (all[i].in_a) ++d_a;
      }
      (all[i].in_a ? leave_a : leave_b) += 1.0;
    }
    const double n = n_a + n_b;
    if (d > 0) {
      any_event = true;
      r.observed_a += d_a;
      r.expected_a += d * n_a / n;
      if (n > 1.0) r.variance += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1.0);
    }
    n_a -= leave_a;
    n_b -= leave_b;
  }
  if (!any_event) throw DegenerateError("log-rank test needs at least one event");
  if (!(r.variance > 0.0)) throw DegenerateError("log-rank test has zero variance");
  const double diff = r.observed_a - r.expected_a;
  r.chi_square = diff * diff / r.variance;
  r.p_value = chi_square_sf(r.chi_square, 1.0);
  return r;
}

// ---------------------------------------------------------------------------
// Median split

struct Strata {
  std::vector<std::size_t> low;
  std::vector<std::size_t> high;
  double median = 0.0;
};

/// risk > median -> high, otherwise low. Even counts use the midpoint of the
/// two central order statistics.
inline Strata stratify_median(std::span<const RiskedPatient> patients) {
  if (patients.size() < 2) throw DegenerateError("median stratification needs at least 2 patients");
  std::vector<double> r;
  for (const auto& p : patients) r.push_back(p.risk);
  std::sort(r.begin(), r.end());
  const std::size_t n = r.size();
  Strata s;
  s.median = n % 2 == 1 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);
  for (std::size_t i = 0; i < n; ++i) (patients[i].risk > s.median ? s.high : s.low).push_back(i);
  if (s.high.empty()) log::warn("median stratification: all risks equal, high-risk group is empty");
  return s;
}

inline std::vector<RiskedPatient> gather(std::span<const RiskedPatient> patients, std::span<const std::size_t> idx) {
  std::vector<RiskedPatient> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(patients[i]);
  return out;
}

}  // namespace hila::metrics
