#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hila/hila.hpp"

namespace hila::oracle {

/// Harrell's C by enumerating every ordered pair.
inline double brute_force_c_index(std::span<const metrics::RiskedPatient> p) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i == j || p[i].censor != 0 || !(p[i].time < p[j].time)) continue;
      den += 1.0;
      if (p[i].risk > p[j].risk) num += 1.0;
      else if (p[i].risk == p[j].risk) num += 0.5;
    }
  }
  return num / den;
}

/// Exact transport optimum by enumerating bases: every choice of M+N-1 cells
/// whose equality system has a unique nonnegative solution is a vertex.
inline double exact_transport_cost(const Matrix& cost, const std::vector<double>& u, const std::vector<double>& v) {
  const std::size_t M = cost.rows(), N = cost.cols(), cells = M * N, k = M + N - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> pick(cells, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(k), true);
  Eigen::VectorXd rhs(M + N);
  for (std::size_t m = 0; m < M; ++m) rhs(static_cast<long>(m)) = u[m];
  for (std::size_t n = 0; n < N; ++n) rhs(static_cast<long>(M + n)) = v[n];
  do {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<long>(M + N), static_cast<long>(k));
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < cells; ++c)
      if (pick[c]) chosen.push_back(c);
    for (std::size_t j = 0; j < k; ++j) {
      a(static_cast<long>(chosen[j] / N), static_cast<long>(j)) = 1.0;
      a(static_cast<long>(M + chosen[j] % N), static_cast<long>(j)) = 1.0;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() != static_cast<long>(k)) continue;
    const Eigen::VectorXd x = lu.solve(rhs);
    if ((a * x - rhs).cwiseAbs().maxCoeff() > 1e-9 || x.minCoeff() < -1e-12) continue;
    double c = 0.0;
    for (std::size_t j = 0; j < k; ++j) c += x(static_cast<long>(j)) * cost.data()[chosen[j]];
    best = std::min(best, c);
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

/// Two-patient G-variant toy: OPL patch selection, region tokens refined by
/// the gate, prototypes for both levels, each patient's queues holding the
/// other patient's prototypes from the initial parameters.
struct ToyGraph {
  Cohort cohort;
  harness::TrainConfig cfg;
  harness::PatchSelections selections;
  harness::Model model;
  std::vector<mcl::MemoryQueue> patch_queues, region_queues;

  static ToyGraph make(double lambda = 0.5) {
    SynthSpec spec;
    spec.n_patients = 2;
    spec.n_regions = 2;
    spec.patches_per_region = 3;
    spec.d = 6;
    spec.n_prompts_patch = 2;
    spec.n_prompts_region = 2;
    spec.seed = 11;
    Cohort c = generate_synthetic(spec).cohort;
    c.patients[0].censor = 0;
    c.patients[0].time_bin = 2;
    c.patients[1].censor = 1;
    c.patients[1].time_bin = 1;

    harness::TrainConfig cfg;
    cfg.variant = harness::Variant::G;
    cfg.bins = 2;
    cfg.lambda = lambda;
    auto sel = harness::precompute_patch_selections(c, cfg);
    harness::Model model(c.dim(), cfg);
    ToyGraph g{std::move(c), cfg, std::move(sel), std::move(model), {}, {}};
    for (std::size_t i = 0; i < 2; ++i) {
      g.patch_queues.push_back(mcl::MemoryQueue::for_length(cfg.queue_length));
      g.region_queues.push_back(mcl::MemoryQueue::for_length(cfg.queue_length));
    }
    for (std::size_t i = 0; i < 2; ++i) {
      const auto fw = g.model.forward(g.cohort.patients[i], g.cohort, g.selections[i]);
      g.patch_queues[1 - i].push(*fw.f_patch);
      g.region_queues[1 - i].push(*fw.f_region);
    }
    return g;
  }

  diff::Var loss() const {
    diff::Var total = diff::constant(Matrix(1, 1, 0.0));
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& p = cohort.patients[i];
      const auto fw = model.forward(p, cohort, selections[i]);
      const diff::Var nll = survival::nll_loss(fw.hazards, fw.survival, p.censor, p.time_bin);
      const diff::Var con = mcl::mcl_loss(*fw.f_patch, *fw.f_region, patch_queues[i], region_queues[i]);
      total = diff::add(total, survival::total_loss(nll, con, {cfg.lambda}));
    }
    return total;
  }
};

}  // namespace hila::oracle
