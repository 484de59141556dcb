#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "hila/diffcore/var.hpp"

namespace hila::mcl {

using diff::Matrix;
using diff::Var;

/// Unit-norm summary of one patient's selected tokens at one level (1 x d).
struct Prototype {
  Var vector;
  std::string patient_id;
};

/// Queue entries are detached copies; no gradient reaches them.
struct StoredPrototype {
  Matrix vector;
  std::string patient_id;
};

/// Column sums of the selected tokens (token-dimension reduction), L2-normalized.
inline Prototype prototype(const Var& selected_tokens, std::string patient_id) {
  if (selected_tokens.rows() == 0) throw DegenerateError("prototype of an empty selection");
  const Var summed = diff::sum_cols(selected_tokens);
  const Var sq = diff::dot(summed, summed);
  if (!(sq.item() > 0.0)) throw DegenerateError("prototype of patient " + patient_id + " sums to the zero vector");
  const Var inv_norm = diff::exp(diff::scale(diff::log(sq), -0.5));
  return {diff::matmul(inv_norm, summed), std::move(patient_id)};
}

/// FIFO of at most `capacity` prototypes (B - 1 for a queue length of B).
class MemoryQueue {
 public:
  explicit MemoryQueue(std::size_t capacity) : capacity_(capacity) {}

  static MemoryQueue for_length(std::size_t queue_length) {
    return MemoryQueue(queue_length == 0 ? 0 : queue_length - 1);
  }

  void push(const Prototype& p) { push(StoredPrototype{p.vector.value(), p.patient_id}); }

  void push(StoredPrototype p) {
    if (capacity_ == 0) return;
    entries_.push_back(std::move(p));
    while (entries_.size() > capacity_) entries_.pop_front();
  }

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<StoredPrototype>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<StoredPrototype> entries_;
};

/// -log( e^{a.p/t} / (e^{a.p/t} + sum_k e^{a.q_k/t}) ) over queue entries from
/// other patients. Empty when no such entry exists.
inline std::optional<Var> contrastive_loss(const Prototype& anchor, const Prototype& positive,
                                           const MemoryQueue& negatives, double temperature = 1.0) {
  std::vector<const StoredPrototype*> neg;
  for (const auto& q : negatives.entries())
    if (q.patient_id != anchor.patient_id) neg.push_back(&q);
  if (neg.empty()) return std::nullopt;

  const double inv_t = 1.0 / temperature;
  const Var pos = diff::scale(diff::dot(anchor.vector, positive.vector), inv_t);
  Var logits = pos;
  for (const auto* q : neg) {
    logits = diff::concat_cols(logits, diff::scale(diff::dot(anchor.vector, diff::constant(q->vector)), inv_t));
  }
  double shift = -INFINITY;
  for (double x : logits.value().data()) shift = std::max(shift, x);
  const Var shifted = diff::sub(logits, diff::constant(Matrix(1, logits.cols(), shift)));
  const Var lse = diff::log(diff::sum_all(diff::exp(shifted)));
  return diff::sub(lse, diff::sub(pos, diff::constant(Matrix(1, 1, shift))));
}

/// L_{P->R} + L_{R->P}; a direction with no usable negatives contributes 0.
inline Var mcl_loss(const Prototype& f_patch, const Prototype& f_region, const MemoryQueue& patch_queue,
                    const MemoryQueue& region_queue, double temperature = 1.0) {
  Var total = diff::constant(Matrix(1, 1, 0.0));
  if (auto l = contrastive_loss(f_patch, f_region, region_queue, temperature)) total = diff::add(total, *l);
  if (auto l = contrastive_loss(f_region, f_patch, patch_queue, temperature)) total = diff::add(total, *l);
  return total;
}

}  // namespace hila::mcl
