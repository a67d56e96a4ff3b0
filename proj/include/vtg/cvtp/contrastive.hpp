#pragma once

#include <span>
#include <vector>

#include "vtg/nn/autograd.hpp"

namespace vtg::cvtp {

// FIFO ring of detached unit-norm embeddings. During a loss evaluation batch
// row r owns slot (cursor + r) mod K, the slot its push will overwrite.
class MemoryBank {
 public:
  MemoryBank() = default;
  // Filled with random unit vectors drawn from (seed, bank_init, lane).
  MemoryBank(int64_t capacity, int64_t dim, uint64_t seed, uint32_t lane = 0);

  int64_t capacity() const { return capacity_; }
  int64_t dim() const { return dim_; }
  int64_t cursor() const { return cursor_; }
  void set_cursor(int64_t cursor);

  // Throws a validation error unless | ||e|| - 1 | <= 1e-4.
  void push(std::span<const float> e);
  void push_rows(const Tensor<float>& rows);

  std::span<const float> slot(int64_t i) const;
  const Tensor<float>& entries() const { return entries_; }
  void set_entries(Tensor<float> entries);

  // Slots owned by a batch of b rows.
  std::vector<int64_t> designated_slots(int64_t b) const;
  // The entries with the designated slots overwritten by `rows` [b, D].
  template <typename T>
  Tensor<T> with_batch(const Tensor<T>& rows) const;

 private:
  int64_t capacity_ = 0;
  int64_t dim_ = 0;
  int64_t cursor_ = 0;
  Tensor<float> entries_;
};

// Per-row -log( exp(a.p/tau) / sum_k exp(a.b_k/tau) ) over the bank viewed
// with the batch written in: row r's slot holds its fresh positive, the other
// K-1 slots (including the rest of the batch, detached) are negatives. [B].
template <typename T>
nn::Var<T> infonce_loss(const nn::Var<T>& anchor, const nn::Var<T>& positive, const MemoryBank& bank, double tau);

// Mean over the batch of L(visual -> tactile bank) + L(tactile -> visual bank).
// With detach_positives each encoder receives gradient only through its anchor
// term; training uses this, since a positive pulled toward its anchor with no
// opposing push from the detached negatives drags every embedding together.
template <typename T>
nn::Var<T> cvtp_loss(const nn::Var<T>& visual, const nn::Var<T>& tactile, const MemoryBank& visual_bank,
                     const MemoryBank& tactile_bank, double tau, bool detach_positives = false);

}  // namespace vtg::cvtp
