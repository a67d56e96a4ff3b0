#include "vtg/cvtp/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "vtg/core/random.hpp"
#include "vtg/nn/ops.hpp"

namespace vtg::cvtp {

MemoryBank::MemoryBank(int64_t capacity, int64_t dim, uint64_t seed, uint32_t lane)
    : capacity_(capacity), dim_(dim), entries_({capacity, dim}) {
  require(capacity >= 1 && dim >= 1, "memory bank needs positive capacity and width");
  RandomStream rng(seed, Purpose::bank_init, 0, lane);
  for (int64_t k = 0; k < capacity; ++k) {
    float* row = entries_.data() + k * dim;
    double norm = 0.0;
    for (int64_t j = 0; j < dim; ++j) {
      const double v = rng.normal();
      row[j] = static_cast<float>(v);
      norm += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm);
    for (int64_t j = 0; j < dim; ++j) row[j] = static_cast<float>(row[j] * inv);
  }
}

void MemoryBank::set_cursor(int64_t cursor) {
  require(cursor >= 0 && cursor < capacity_, "bank cursor out of range");
  cursor_ = cursor;
}

void MemoryBank::push(std::span<const float> e) {
  require(static_cast<int64_t>(e.size()) == dim_, "bank push: embedding width mismatch");
  double norm = 0.0;
  for (float v : e) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (!(std::abs(norm - 1.0) <= 1e-4)) fail(ErrorCode::validation, "bank push: embedding is not unit norm (" + std::to_string(norm) + ")");
  std::copy(e.begin(), e.end(), entries_.data() + cursor_ * dim_);
  cursor_ = (cursor_ + 1) % capacity_;
}

void MemoryBank::push_rows(const Tensor<float>& rows) {
  require(rows.rank() == 2 && rows.dim(1) == dim_, "bank push: rows must be [B, D]");
  for (int64_t r = 0; r < rows.dim(0); ++r)
    push(std::span<const float>(rows.data() + r * dim_, static_cast<size_t>(dim_)));
}

std::span<const float> MemoryBank::slot(int64_t i) const {
  require(i >= 0 && i < capacity_, "bank slot out of range");
  return {entries_.data() + i * dim_, static_cast<size_t>(dim_)};
}

void MemoryBank::set_entries(Tensor<float> entries) {
  require(entries.rank() == 2, "bank entries must be [K, D]");
  capacity_ = entries.dim(0);
  dim_ = entries.dim(1);
  entries_ = std::move(entries);
  cursor_ = 0;
}

std::vector<int64_t> MemoryBank::designated_slots(int64_t b) const {
  if (b > capacity_) fail(ErrorCode::validation, "batch larger than the memory bank");
  std::vector<int64_t> slots(static_cast<size_t>(b));
  for (int64_t r = 0; r < b; ++r) slots[static_cast<size_t>(r)] = (cursor_ + r) % capacity_;
  return slots;
}

template <typename T>
Tensor<T> MemoryBank::with_batch(const Tensor<T>& rows) const {
  require(rows.rank() == 2 && rows.dim(1) == dim_, "bank view: rows must be [B, D]");
  Tensor<T> out({capacity_, dim_});
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(entries_[i]);
  const auto slots = designated_slots(rows.dim(0));
  for (int64_t r = 0; r < rows.dim(0); ++r)
    std::copy(rows.data() + r * dim_, rows.data() + (r + 1) * dim_, out.data() + slots[static_cast<size_t>(r)] * dim_);
  return out;
}

template Tensor<float> MemoryBank::with_batch<float>(const Tensor<float>&) const;
template Tensor<double> MemoryBank::with_batch<double>(const Tensor<double>&) const;

template <typename T>
nn::Var<T> infonce_loss(const nn::Var<T>& anchor, const nn::Var<T>& positive, const MemoryBank& bank, double tau) {
  require(tau > 0.0, "temperature must be positive");
  require(anchor->value.rank() == 2 && anchor->value.dim(1) == bank.dim(), "anchor width differs from bank width");
  const int64_t b = anchor->value.dim(0);
  return nn::infonce_slots(anchor, positive, bank.with_batch(positive->value), bank.designated_slots(b),
                           static_cast<T>(tau));
}

template <typename T>
nn::Var<T> cvtp_loss(const nn::Var<T>& visual, const nn::Var<T>& tactile, const MemoryBank& visual_bank,
                     const MemoryBank& tactile_bank, double tau, bool detach_positives) {
  auto positive = [&](const nn::Var<T>& v) { return detach_positives ? nn::constant(v->value) : v; };
  auto v_to_t = infonce_loss(visual, positive(tactile), tactile_bank, tau);
  auto t_to_v = infonce_loss(tactile, positive(visual), visual_bank, tau);
  return nn::mean(nn::add(v_to_t, t_to_v));
}

template nn::Var<float> infonce_loss<float>(const nn::Var<float>&, const nn::Var<float>&, const MemoryBank&, double);
template nn::Var<double> infonce_loss<double>(const nn::Var<double>&, const nn::Var<double>&, const MemoryBank&, double);
template nn::Var<float> cvtp_loss<float>(const nn::Var<float>&, const nn::Var<float>&, const MemoryBank&,
                                         const MemoryBank&, double, bool);
template nn::Var<double> cvtp_loss<double>(const nn::Var<double>&, const nn::Var<double>&, const MemoryBank&,
                                           const MemoryBank&, double, bool);

}  // namespace vtg::cvtp
