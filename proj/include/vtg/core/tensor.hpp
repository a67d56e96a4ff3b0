#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vtg/core/error.hpp"

namespace vtg {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Dense row-major array. Image data uses NCHW; token data uses [N, L, D].
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(static_cast<int64_t>(data_.size()) == shape_numel(shape_),
            "tensor data size does not match shape " + shape_string(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  int64_t dim(int axis) const { return shape_.at(static_cast<size_t>(axis < 0 ? axis + rank() : axis)); }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](int64_t i) noexcept { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const noexcept { return data_[static_cast<size_t>(i)]; }

  T& at(int64_t r, int64_t c) noexcept { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
  const T& at(int64_t r, int64_t c) const noexcept { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
  T& at(int64_t n, int64_t c, int64_t h, int64_t w) noexcept {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const noexcept {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  Tensor reshaped(Shape shape) const {
    require(shape_numel(shape) == numel(), "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
  }
  void reshape_inplace(Shape shape) {
    require(shape_numel(shape) == numel(), "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Item `n` along the leading axis as a tensor of rank-1.
  Tensor slice0(int64_t n) const {
    Shape sub(shape_.begin() + 1, shape_.end());
    const int64_t stride = shape_numel(sub);
    return Tensor(sub, std::vector<T>(data_.begin() + n * stride, data_.begin() + (n + 1) * stride));
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Stacks equally-shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> items) {
  require(!items.empty(), "stack of zero tensors");
  Shape shape = items.front().shape();
  std::vector<T> data;
  data.reserve(static_cast<size_t>(shape_numel(shape)) * items.size());
  for (const auto& item : items) {
    require(item.shape() == shape, "stack: shape mismatch " + shape_string(item.shape()) + " vs " + shape_string(shape));
    data.insert(data.end(), item.storage().begin(), item.storage().end());
  }
  shape.insert(shape.begin(), static_cast<int64_t>(items.size()));
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& items) {
  return stack(std::span<const Tensor<T>>(items));
}

}  // namespace vtg
