#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sessim/error.hpp"

namespace sessim {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor. Model code only uses rank 2 (vectors are 1 x n,
// scalars 1 x 1); other ranks exist for checkpoint round-trips.
template <typename T>
class Tensor {
 public:
  Tensor() : shape_{0, 0} {}
  Tensor(std::size_t rows, std::size_t cols, T fill = T{0})
      : shape_{rows, cols}, values_(rows * cols, fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
      throw Error(ErrorKind::ShapeMismatch, "tensor of shape " + shape_string(shape_) + " given " +
                                                std::to_string(values_.size()) + " values");
    }
  }

  static Tensor scalar(T v) { return Tensor(1, 1, v); }
  static Tensor row(std::vector<T> values) {
    const auto n = values.size();
    return Tensor(Shape{1, n}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 0; }
  std::size_t cols() const noexcept { return shape_.size() == 2 ? shape_[1] : 0; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }

  std::span<T> row_span(std::size_t r) { return {values_.data() + r * shape_[1], shape_[1]}; }
  std::span<const T> row_span(std::size_t r) const {
    return {values_.data() + r * shape_[1], shape_[1]};
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }
  void reshape(Shape shape) {
    if (element_count(shape) != values_.size()) {
      throw Error(ErrorKind::ShapeMismatch,
                  "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

}  // namespace sessim
