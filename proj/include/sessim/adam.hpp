#pragma once

#include <cstdint>
#include <vector>

#include "sessim/autograd.hpp"

namespace sessim {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over every parameter of a store, one moment buffer pair
// per parameter in store order.
template <typename T>
class Adam {
 public:
  explicit Adam(const ad::ParameterStore<T>& store, AdamOptions options = {});

  // Applies one update from the accumulated Parameter::grad buffers.
  void step(ad::ParameterStore<T>& store);

  std::int64_t steps() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return options_; }
  const Tensor<T>& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor<T>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  AdamOptions options_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::int64_t t_ = 0;
};

}  // namespace sessim
