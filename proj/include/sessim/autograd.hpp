#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sessim/tensor.hpp"

namespace sessim::ad {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape(), std::vector<T>(value.size(), T{0})); }
};

// Named, ordered parameter collection. References returned by add() stay
// valid for the lifetime of the store.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> init);
  Parameter<T>& get(std::string_view name);
  const Parameter<T>& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

// Handle to a node recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Define-by-run reverse-mode tape. One tape per forward pass; it is not
// thread-safe, but distinct tapes may share read-only parameters.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  // Binding the same parameter twice returns the same leaf.
  Var<T> parameter(Parameter<T>& p);

  const Tensor<T>& value(Var<T> v) const { return nodes_[v.id].value; }
  // Gradient of the last backward() pass; zeros when the node got none.
  Tensor<T> grad(Var<T> v) const;

  // Accumulates d(loss)/d(parameter) into every bound Parameter::grad.
  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-implementation interface.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn fn);
  bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }
  const Tensor<T>& upstream(std::uint32_t id) const { return nodes_[id].grad; }
  // Zero-initialised gradient buffer of `v`, or nullptr if `v` needs none.
  Tensor<T>* grad_target(Var<T> v);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> bound_;
};

// Primitive operations. Shapes are explicit: the only implicit expansion is
// add_bias (1 x n row added to every row).
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);
template <typename T> Var<T> add_bias(Var<T> a, Var<T> bias);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T> Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count);
template <typename T> Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count);
template <typename T> Var<T> gather_rows(Var<T> a, std::span<const std::size_t> rows);
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> reshape(Var<T> a, std::size_t rows, std::size_t cols);
template <typename T> Var<T> flatten(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);
template <typename T> Var<T> square(Var<T> a);
// Softmax over every entry jointly. The normaliser is summed in sorted order so
// the result is invariant to any permutation of the input entries.
template <typename T> Var<T> softmax_all(Var<T> a);
template <typename T> Var<T> softmax_rows(Var<T> a);
// Row-wise unit normalisation; rows with norm below 1e-12 map to zero rows
// with zero gradient.
template <typename T> Var<T> normalize_rows(Var<T> a);
template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
template <typename T> Var<T> sum_sq(Var<T> a);

template <typename T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
  return concat_cols<T>(std::vector<Var<T>>(parts));
}
template <typename T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
  return concat_rows<T>(std::vector<Var<T>>(parts));
}

// Max over coordinates of |autodiff - central difference| / max(1, |central|).
double grad_check(const std::function<Var<double>(Tape<double>&, Var<double>)>& f,
                  const Tensor<double>& x, double h = 1e-5);

// Same measure over parameter coordinates of a store. `max_coords_per_param`
// of 0 checks every coordinate; otherwise an evenly strided subset.
double grad_check_parameters(ParameterStore<double>& store,
                             const std::function<Var<double>(Tape<double>&)>& loss, double h = 1e-5,
                             std::size_t max_coords_per_param = 0);

}  // namespace sessim::ad
