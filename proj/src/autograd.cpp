#include "sessim/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"

namespace sessim {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

}  // namespace sessim

namespace sessim::ad {

namespace {

constexpr double kNormEps = 1e-12;

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_string(a.shape()) +
                                              " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_matrix(const char* op, Var<T> a) {
  if (a.value().rank() != 2) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src, T alpha = T{1}) {
  T* d = dst.data();
  const T* s = src.data();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += alpha * s[i];
}

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape(), std::vector<T>(t.size(), T{0}));
}

template <typename T>
T sorted_sum(std::vector<T> values) {
  std::sort(values.begin(), values.end());
  T total{0};
  for (T v : values) total += v;
  return total;
}

}  // namespace

// ---------------------------------------------------------------------------
// ParameterStore

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> init) {
  if (index_.count(name)) {
    throw Error(ErrorKind::InvalidConfig, "duplicate parameter name " + name);
  }
  index_.emplace(name, params_.size());
  Parameter<T> p{std::move(name), std::move(init), {}};
  p.zero_grad();
  params_.push_back(std::move(p));
  return params_.back();
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw Error(ErrorKind::ShapeMismatch, "unknown parameter " + std::string(name));
  }
  return params_[it->second];
}

template <typename T>
const Parameter<T>& ParameterStore<T>::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr});
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var<T>{this, it->second};
  nodes_.push_back(Node{p.value, {}, true, {}, &p});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  bound_.emplace(&p, id);
  return Var<T>{this, id};
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) return zeros_like(n.value);
  return n.grad;
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn fn) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}, nullptr});
  return Var<T>{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>* Tape<T>::grad_target(Var<T> v) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = zeros_like(n.value);
  return &n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  const Node& root = nodes_[loss.id];
  if (root.value.size() != 1) {
    throw Error(ErrorKind::NonScalarLoss, "loss has shape " + shape_string(root.value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor<T>();
  if (!root.requires_grad) return;
  nodes_[loss.id].grad = Tensor<T>(root.value.shape(), std::vector<T>{T{1}});

  for (std::int64_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
  }
  for (auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    if (n.param->grad.size() != n.param->value.size()) n.param->zero_grad();
    axpy(n.param->grad, n.grad);
  }
}

// ---------------------------------------------------------------------------
// Ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw Error(ErrorKind::ShapeMismatch,
                "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor<T> out(m, n);
  kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& tape, std::uint32_t self) {
    const Tensor<T>& g = tape.upstream(self);
    if (auto* ga = tape.grad_target(a)) kernels::gemm_nt(g.data(), b.value().data(), ga->data(), m, n, k);
    if (auto* gb = tape.grad_target(b)) kernels::gemm_tn(a.value().data(), g.data(), gb->data(), m, k, n);
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  axpy(out, b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::uint32_t self) {
    const Tensor<T>& g = tape.upstream(self);
    if (auto* ga = tape.grad_target(a)) axpy(*ga, g);
    if (auto* gb = tape.grad_target(b)) axpy(*gb, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  axpy(out, b.value(), T{-1});
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::uint32_t self) {
    const Tensor<T>& g = tape.upstream(self);
    if (auto* ga = tape.grad_target(a)) axpy(*ga, g);
    if (auto* gb = tape.grad_target(b)) axpy(*gb, g, T{-1});
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& tape, std::uint32_t self) {
    const Tensor<T>& g = tape.upstream(self);
    if (auto* ga = tape.grad_target(a)) {
      const auto bv = b.value().values();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (auto* gb = tape.grad_target(b)) {
      const auto av = a.value().values();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) axpy(*ga, tape.upstream(self), s);
  });
}

template <typename T>
Var<T> add_bias(Var<T> a, Var<T> bias) {
  require_matrix("add_bias", a);
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.value().rank() != 2 || bias.rows() != 1 || bias.cols() != n) {
    throw Error(ErrorKind::ShapeMismatch,
                "add_bias: " + shape_string(a.shape()) + " + " + shape_string(bias.shape()));
  }
  Tensor<T> out = a.value();
  const T* b = bias.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += b[j];
  return a.tape->record(std::move(out), {a, bias}, [a, bias, m, n](Tape<T>& tape, std::uint32_t self) {
    const Tensor<T>& g = tape.upstream(self);
    if (auto* ga = tape.grad_target(a)) axpy(*ga, g);
    if (auto* gb = tape.grad_target(bias)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*gb)[j] += g(i, j);
    }
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat_cols: no operands");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_cols", p);
    if (p.rows() != m) {
      throw Error(ErrorKind::ShapeMismatch, "concat_cols: row counts differ (" +
                                                shape_string(parts.front().shape()) + " vs " +
                                                shape_string(p.shape()) + ")");
    }
    total += p.cols();
  }
  Tensor<T> out(m, total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor<T>& v = p.value();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.data() + i * v.cols(), v.cols(), out.data() + i * total + offset);
    offset += p.cols();
  }
  return parts.front().tape->record(
      std::move(out), std::span<const Var<T>>(parts),
      [parts, m, total](Tape<T>& tape, std::uint32_t self) {
        const Tensor<T>& g = tape.upstream(self);
        std::size_t offset = 0;
        for (const auto& p : parts) {
          const std::size_t w = p.cols();
          if (auto* gp = tape.grad_target(p)) {
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < w; ++j) (*gp)(i, j) += g(i, offset + j);
          }
          offset += w;
        }
        (void)total;
      });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat_rows: no operands");
  const std::size_t n = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix("concat_rows", p);
    if (p.cols() != n) {
      throw Error(ErrorKind::ShapeMismatch, "concat_rows: column counts differ (" +
                                                shape_string(parts.front().shape()) + " vs " +
                                                shape_string(p.shape()) + ")");
    }
    total += p.rows();
  }
  std::vector<T> values;
  values.reserve(total * n);
  for (const auto& p : parts) values.insert(values.end(), p.value().values().begin(), p.value().values().end());
  return parts.front().tape->record(
      Tensor<T>(Shape{total, n}, std::move(values)), std::span<const Var<T>>(parts),
      [parts](Tape<T>& tape, std::uint32_t self) {
        const Tensor<T>& g = tape.upstream(self);
        std::size_t offset = 0;
        for (const auto& p : parts) {
          const std::size_t len = p.value().size();
          if (auto* gp = tape.grad_target(p)) {
            for (std::size_t i = 0; i < len; ++i) (*gp)[i] += g[offset + i];
          }
          offset += len;
        }
      });
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count) {
  require_matrix("slice_rows", a);
  if (begin + count > a.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "slice_rows: [" + std::to_string(begin) + ", " +
                                              std::to_string(begin + count) + ") of " +
                                              shape_string(a.shape()));
  }
  const std::size_t n = a.cols();
  const T* src = a.value().data() + begin * n;
  Tensor<T> out(Shape{count, n}, std::vector<T>(src, src + count * n));
  return a.tape->record(std::move(out), {a}, [a, begin, n](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      T* dst = ga->data() + begin * n;
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  require_matrix("slice_cols", a);
  if (begin + count > a.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "slice_cols: [" + std::to_string(begin) + ", " +
                                              std::to_string(begin + count) + ") of " +
                                              shape_string(a.shape()));
  }
  const std::size_t m = a.rows();
  Tensor<T> out(m, count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a.value()(i, begin + j);
  return a.tape->record(std::move(out), {a}, [a, begin, m, count](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) (*ga)(i, begin + j) += g(i, j);
    }
  });
}

template <typename T>
Var<T> gather_rows(Var<T> a, std::span<const std::size_t> rows) {
  require_matrix("gather_rows", a);
  const std::size_t n = a.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor<T> out(idx.size(), n);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) {
      throw Error(ErrorKind::ShapeMismatch,
                  "gather_rows: row " + std::to_string(idx[i]) + " of " + shape_string(a.shape()));
    }
    std::copy_n(a.value().data() + idx[i] * n, n, out.data() + i * n);
  }
  return a.tape->record(std::move(out), {a}, [a, idx = std::move(idx), n](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        T* dst = ga->data() + idx[i] * n;
        const T* src = g.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  require_matrix("transpose", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a.value()(i, j);
  return a.tape->record(std::move(out), {a}, [a, m, n](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*ga)(i, j) += g(j, i);
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> a, std::size_t rows, std::size_t cols) {
  Tensor<T> out = a.value();
  out.reshape(Shape{rows, cols});
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
  });
}

template <typename T>
Var<T> flatten(Var<T> a) {
  return reshape(a, 1, a.value().size());
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = T{1} / (T{1} + std::exp(-v));
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      const Tensor<T>& y = tape.value(Var<T>{&tape, self});
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i] * (T{1} - y[i]);
    }
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      const Tensor<T>& y = tape.value(Var<T>{&tape, self});
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (T{1} - y[i] * y[i]);
    }
  });
}

template <typename T>
Var<T> square(Var<T> a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = v * v;
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      const auto av = a.value().values();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += T{2} * av[i] * g[i];
    }
  });
}

template <typename T>
Var<T> softmax_all(Var<T> a) {
  Tensor<T> out = a.value();
  if (out.empty()) throw Error(ErrorKind::ShapeMismatch, "softmax_all: empty operand");
  const T mx = *std::max_element(out.values().begin(), out.values().end());
  for (auto& v : out.values()) v = std::exp(v - mx);
  const T total = sorted_sum(std::vector<T>(out.values().begin(), out.values().end()));
  for (auto& v : out.values()) v /= total;
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      const Tensor<T>& y = tape.value(Var<T>{&tape, self});
      T dot{0};
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += y[i] * (g[i] - dot);
    }
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  require_matrix("softmax_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    auto row = out.row_span(i);
    const T mx = *std::max_element(row.begin(), row.end());
    T total{0};
    for (auto& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  return a.tape->record(std::move(out), {a}, [a, m, n](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      const Tensor<T>& y = tape.value(Var<T>{&tape, self});
      for (std::size_t i = 0; i < m; ++i) {
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < n; ++j) (*ga)(i, j) += y(i, j) * (g(i, j) - dot);
      }
    }
  });
}

template <typename T>
Var<T> normalize_rows(Var<T> a) {
  require_matrix("normalize_rows", a);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<T> out(m, n);
  std::vector<T> norms(m, T{0});
  for (std::size_t i = 0; i < m; ++i) {
    T ss{0};
    for (std::size_t j = 0; j < n; ++j) ss += a.value()(i, j) * a.value()(i, j);
    const T norm = std::sqrt(ss);
    if (static_cast<double>(norm) < kNormEps) continue;
    norms[i] = norm;
    for (std::size_t j = 0; j < n; ++j) out(i, j) = a.value()(i, j) / norm;
  }
  return a.tape->record(std::move(out), {a}, [a, m, n, norms = std::move(norms)](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const Tensor<T>& g = tape.upstream(self);
      const Tensor<T>& y = tape.value(Var<T>{&tape, self});
      for (std::size_t i = 0; i < m; ++i) {
        if (norms[i] == T{0}) continue;
        T dot{0};
        for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < n; ++j) (*ga)(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
      }
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T total{0};
  for (T v : a.value().values()) total += v;
  return a.tape->record(Tensor<T>::scalar(total), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const T g = tape.upstream(self)[0];
      for (auto& v : ga->values()) v += g;
    }
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw Error(ErrorKind::ShapeMismatch, "mean: empty operand");
  T total{0};
  for (T v : a.value().values()) total += v;
  return a.tape->record(Tensor<T>::scalar(total / static_cast<T>(n)), {a},
                        [a, n](Tape<T>& tape, std::uint32_t self) {
                          if (auto* ga = tape.grad_target(a)) {
                            const T g = tape.upstream(self)[0] / static_cast<T>(n);
                            for (auto& v : ga->values()) v += g;
                          }
                        });
}

template <typename T>
Var<T> sum_sq(Var<T> a) {
  T total{0};
  for (T v : a.value().values()) total += v * v;
  return a.tape->record(Tensor<T>::scalar(total), {a}, [a](Tape<T>& tape, std::uint32_t self) {
    if (auto* ga = tape.grad_target(a)) {
      const T g = tape.upstream(self)[0];
      const auto av = a.value().values();
      for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += T{2} * av[i] * g;
    }
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

double grad_check(const std::function<Var<double>(Tape<double>&, Var<double>)>& f,
                  const Tensor<double>& x, double h) {
  Parameter<double> px{"x", x, {}};
  px.zero_grad();
  {
    Tape<double> tape;
    auto loss = f(tape, tape.parameter(px));
    tape.backward(loss);
  }
  auto eval_at = [&](const Tensor<double>& point) {
    Tape<double> tape;
    return f(tape, tape.constant(point)).value()[0];
  };
  double worst = 0.0;
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = eval_at(probe);
    probe[i] = x[i] - h;
    const double down = eval_at(probe);
    probe[i] = x[i];
    const double central = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(px.grad[i] - central) / std::max(1.0, std::abs(central)));
  }
  return worst;
}

double grad_check_parameters(ParameterStore<double>& store,
                             const std::function<Var<double>(Tape<double>&)>& loss, double h,
                             std::size_t max_coords_per_param) {
  store.zero_grad();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    Tape<double> tape;
    return loss(tape).value()[0];
  };
  double worst = 0.0;
  for (auto& p : store) {
    const std::size_t n = p.value.size();
    const std::size_t stride =
        (max_coords_per_param == 0 || n <= max_coords_per_param) ? 1 : n / max_coords_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = eval();
      p.value[i] = saved - h;
      const double down = eval();
      p.value[i] = saved;
      const double central = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(p.grad[i] - central) / std::max(1.0, std::abs(central)));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Instantiations

#define SESSIM_INSTANTIATE_OPS(T)                                                   \
  template class ParameterStore<T>;                                                 \
  template class Tape<T>;                                                           \
  template Var<T> matmul(Var<T>, Var<T>);                                           \
  template Var<T> add(Var<T>, Var<T>);                                              \
  template Var<T> sub(Var<T>, Var<T>);                                              \
  template Var<T> mul(Var<T>, Var<T>);                                              \
  template Var<T> scale(Var<T>, T);                                                 \
  template Var<T> add_bias(Var<T>, Var<T>);                                         \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                          \
  template Var<T> concat_rows(const std::vector<Var<T>>&);                          \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                     \
  template Var<T> gather_rows(Var<T>, std::span<const std::size_t>);                \
  template Var<T> transpose(Var<T>);                                                \
  template Var<T> reshape(Var<T>, std::size_t, std::size_t);                        \
  template Var<T> flatten(Var<T>);                                                  \
  template Var<T> sigmoid(Var<T>);                                                  \
  template Var<T> tanh(Var<T>);                                                     \
  template Var<T> square(Var<T>);                                                   \
  template Var<T> softmax_all(Var<T>);                                              \
  template Var<T> softmax_rows(Var<T>);                                             \
  template Var<T> normalize_rows(Var<T>);                                           \
  template Var<T> sum(Var<T>);                                                      \
  template Var<T> mean(Var<T>);                                                     \
  template Var<T> sum_sq(Var<T>);

SESSIM_INSTANTIATE_OPS(float)
SESSIM_INSTANTIATE_OPS(double)

#undef SESSIM_INSTANTIATE_OPS

}  // namespace sessim::ad
