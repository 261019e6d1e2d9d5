#include "sessim/adam.hpp"

#include <cmath>

namespace sessim {

template <typename T>
Adam<T>::Adam(const ad::ParameterStore<T>& store, AdamOptions options) : options_(options) {
  for (const auto& p : store) {
    m_.emplace_back(p.value.shape(), std::vector<T>(p.value.size(), T{0}));
    v_.emplace_back(p.value.shape(), std::vector<T>(p.value.size(), T{0}));
  }
}

template <typename T>
void Adam<T>::step(ad::ParameterStore<T>& store) {
  if (store.size() != m_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam: optimizer tracks " + std::to_string(m_.size()) +
                                              " parameters, store has " + std::to_string(store.size()));
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : store) {
    Tensor<T>& m = m_[k];
    Tensor<T>& v = v_[k];
    if (p.grad.shape() != p.value.shape() || m.shape() != p.value.shape()) {
      throw Error(ErrorKind::ShapeMismatch, "adam: parameter " + p.name + " has shape " +
                                                shape_string(p.value.shape()) + ", grad " +
                                                shape_string(p.grad.shape()));
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / c1;
      const double v_hat = vi / c2;
      p.value[i] = static_cast<T>(p.value[i] - options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps));
    }
    ++k;
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace sessim
