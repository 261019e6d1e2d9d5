#include <cmath>

#include "doctest.h"
#include "sessim/adam.hpp"

using namespace sessim;
using T64 = Tensor<double>;

TEST_CASE("first step with unit gradient moves by lr / (1 + eps)") {
  ad::ParameterStore<double> store;
  auto& p = store.add("theta", T64::scalar(0.5));
  Adam<double> adam(store);
  p.grad[0] = 1.0;
  adam.step(store);
  CHECK(std::abs((p.value[0] - 0.5) - (-0.001 / (1.0 + 1e-8))) < 1e-15);
  CHECK(p.value[0] - 0.5 == doctest::Approx(-0.000999999).epsilon(1e-6));
  CHECK(adam.steps() == 1);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  ad::ParameterStore<double> store;
  auto& p = store.add("theta", T64::row({1.0, -2.0, 3.0}));
  Adam<double> adam(store);
  adam.step(store);
  CHECK(p.value == T64::row({1.0, -2.0, 3.0}));
}

TEST_CASE("two constant-gradient steps follow the reference recurrence") {
  const double g = 0.3, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ad::ParameterStore<double> store;
  auto& p = store.add("theta", T64::scalar(2.0));
  Adam<double> adam(store, {lr, b1, b2, eps});

  double theta = 2.0, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);

    p.grad[0] = g;
    adam.step(store);
    CHECK(std::abs(p.value[0] - theta) < 1e-15);
    CHECK(std::abs(adam.first_moment(0)[0] - m) < 1e-15);
    CHECK(std::abs(adam.second_moment(0)[0] - v) < 1e-15);
  }
}

TEST_CASE("moment buffers match their parameters") {
  ad::ParameterStore<float> store;
  store.add("a", Tensor<float>(2, 3));
  store.add("b", Tensor<float>(1, 5));
  Adam<float> adam(store);
  CHECK(adam.first_moment(0).shape() == Shape{2, 3});
  CHECK(adam.second_moment(1).shape() == Shape{1, 5});
}

TEST_CASE("mismatched stores and gradients are rejected") {
  ad::ParameterStore<double> store;
  auto& p = store.add("a", T64(2, 2));
  Adam<double> adam(store);
  p.grad = T64(1, 4);
  CHECK_THROWS_AS(adam.step(store), Error);
  ad::ParameterStore<double> other;
  CHECK_THROWS_AS(adam.step(other), Error);
}
