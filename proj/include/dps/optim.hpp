#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dps/rng.hpp"
#include "dps/tensor.hpp"

namespace dps::ad {

// Glorot (uniform) initialization: U(-a, a) with a = sqrt(6/(fan_in+fan_out)).
// For matrices (in, out) the fans are the two dimensions; vectors use their
// length for both.
template <typename T>
Tensor<T> glorot_init(const Shape& shape, Rng& rng, bool requires_grad = true) {
  int64_t fan_in, fan_out;
  if (shape.rank == 2) {
    fan_in = shape[0];
    fan_out = shape[1];
  } else if (shape.rank == 1) {
    fan_in = fan_out = shape[0];
  } else {
    throw std::invalid_argument("glorot_init: expected rank 1 or 2, got " + shape.str());
  }
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t = Tensor<T>::zeros(shape, requires_grad);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-a, a));
  return t;
}

// Adam with decoupled weight decay: p <- p - lr*wd*p applied before the
// moment update of each step.
template <typename T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void reset(const std::vector<Tensor<T>>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.data().size(), T(0));
      v.emplace_back(p.data().size(), T(0));
    }
  }
};

// One optimizer step over `params` (their .grad() buffers are consumed and
// zeroed). Parameter order must match the order given to reset().
template <typename T>
void adam_step(AdamState<T>& state, std::vector<Tensor<T>>& params) {
  if (state.m.size() != params.size())
    throw std::logic_error("adam_step: state not initialized for this parameter list");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& value = params[pi].data();
    auto& grad = params[pi].grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (grad.size() != value.size())
      throw std::logic_error("adam_step: parameter has no gradient buffer");
    for (size_t i = 0; i < value.size(); ++i) {
      if (state.weight_decay != 0.0)
        value[i] -= static_cast<T>(state.lr * state.weight_decay) * value[i];
      const T g = grad[i];
      m[i] = static_cast<T>(state.beta1) * m[i] + static_cast<T>(1.0 - state.beta1) * g;
      v[i] = static_cast<T>(state.beta2) * v[i] + static_cast<T>(1.0 - state.beta2) * g * g;
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      value[i] -= static_cast<T>(state.lr * mhat / (std::sqrt(vhat) + state.eps));
      grad[i] = T(0);
    }
  }
}

}  // namespace dps::ad
