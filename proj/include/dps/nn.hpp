#pragma once

// Shared neural building blocks: the cosine time kernel and the link
// prediction head.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dps/optim.hpp"
#include "dps/tensor.hpp"

namespace dps {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, ad::Tensor<T>>>;

// Trainable cosine basis over elapsed time: Phi(dt)_k = cos(omega_k * dt).
template <typename T>
struct TimeKernel {
  ad::Tensor<T> omegas;  // (d_time,)

  int64_t dim() const { return omegas.shape()[0]; }

  // Frequencies spread geometrically from 1 down to ~1e-4 so short and long
  // gaps both move some component; they are trained afterwards.
  static TimeKernel create(int64_t d_time) {
    TimeKernel k;
    k.omegas = ad::Tensor<T>::zeros(ad::Shape{d_time}, true);
    for (int64_t i = 0; i < d_time; ++i) {
      double expo = d_time > 1 ? static_cast<double>(i) / static_cast<double>(d_time - 1) : 0.0;
      k.omegas.data()[static_cast<size_t>(i)] = static_cast<T>(std::pow(10.0, -4.0 * expo));
    }
    return k;
  }

  // dt is a data tensor (no grad) of rank <= 2; the result appends the
  // encoding axis: (B,s) -> (B,s,d_time), (B,) -> (B,d_time).
  ad::Tensor<T> encode(const ad::Tensor<T>& dt) const {
    ad::Shape expanded;
    expanded.rank = dt.shape().rank + 1;
    for (int i = 0; i < dt.shape().rank; ++i) expanded.d[static_cast<size_t>(i)] = dt.shape()[i];
    expanded.d[static_cast<size_t>(expanded.rank - 1)] = 1;
    return ad::cos(ad::mul(ad::reshape(dt, expanded), omegas));
  }

  // Single-gap convenience: Phi(dt) as a length-d vector tensor.
  ad::Tensor<T> encode_scalar(double dt) const {
    return encode(ad::Tensor<T>::from_data(ad::Shape{1}, {static_cast<T>(dt)}));
  }
};

// sigmoid(W * relu(W_u h_u + W_v h_v)) -> probability per row.
template <typename T>
struct LinkHead {
  ad::Tensor<T> w_u;    // (d, d_hidden)
  ad::Tensor<T> w_v;    // (d, d_hidden)
  ad::Tensor<T> w_out;  // (d_hidden, 1)

  static LinkHead create(int64_t d, int64_t d_hidden, Rng& rng) {
    LinkHead h;
    h.w_u = ad::glorot_init<T>(ad::Shape{d, d_hidden}, rng);
    h.w_v = ad::glorot_init<T>(ad::Shape{d, d_hidden}, rng);
    h.w_out = ad::glorot_init<T>(ad::Shape{d_hidden, 1}, rng);
    return h;
  }

  // h_u, h_v: (B, d) -> (B, 1) probabilities in (0,1).
  ad::Tensor<T> predict(const ad::Tensor<T>& h_u, const ad::Tensor<T>& h_v) const {
    ad::Tensor<T> z = ad::relu(ad::add(ad::matmul(h_u, w_u), ad::matmul(h_v, w_v)));
    return ad::sigmoid(ad::matmul(z, w_out));
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".w_u", w_u);
    out.emplace_back(prefix + ".w_v", w_v);
    out.emplace_back(prefix + ".w_out", w_out);
  }
};

}  // namespace dps
