#pragma once

// Shared test helpers: the central finite-difference gradient oracle and
// small graph builders. Oracles here stay independent of the library's
// gradient path (they only call forward evaluation).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dps/graph.hpp"
#include "dps/rng.hpp"
#include "dps/tensor.hpp"

namespace dps::testutil {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int64_t worst_param = -1;
  bool ok(double tol = 1e-4) const { return max_rel_err < tol; }
};

// Central finite differences (h default 1e-5) of `loss_fn` w.r.t. every
// parameter entry, compared against the analytic gradients already stored in
// the parameter tensors. Call with analytic grads populated.
template <typename T>
GradCheckResult finite_difference_check(std::vector<ad::Tensor<T>> params,
                                        const std::function<double()>& loss_fn,
                                        double h = 1e-5) {
  GradCheckResult res;
  int64_t flat = 0;
  for (auto& p : params) {
    for (size_t i = 0; i < p.data().size(); ++i, ++flat) {
      const T saved = p.data()[i];
      p.data()[i] = saved + static_cast<T>(h);
      const double up = loss_fn();
      p.data()[i] = saved - static_cast<T>(h);
      const double down = loss_fn();
      p.data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = static_cast<double>(p.grad()[i]);
      const double scale = std::max({std::fabs(fd), std::fabs(an), 1e-3});
      const double rel = std::fabs(fd - an) / scale;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = flat;
      }
    }
  }
  return res;
}

// Convenience: run forward+backward once to populate analytic grads, then
// compare them with finite differences of the same forward function.
template <typename T>
GradCheckResult check_gradients(std::vector<ad::Tensor<T>> params,
                                const std::function<ad::Tensor<T>()>& forward, double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  ad::Tape<T> tape;
  {
    typename ad::Tape<T>::Scope scope(tape);
    ad::Tensor<T> loss = forward();
    tape.backward(loss);
  }
  auto loss_value = [&forward]() { return static_cast<double>(forward().item()); };
  return finite_difference_check(params, loss_value, h);
}

// Uniformly random test tensor with entries in [lo, hi).
template <typename T>
ad::Tensor<T> random_tensor(const ad::Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  ad::Tensor<T> t = ad::Tensor<T>::zeros(s, requires_grad);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Small random temporal graph for property tests.
inline TemporalGraph random_graph(int32_t num_nodes, int64_t num_edges, uint64_t seed,
                                  int32_t feature_dim = 0) {
  Rng rng(seed);
  std::vector<TemporalEdge> edges;
  double t = 0.0;
  for (int64_t i = 0; i < num_edges; ++i) {
    if (i > 0) t += rng.exponential(1.0);  // min timestamp stays at 0
    TemporalEdge e;
    e.src = static_cast<int32_t>(rng.uniform_int(num_nodes));
    do {
      e.dst = static_cast<int32_t>(rng.uniform_int(num_nodes));
    } while (e.dst == e.src && num_nodes > 1);
    e.time = t;
    for (int32_t f = 0; f < feature_dim; ++f) e.features.push_back(rng.uniform(-1.0, 1.0));
    e.edge_id = static_cast<int32_t>(i);
    edges.push_back(std::move(e));
  }
  return TemporalGraph::build(num_nodes, std::move(edges));
}

}  // namespace dps::testutil
