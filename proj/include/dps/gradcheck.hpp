#pragma once

// Finite-difference verification suite, 64-bit profile. Central differences
// with h = 1e-5 against the recorded analytic gradients, over every tensor
// op, the conv/fusion/prediction layers, and an end-to-end two-layer loss on
// a small graph. Used by the `gradcheck` CLI command and the acceptance
// suite.

#include <functional>
#include <string>
#include <vector>

#include "dps/gas.hpp"
#include "dps/model.hpp"
#include "dps/train_common.hpp"

namespace dps {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  bool ok(double tol = 1e-4) const { return max_rel_err < tol; }
};

namespace gradcheck_detail {

using T = double;

inline double relative_error(double fd, double an) {
  const double scale = std::max({std::fabs(fd), std::fabs(an), 1e-3});
  return std::fabs(fd - an) / scale;
}

inline double run_case(std::vector<ad::Tensor<T>> params,
                       const std::function<ad::Tensor<T>()>& forward, double h = 1e-5) {
  for (auto& p : params) p.zero_grad();
  ad::Tape<T> tape;
  {
    typename ad::Tape<T>::Scope scope(tape);
    tape.backward(forward());
  }
  double worst = 0.0;
  for (auto& p : params) {
    for (size_t i = 0; i < p.data().size(); ++i) {
      const T saved = p.data()[i];
      p.data()[i] = saved + static_cast<T>(h);
      const double up = static_cast<double>(forward().item());
      p.data()[i] = saved - static_cast<T>(h);
      const double down = static_cast<double>(forward().item());
      p.data()[i] = saved;
      worst = std::max(worst, relative_error((up - down) / (2.0 * h),
                                             static_cast<double>(p.grad()[i])));
    }
  }
  return worst;
}

inline ad::Tensor<T> rand_tensor(const ad::Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0,
                                 bool rg = true) {
  ad::Tensor<T> t = ad::Tensor<T>::zeros(s, rg);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace gradcheck_detail

inline std::vector<GradCheckCase> run_gradient_suite(uint64_t seed = 11) {
  using namespace gradcheck_detail;
  std::vector<GradCheckCase> cases;
  Rng rng(seed);

  auto weighted = [&rng](const std::function<ad::Tensor<T>()>& op) {
    ad::Tensor<T> w = rand_tensor(op().shape(), rng, 0.5, 1.5, false);
    return std::function<ad::Tensor<T>()>([op, w]() { return ad::sum(ad::mul(op(), w)); });
  };
  auto add_case = [&cases](const std::string& name, double err) {
    cases.push_back({name, err});
  };

  // Elementwise binary ops with equal and broadcast shapes.
  {
    ad::Tensor<T> a = rand_tensor(ad::Shape{2, 3, 4}, rng);
    ad::Tensor<T> b = rand_tensor(ad::Shape{2, 3, 4}, rng);
    ad::Tensor<T> c = rand_tensor(ad::Shape{4}, rng);
    add_case("add", run_case({a, b}, weighted([=] { return ad::add(a, b); })));
    add_case("add_broadcast", run_case({a, c}, weighted([=] { return ad::add(a, c); })));
    add_case("sub", run_case({a, b}, weighted([=] { return ad::sub(a, b); })));
    add_case("mul", run_case({a, b}, weighted([=] { return ad::mul(a, b); })));
    add_case("mul_broadcast", run_case({a, c}, weighted([=] { return ad::mul(a, c); })));
  }
  // Unary ops.
  {
    ad::Tensor<T> x = rand_tensor(ad::Shape{3, 5}, rng, -2.0, 2.0);
    ad::Tensor<T> xp = rand_tensor(ad::Shape{3, 5}, rng, 0.2, 3.0);
    add_case("relu", run_case({x}, weighted([=] { return ad::relu(x); })));
    add_case("sigmoid", run_case({x}, weighted([=] { return ad::sigmoid(x); })));
    add_case("exp", run_case({x}, weighted([=] { return ad::exp(x); })));
    add_case("log", run_case({xp}, weighted([=] { return ad::log(xp); })));
    add_case("cos", run_case({x}, weighted([=] { return ad::cos(x); })));
    add_case("clamp", run_case({x}, weighted([=] { return ad::clamp(x, T(-1.5), T(1.5)); })));
  }
  // Products.
  {
    ad::Tensor<T> a = rand_tensor(ad::Shape{3, 4}, rng);
    ad::Tensor<T> w = rand_tensor(ad::Shape{4, 5}, rng);
    add_case("matmul", run_case({a, w}, weighted([=] { return ad::matmul(a, w); })));
    ad::Tensor<T> a3 = rand_tensor(ad::Shape{2, 3, 4}, rng);
    ad::Tensor<T> b3 = rand_tensor(ad::Shape{2, 4, 3}, rng);
    add_case("bmm", run_case({a3, b3}, weighted([=] { return ad::bmm(a3, b3); })));
    add_case("bmm_shared_rhs", run_case({a3, w}, weighted([=] { return ad::bmm(a3, w); })));
  }
  // Shape ops and reductions.
  {
    ad::Tensor<T> a = rand_tensor(ad::Shape{3, 4}, rng);
    ad::Tensor<T> b = rand_tensor(ad::Shape{3, 2}, rng);
    add_case("concat", run_case({a, b}, weighted([=] { return ad::concat<T>({a, b}); })));
    add_case("slice", run_case({a}, weighted([=] { return ad::slice(a, 1, 1, 2); })));
    add_case("reshape", run_case({a}, weighted([=] { return ad::reshape(a, ad::Shape{4, 3}); })));
    add_case("sum_axis", run_case({a}, weighted([=] { return ad::sum_axis(a, 0); })));
    add_case("mean_axis", run_case({a}, weighted([=] { return ad::mean_axis(a, 1); })));
    add_case("mean", run_case({a}, [=] { return ad::mean(a); }));
  }
  // Masked softmax and gather.
  {
    ad::Tensor<T> x = rand_tensor(ad::Shape{3, 5}, rng, -3.0, 3.0);
    ad::Tensor<T> mask = ad::Tensor<T>::zeros(ad::Shape{3, 5});
    for (int64_t r = 0; r < 3; ++r) {
      mask.data()[size_t(r * 5 + rng.uniform_int(5))] = 1.0;
      for (int64_t c = 0; c < 5; ++c)
        if (rng.uniform() < 0.6) mask.data()[size_t(r * 5 + c)] = 1.0;
    }
    add_case("masked_softmax",
             run_case({x}, weighted([=] { return ad::masked_softmax(x, mask); })));
    ad::Tensor<T> table = rand_tensor(ad::Shape{6, 4}, rng);
    std::vector<int64_t> idx = {0, 2, 2, 5, 1, 3};
    add_case("gather",
             run_case({table}, weighted([=] { return ad::gather(table, idx, ad::Shape{2, 3}); })));
  }
  // Time kernel.
  {
    TimeKernel<T> kernel = TimeKernel<T>::create(5);
    for (auto& w : kernel.omegas.data()) w = rng.uniform(0.1, 2.0);
    ad::Tensor<T> dt = rand_tensor(ad::Shape{3, 4}, rng, 0.0, 20.0, false);
    add_case("time_encode",
             run_case({kernel.omegas}, weighted([=] { return kernel.encode(dt); })));
  }
  // Conv layer.
  {
    ConvLayer<T> layer = ConvLayer<T>::create(6, 9, 6, 2, rng);
    ad::Tensor<T> h_q = rand_tensor(ad::Shape{3, 6}, rng);
    ad::Tensor<T> feats = rand_tensor(ad::Shape{3, 4, 9}, rng);
    ad::Tensor<T> mask = ad::Tensor<T>::full(ad::Shape{3, 4}, T(1));
    mask.data()[3] = 0.0;
    std::vector<ad::Tensor<T>> params = {h_q, feats, layer.w_merge};
    for (auto& head : layer.heads) {
      params.push_back(head.w_q);
      params.push_back(head.w_k);
      params.push_back(head.w_v);
    }
    add_case("conv_layer", run_case(params, weighted([=] {
                                      return conv_forward(layer, h_q, feats, mask);
                                    })));
  }
  // Fusion layer.
  {
    FusionLayer<T> fusion = FusionLayer<T>::create(6, rng);
    ad::Tensor<T> h_t = rand_tensor(ad::Shape{4, 6}, rng);
    ad::Tensor<T> h_g = rand_tensor(ad::Shape{4, 6}, rng);
    add_case("fusion_layer",
             run_case({fusion.q, fusion.w_tds, fusion.b_tds, fusion.w_gas, fusion.b_gas, h_t, h_g},
                      weighted([=] { return fuse(fusion, h_t, h_g); })));
  }
  // Prediction head and link loss.
  {
    LinkHead<T> head = LinkHead<T>::create(5, 5, rng);
    ad::Tensor<T> h_u = rand_tensor(ad::Shape{4, 5}, rng);
    ad::Tensor<T> h_v = rand_tensor(ad::Shape{4, 5}, rng);
    add_case("prediction_head", run_case({head.w_u, head.w_v, head.w_out, h_u, h_v},
                                         weighted([=] { return head.predict(h_u, h_v); })));
    ad::Tensor<T> p = rand_tensor(ad::Shape{4, 1}, rng, 0.05, 0.95);
    ad::Tensor<T> q = rand_tensor(ad::Shape{4, 1}, rng, 0.05, 0.95);
    add_case("link_loss", run_case({p, q}, [=] { return link_loss(p, q); }));
  }
  // Attention-sampler aggregation (gradients through scores and values).
  {
    GasModel<T> gas = GasModel<T>::create(4, 0, 2, 3, 3, rng);
    const int64_t C = 4, D = gas.input_dim();
    ad::Tensor<T> feats = rand_tensor(ad::Shape{C, D}, rng);
    ad::Tensor<T> x_anchor = rand_tensor(ad::Shape{1, D}, rng);
    auto fwd = [&gas, feats, x_anchor, C]() {
      ad::Tensor<T> k_u = ad::matmul(x_anchor, gas.w_k);
      ad::Tensor<T> q_c = ad::matmul(feats, gas.w_q);
      ad::Tensor<T> lg =
          ad::reshape(ad::matmul(q_c, ad::reshape(k_u, ad::Shape{gas.d_att, 1})), ad::Shape{C});
      return ad::sum(gas_aggregate(gas, feats, lg, {0, 2, 3}));
    };
    add_case("gas_aggregate", run_case({gas.w_q, gas.w_k, gas.w_v, feats, x_anchor}, fwd));
  }
  // End-to-end: two-layer, two-branch loss over a 10-node graph with frozen
  // sampler draws.
  {
    std::vector<TemporalEdge> edges;
    Rng grng(seed + 1);
    double t = 0.0;
    for (int i = 0; i < 60; ++i) {
      TemporalEdge e;
      e.src = static_cast<int32_t>(grng.uniform_int(10));
      do {
        e.dst = static_cast<int32_t>(grng.uniform_int(10));
      } while (e.dst == e.src);
      e.time = t;
      t += grng.exponential(1.0);
      e.edge_id = i;
      edges.push_back(e);
    }
    TemporalGraph g = TemporalGraph::build(10, std::move(edges));

    TrainConfig cfg;
    cfg.d_model = 8;
    cfg.d_time = 4;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.neighbors = 3;
    cfg.dropout = 0.0;
    DpsModel<T> model = DpsModel<T>::create(g.num_nodes(), 0, cfg, rng);

    DecayRates rates = fit_all(g, chrono_split(g), seed);
    TdsSampler tds(rates);
    GasModel<T> gas = GasModel<T>::create(g.num_nodes(), 0, 8, 4, 8, rng);
    gas.trained = true;
    GasSampler<T> gsampler(gas, g);
    Rng srng(seed + 2);
    auto tds_branch = std::make_shared<BranchContext>(BranchContext{&tds, {}, &srng});
    auto gas_branch = std::make_shared<BranchContext>(BranchContext{&gsampler, {}, &srng});

    const std::vector<int32_t> nodes = {0, 1, 2, 3, 4, 5};
    const std::vector<double> times(nodes.size(), g.max_time() + 0.5);
    auto fwd = [&g, &model, tds_branch, gas_branch, nodes, times]() {
      ad::Tensor<T> h_t = embed_nodes(model, g, *tds_branch, nodes, times, 2);
      ad::Tensor<T> h_g = embed_nodes(model, g, *gas_branch, nodes, times, 2);
      ad::Tensor<T> h = combine_branches(model, h_t, h_g);
      ad::Tensor<T> h_u = ad::slice(h, 0, 0, 2);
      ad::Tensor<T> h_v = ad::slice(h, 0, 2, 2);
      ad::Tensor<T> h_j = ad::slice(h, 0, 4, 2);
      return link_loss(predict_link(model, h_u, h_v), predict_link(model, h_u, h_j));
    };
    add_case("end_to_end_dps", run_case(model.params(), fwd));
  }

  return cases;
}

}  // namespace dps
