#pragma once

// Gumbel Attention Sampling: a one-layer attention network over temporal
// neighborhoods, pretrained on link prediction with the Gumbel-softmax trick,
// then used as a deterministic top-s neighbor selector.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <vector>

#include "dps/graph.hpp"
#include "dps/metrics.hpp"
#include "dps/nn.hpp"
#include "dps/optim.hpp"
#include "dps/rng.hpp"
#include "dps/sampler.hpp"
#include "dps/train_common.hpp"

namespace dps {

template <typename T>
struct GasModel {
  int32_t num_nodes = 0;
  int64_t d_node = 0;
  int64_t d_time = 0;
  int64_t d_att = 0;
  int32_t feature_dim = 0;
  ad::Tensor<T> node_table;  // (num_nodes, d_node)
  TimeKernel<T> kernel;
  ad::Tensor<T> w_q;  // (D, d_att), applied to candidates
  ad::Tensor<T> w_k;  // (D, d_att), applied to the anchor
  ad::Tensor<T> w_v;  // (D, d_att)
  double temperature = 1.0;
  bool trained = false;

  // Input arity shared by anchor and candidates: node embedding, time
  // encoding, edge features.
  int64_t input_dim() const { return d_node + d_time + feature_dim; }

  static GasModel create(int32_t num_nodes, int32_t feature_dim, int64_t d_node, int64_t d_time,
                         int64_t d_att, Rng& rng) {
    GasModel m;
    m.num_nodes = num_nodes;
    m.d_node = d_node;
    m.d_time = d_time;
    m.d_att = d_att;
    m.feature_dim = feature_dim;
    m.node_table = ad::glorot_init<T>(ad::Shape{num_nodes, d_node}, rng);
    m.kernel = TimeKernel<T>::create(d_time);
    const int64_t D = m.input_dim();
    m.w_q = ad::glorot_init<T>(ad::Shape{D, d_att}, rng);
    m.w_k = ad::glorot_init<T>(ad::Shape{D, d_att}, rng);
    m.w_v = ad::glorot_init<T>(ad::Shape{D, d_att}, rng);
    return m;
  }

  std::vector<ad::Tensor<T>> params() {
    return {node_table, kernel.omegas, w_q, w_k, w_v};
  }
  NamedParams<T> named_params() const {
    return {{"gas.node_table", node_table},
            {"gas.omegas", kernel.omegas},
            {"gas.w_q", w_q},
            {"gas.w_k", w_k},
            {"gas.w_v", w_v}};
  }
};

// Gumbel noise vector, one draw per candidate: g = -log(-log(eps)) with eps
// clamped to [1e-12, 1-1e-12].
struct GumbelDraw {
  std::vector<double> noise;

  static GumbelDraw sample(size_t n, Rng& rng) {
    GumbelDraw d;
    d.noise.resize(n);
    for (auto& g : d.noise) g = rng.gumbel();
    return d;
  }
};

namespace gas_detail {

// y += W^T x for row-major W (D, d_att).
template <typename T>
void add_projected(const std::vector<T>& w, int64_t d_in, int64_t d_out, const double* x,
                   double* y) {
  for (int64_t r = 0; r < d_in; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const T* wrow = w.data() + r * d_out;
    for (int64_t c = 0; c < d_out; ++c) y[c] += xr * static_cast<double>(wrow[c]);
  }
}

// Anchor input feature: table row, Phi(0) = all-ones, zero edge-feature block.
template <typename T>
std::vector<double> anchor_input(const GasModel<T>& model, int32_t u) {
  std::vector<double> x(static_cast<size_t>(model.input_dim()), 0.0);
  const T* row = model.node_table.data().data() + static_cast<int64_t>(u) * model.d_node;
  for (int64_t i = 0; i < model.d_node; ++i) x[static_cast<size_t>(i)] = row[i];
  for (int64_t i = 0; i < model.d_time; ++i) x[static_cast<size_t>(model.d_node + i)] = 1.0;
  return x;
}

template <typename T>
std::vector<double> candidate_input(const GasModel<T>& model, const TemporalGraph& g,
                                    const NeighborEntry& e, double anchor_time) {
  std::vector<double> x(static_cast<size_t>(model.input_dim()), 0.0);
  const T* row = model.node_table.data().data() + static_cast<int64_t>(e.node) * model.d_node;
  for (int64_t i = 0; i < model.d_node; ++i) x[static_cast<size_t>(i)] = row[i];
  const double dt = anchor_time - e.time;
  for (int64_t i = 0; i < model.d_time; ++i)
    x[static_cast<size_t>(model.d_node + i)] =
        std::cos(static_cast<double>(model.kernel.omegas.data()[static_cast<size_t>(i)]) * dt);
  const auto& feats = g.edge(e.edge_id).features;
  for (size_t i = 0; i < feats.size(); ++i)
    x[static_cast<size_t>(model.d_node + model.d_time) + i] = feats[i];
  return x;
}

}  // namespace gas_detail

// Unnormalized attention scores (W_Q h_k) . (W_K h_u) / sqrt(d_att) for every
// candidate in the neighbor set (inference path, no gradients).
template <typename T>
std::vector<double> gas_scores(const GasModel<T>& model, const TemporalGraph& g,
                               const NeighborSet& ns) {
  if (ns.entries.empty()) throw std::invalid_argument("gas_scores: empty neighbor set");
  const int64_t D = model.input_dim(), A = model.d_att;
  std::vector<double> k_u(static_cast<size_t>(A), 0.0);
  auto xu = gas_detail::anchor_input(model, ns.anchor_node);
  gas_detail::add_projected(model.w_k.data(), D, A, xu.data(), k_u.data());

  std::vector<double> scores(ns.entries.size(), 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(A));
  std::vector<double> q(static_cast<size_t>(A));
  for (size_t i = 0; i < ns.entries.size(); ++i) {
    auto xc = gas_detail::candidate_input(model, g, ns.entries[i], ns.anchor_time);
    std::fill(q.begin(), q.end(), 0.0);
    gas_detail::add_projected(model.w_q.data(), D, A, xc.data(), q.data());
    double dot = 0.0;
    for (int64_t c = 0; c < A; ++c) dot += q[static_cast<size_t>(c)] * k_u[static_cast<size_t>(c)];
    scores[i] = dot * scale;
  }
  return scores;
}

// alpha = softmax((p + g) / tau); sums to one.
inline std::vector<double> gumbel_attention(const std::vector<double>& scores,
                                            const GumbelDraw& draw, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_attention: tau must be positive");
  if (draw.noise.size() != scores.size())
    throw std::invalid_argument("gumbel_attention: draw size mismatch");
  std::vector<double> z(scores.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < z.size(); ++i) {
    z[i] = (scores[i] + draw.noise[i]) / tau;
    mx = std::max(mx, z[i]);
  }
  double total = 0.0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : z) v /= total;
  return z;
}

// Indices of the s largest weights (every index when s >= size), ties broken
// toward the lower index; returned ascending.
inline std::vector<int> gas_select(const std::vector<double>& alpha, int s) {
  if (s < 1) throw std::invalid_argument("gas_select: s must be >= 1");
  std::vector<int> idx(alpha.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (alpha.size() > static_cast<size_t>(s)) {
    std::partial_sort(idx.begin(), idx.begin() + s, idx.end(), [&alpha](int a, int b) {
      if (alpha[static_cast<size_t>(a)] != alpha[static_cast<size_t>(b)])
        return alpha[static_cast<size_t>(a)] > alpha[static_cast<size_t>(b)];
      return a < b;
    });
    idx.resize(static_cast<size_t>(s));
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Differentiable aggregation: renormalizes the attention over the selected
// set (softmax of the logits restricted to the selection) and returns the
// weighted sum of value-projected candidate features. Gradients flow into
// w_q/w_k/w_v and everything feeding `cand_feats` and `logits`.
template <typename T>
ad::Tensor<T> gas_aggregate(const GasModel<T>& model, const ad::Tensor<T>& cand_feats,
                            const ad::Tensor<T>& logits, const std::vector<int>& selected) {
  const int64_t C = cand_feats.shape()[0];
  ad::Tensor<T> selmask = ad::Tensor<T>::zeros(ad::Shape{1, C});
  for (int i : selected) {
    if (i < 0 || i >= C) throw std::invalid_argument("gas_aggregate: selection out of range");
    selmask.data()[static_cast<size_t>(i)] = T(1);
  }
  ad::Tensor<T> alpha_hat = ad::masked_softmax(ad::reshape(logits, ad::Shape{1, C}), selmask);
  ad::Tensor<T> values = ad::matmul(cand_feats, model.w_v);  // (C, d_att)
  return ad::reshape(ad::matmul(alpha_hat, values), ad::Shape{model.d_att});
}

// Inference-mode selection: deterministic top-s by noiseless scores.
template <typename T>
std::vector<NeighborEntry> gas_sample(const GasModel<T>& model, const TemporalGraph& g,
                                      const NeighborSet& ns, int s) {
  if (!model.trained) throw std::logic_error("gas_sample: model is not trained");
  if (ns.entries.empty()) return {};
  if (ns.entries.size() <= static_cast<size_t>(s)) return ns.entries;
  auto scores = gas_scores(model, g, ns);
  auto idx = gas_select(scores, s);
  std::vector<NeighborEntry> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(ns.entries[static_cast<size_t>(i)]);
  return out;
}

// Attention-scored neighbor selection behind the common sampler interface.
// Projections of the node table are cached; they are invalidated implicitly
// because samplers are constructed per run over a frozen model.
template <typename T>
class GasSampler : public NeighborSampler {
 public:
  GasSampler(const GasModel<T>& model, const TemporalGraph& g) : model_(model), g_(g) {
    const int64_t N = model_.num_nodes, A = model_.d_att;
    node_proj_.assign(static_cast<size_t>(N * A), 0.0);
    // W_Q restricted to the node-embedding block, applied to every table row.
    for (int64_t u = 0; u < N; ++u) {
      const T* row = model_.node_table.data().data() + u * model_.d_node;
      double* out = node_proj_.data() + u * A;
      for (int64_t r = 0; r < model_.d_node; ++r) {
        const double xr = static_cast<double>(row[r]);
        const T* wrow = model_.w_q.data().data() + r * A;
        for (int64_t c = 0; c < A; ++c) out[c] += xr * static_cast<double>(wrow[c]);
      }
    }
  }

  std::vector<NeighborEntry> sample(const NeighborSet& ns, int s, Rng&) override {
    count_call();
    if (!model_.trained) throw std::logic_error("GasSampler: model is not trained");
    if (ns.entries.empty()) return {};
    if (ns.entries.size() <= static_cast<size_t>(s)) return ns.entries;

    const int64_t A = model_.d_att, D = model_.input_dim();
    std::vector<double> k_u(static_cast<size_t>(A), 0.0);
    auto xu = gas_detail::anchor_input(model_, ns.anchor_node);
    gas_detail::add_projected(model_.w_k.data(), D, A, xu.data(), k_u.data());

    const double scale = 1.0 / std::sqrt(static_cast<double>(A));
    const auto& omegas = model_.kernel.omegas.data();
    std::vector<double> scores(ns.entries.size());
    std::vector<double> q(static_cast<size_t>(A));
    std::vector<double> tvec(static_cast<size_t>(model_.d_time));
    for (size_t i = 0; i < ns.entries.size(); ++i) {
      const NeighborEntry& e = ns.entries[i];
      const double* base = node_proj_.data() + static_cast<int64_t>(e.node) * A;
      std::copy(base, base + A, q.begin());
      const double dt = ns.anchor_time - e.time;
      for (int64_t r = 0; r < model_.d_time; ++r)
        tvec[static_cast<size_t>(r)] = std::cos(static_cast<double>(omegas[static_cast<size_t>(r)]) * dt);
      // Time block of W_Q starts at row d_node.
      for (int64_t r = 0; r < model_.d_time; ++r) {
        const double xr = tvec[static_cast<size_t>(r)];
        const T* wrow = model_.w_q.data().data() + (model_.d_node + r) * A;
        for (int64_t c = 0; c < A; ++c) q[static_cast<size_t>(c)] += xr * static_cast<double>(wrow[c]);
      }
      if (model_.feature_dim > 0) {
        const auto& feats = g_.edge(e.edge_id).features;
        for (int64_t r = 0; r < model_.feature_dim; ++r) {
          const double xr = feats[static_cast<size_t>(r)];
          if (xr == 0.0) continue;
          const T* wrow = model_.w_q.data().data() + (model_.d_node + model_.d_time + r) * A;
          for (int64_t c = 0; c < A; ++c) q[static_cast<size_t>(c)] += xr * static_cast<double>(wrow[c]);
        }
      }
      double dot = 0.0;
      for (int64_t c = 0; c < A; ++c) dot += q[static_cast<size_t>(c)] * k_u[static_cast<size_t>(c)];
      scores[i] = dot * scale;
    }
    auto idx = gas_select(scores, s);
    std::vector<NeighborEntry> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(ns.entries[static_cast<size_t>(i)]);
    return out;
  }

  std::string name() const override { return "gas"; }

 private:
  const GasModel<T>& model_;
  const TemporalGraph& g_;
  std::vector<double> node_proj_;  // (num_nodes, d_att)
};

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

namespace gas_detail {

// Batched one-layer embedding of `nodes` at `times`. In training mode the
// top-s selection is made on Gumbel-perturbed, temperature-scaled logits;
// at evaluation it is the deterministic top-s of the raw logits.
template <typename T>
ad::Tensor<T> embed_batch(const GasModel<T>& model, const TemporalGraph& g,
                          const std::vector<int32_t>& nodes, const std::vector<double>& times,
                          int s, bool train_mode, double tau, Rng* gumbel_rng) {
  const int64_t A = static_cast<int64_t>(nodes.size());
  int64_t C = 1;
  std::vector<NeighborSet> sets(static_cast<size_t>(A));
  for (int64_t i = 0; i < A; ++i) {
    sets[static_cast<size_t>(i)] = g.neighbors_before(nodes[static_cast<size_t>(i)],
                                                      times[static_cast<size_t>(i)]);
    C = std::max<int64_t>(C, static_cast<int64_t>(sets[static_cast<size_t>(i)].size()));
  }

  std::vector<int64_t> anchor_idx(nodes.begin(), nodes.end());
  std::vector<int64_t> child_idx(static_cast<size_t>(A * C), 0);
  ad::Tensor<T> dt = ad::Tensor<T>::zeros(ad::Shape{A, C});
  ad::Tensor<T> mask = ad::Tensor<T>::zeros(ad::Shape{A, C});
  ad::Tensor<T> feats;
  if (model.feature_dim > 0) feats = ad::Tensor<T>::zeros(ad::Shape{A, C, model.feature_dim});
  for (int64_t i = 0; i < A; ++i) {
    const auto& ns = sets[static_cast<size_t>(i)];
    for (size_t j = 0; j < ns.entries.size(); ++j) {
      const auto& e = ns.entries[j];
      child_idx[static_cast<size_t>(i * C + static_cast<int64_t>(j))] = e.node;
      dt.data()[static_cast<size_t>(i * C + static_cast<int64_t>(j))] =
          static_cast<T>(ns.anchor_time - e.time);
      mask.data()[static_cast<size_t>(i * C + static_cast<int64_t>(j))] = T(1);
      if (model.feature_dim > 0) {
        const auto& f = g.edge(e.edge_id).features;
        for (size_t c = 0; c < f.size(); ++c)
          feats.data()[static_cast<size_t>((i * C + static_cast<int64_t>(j)) * model.feature_dim +
                                           static_cast<int64_t>(c))] = static_cast<T>(f[c]);
      }
    }
  }

  // Anchor features: table row ++ Phi(0)=ones ++ zero feature block.
  ad::Tensor<T> anchor_emb = ad::gather(model.node_table, anchor_idx, ad::Shape{A});
  std::vector<ad::Tensor<T>> anchor_parts = {anchor_emb,
                                             ad::Tensor<T>::full(ad::Shape{A, model.d_time}, T(1))};
  if (model.feature_dim > 0)
    anchor_parts.push_back(ad::Tensor<T>::zeros(ad::Shape{A, model.feature_dim}));
  ad::Tensor<T> x_anchor = ad::concat(anchor_parts);  // (A, D)

  ad::Tensor<T> child_emb = ad::reshape(ad::gather(model.node_table, child_idx, ad::Shape{A * C}),
                                        ad::Shape{A, C, model.d_node});
  std::vector<ad::Tensor<T>> cand_parts = {child_emb, model.kernel.encode(dt)};
  if (model.feature_dim > 0) cand_parts.push_back(feats);
  ad::Tensor<T> x_cand = ad::concat(cand_parts);  // (A, C, D)

  ad::Tensor<T> k_anchor = ad::matmul(x_anchor, model.w_k);                    // (A, d_att)
  ad::Tensor<T> q_cand = ad::bmm(x_cand, model.w_q);                           // (A, C, d_att)
  ad::Tensor<T> logits3 = ad::bmm(q_cand, ad::reshape(k_anchor, ad::Shape{A, model.d_att, 1}));
  ad::Tensor<T> logits = ad::mul(ad::reshape(logits3, ad::Shape{A, C}),
                                 ad::Tensor<T>::scalar(static_cast<T>(
                                     1.0 / std::sqrt(static_cast<double>(model.d_att)))));

  ad::Tensor<T> pre_select = logits;
  if (train_mode) {
    ad::Tensor<T> noise = ad::Tensor<T>::zeros(ad::Shape{A, C});
    for (auto& v : noise.data()) v = static_cast<T>(gumbel_rng->gumbel());
    pre_select = ad::mul(ad::add(logits, noise), ad::Tensor<T>::scalar(static_cast<T>(1.0 / tau)));
  }

  // Top-s among real candidates per row, ties toward the lower index.
  ad::Tensor<T> selmask = ad::Tensor<T>::zeros(ad::Shape{A, C});
  std::vector<double> row(static_cast<size_t>(C));
  for (int64_t i = 0; i < A; ++i) {
    const int64_t live = static_cast<int64_t>(sets[static_cast<size_t>(i)].size());
    if (live == 0) continue;
    if (live <= s) {
      for (int64_t j = 0; j < live; ++j) selmask.data()[static_cast<size_t>(i * C + j)] = T(1);
      continue;
    }
    for (int64_t j = 0; j < live; ++j)
      row[static_cast<size_t>(j)] = static_cast<double>(pre_select.data()[static_cast<size_t>(i * C + j)]);
    std::vector<double> live_row(row.begin(), row.begin() + live);
    for (int sel : gas_select(live_row, s)) selmask.data()[static_cast<size_t>(i * C + sel)] = T(1);
  }

  ad::Tensor<T> alpha_hat = ad::masked_softmax(pre_select, selmask);  // (A, C)
  ad::Tensor<T> values = ad::bmm(x_cand, model.w_v);                  // (A, C, d_att)
  ad::Tensor<T> out = ad::bmm(ad::reshape(alpha_hat, ad::Shape{A, 1, C}), values);
  return ad::reshape(out, ad::Shape{A, model.d_att});
}

}  // namespace gas_detail

struct GasPretrainResult {
  EvalReport report;
};

// Pretrains the one-layer sampler network on temporal link prediction over
// the training edges (one uniform negative per positive), Adam with weight
// decay, temperature annealing, and early stopping on validation AUC. The
// module-local prediction head is discarded; sampler parameters are kept.
template <typename T>
GasModel<T> pretrain_gas(const TemporalGraph& g, const ChronoSplit& split,
                         const TrainConfig& cfg, EvalReport* report_out = nullptr) {
  cfg.validate();
  if (split.train.empty()) throw std::invalid_argument("pretrain_gas: empty training set");

  Rng init_rng(Rng::mix(cfg.seed, 0x6a5));
  GasModel<T> model = GasModel<T>::create(g.num_nodes(), g.feature_dim(), cfg.d_model,
                                          cfg.d_time, cfg.d_model, init_rng);
  LinkHead<T> head = LinkHead<T>::create(model.d_att, model.d_att, init_rng);

  std::vector<ad::Tensor<T>> params = model.params();
  params.push_back(head.w_u);
  params.push_back(head.w_v);
  params.push_back(head.w_out);

  ad::AdamState<T> adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  adam.reset(params);

  // Validation pairs fixed once so early stopping compares like with like.
  Rng val_rng(Rng::mix(cfg.seed, 0x7a1));
  std::vector<int32_t> val_neg;
  for (int32_t id : split.val) val_neg.push_back(sample_negative(g, g.edge(id), val_rng));

  // Chunks pad every anchor to the chunk's widest neighborhood, so edges are
  // packed by neighborhood size to keep chunks homogeneous.
  auto cost_of = [&g](int32_t src, int32_t dst, int32_t neg, double t) {
    return std::max({g.degree_before(src, t), g.degree_before(dst, t),
                     g.degree_before(neg, t)});
  };
  std::vector<size_t> val_order(split.val.size());
  std::iota(val_order.begin(), val_order.end(), size_t(0));
  std::stable_sort(val_order.begin(), val_order.end(), [&](size_t a, size_t b) {
    const auto& ea = g.edge(split.val[a]);
    const auto& eb = g.edge(split.val[b]);
    return cost_of(ea.src, ea.dst, val_neg[a], ea.time) <
           cost_of(eb.src, eb.dst, val_neg[b], eb.time);
  });

  auto evaluate_val = [&]() {
    if (split.val.empty()) return 0.5;
    std::vector<double> pos_scores, neg_scores;
    const size_t chunk = 64;
    for (size_t off = 0; off < split.val.size(); off += chunk) {
      const size_t n = std::min(chunk, split.val.size() - off);
      std::vector<int32_t> nodes;
      std::vector<double> times;
      for (size_t i = 0; i < n; ++i) {
        const auto& e = g.edge(split.val[val_order[off + i]]);
        nodes.push_back(e.src);
        nodes.push_back(e.dst);
        nodes.push_back(val_neg[val_order[off + i]]);
        times.push_back(e.time);
        times.push_back(e.time);
        times.push_back(e.time);
      }
      ad::Tensor<T> h = gas_detail::embed_batch(model, g, nodes, times, cfg.neighbors, false,
                                                1.0, nullptr);
      const int64_t n64 = static_cast<int64_t>(n);
      std::vector<int64_t> u_rows, v_rows, j_rows;
      for (int64_t i = 0; i < n64; ++i) {
        u_rows.push_back(3 * i);
        v_rows.push_back(3 * i + 1);
        j_rows.push_back(3 * i + 2);
      }
      ad::Tensor<T> p_pos = head.predict(ad::gather(h, u_rows, ad::Shape{n64}),
                                         ad::gather(h, v_rows, ad::Shape{n64}));
      ad::Tensor<T> p_neg = head.predict(ad::gather(h, u_rows, ad::Shape{n64}),
                                         ad::gather(h, j_rows, ad::Shape{n64}));
      for (int64_t i = 0; i < n64; ++i) {
        pos_scores.push_back(static_cast<double>(p_pos.at(i, 0)));
        neg_scores.push_back(static_cast<double>(p_neg.at(i, 0)));
      }
    }
    return auc_score(pos_scores, neg_scores);
  };

  EarlyStopper stopper(cfg.patience);
  ParamSnapshot<T> best;
  best.capture(params);
  EvalReport report;

  Rng gumbel_rng(Rng::mix(cfg.seed, 0x6b3));
  Rng neg_rng(Rng::mix(cfg.seed, 0x6c4));
  std::vector<int32_t> order(split.train.begin(), split.train.end());

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double tau = std::max(cfg.tau_floor, cfg.tau_start * std::pow(cfg.tau_decay, epoch));
    model.temperature = tau;
    Rng shuffle_rng(Rng::mix(cfg.seed, 0x800 + static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int64_t>(i)));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    int64_t batches = 0;
    const size_t kChunkEdges = 64;  // bounds peak memory on dense neighborhoods
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const double inv_pairs = 1.0 / static_cast<double>(stop - start);

      // Negatives for the whole batch, then edges packed by neighborhood
      // size so chunk padding stays tight.
      struct BatchEdge {
        int32_t id;
        int32_t neg;
        int64_t cost;
      };
      std::vector<BatchEdge> batch_edges;
      for (size_t i = start; i < stop; ++i) {
        const auto& e = g.edge(order[i]);
        const int32_t neg = sample_negative(g, e, neg_rng);
        batch_edges.push_back({order[i], neg, cost_of(e.src, e.dst, neg, e.time)});
      }
      std::stable_sort(batch_edges.begin(), batch_edges.end(),
                       [](const BatchEdge& a, const BatchEdge& b) { return a.cost < b.cost; });

      double batch_loss = 0.0;
      ad::Tape<T> tape;
      for (size_t coff = 0; coff < batch_edges.size(); coff += kChunkEdges) {
        const size_t cn = std::min(kChunkEdges, batch_edges.size() - coff);
        std::vector<int32_t> nodes;
        std::vector<double> times;
        for (size_t i = 0; i < cn; ++i) {
          const auto& e = g.edge(batch_edges[coff + i].id);
          nodes.push_back(e.src);
          nodes.push_back(e.dst);
          nodes.push_back(batch_edges[coff + i].neg);
          times.push_back(e.time);
          times.push_back(e.time);
          times.push_back(e.time);
        }
        typename ad::Tape<T>::Scope scope(tape);
        ad::Tensor<T> h =
            gas_detail::embed_batch(model, g, nodes, times, cfg.neighbors, true, tau, &gumbel_rng);
        const int64_t n64 = static_cast<int64_t>(cn);
        std::vector<int64_t> u_rows, v_rows, j_rows;
        for (int64_t i = 0; i < n64; ++i) {
          u_rows.push_back(3 * i);
          v_rows.push_back(3 * i + 1);
          j_rows.push_back(3 * i + 2);
        }
        ad::Tensor<T> h_u = ad::gather(h, u_rows, ad::Shape{n64});
        ad::Tensor<T> p_pos = head.predict(h_u, ad::gather(h, v_rows, ad::Shape{n64}));
        ad::Tensor<T> p_neg = head.predict(h_u, ad::gather(h, j_rows, ad::Shape{n64}));
        // Chunk contribution to the batch-mean loss; gradients accumulate
        // across chunk backwards until the optimizer step.
        ad::Tensor<T> chunk_loss = ad::mul(
            link_loss(p_pos, p_neg),
            ad::Tensor<T>::scalar(static_cast<T>(static_cast<double>(cn) * inv_pairs)));
        batch_loss += static_cast<double>(chunk_loss.item());
        tape.backward(chunk_loss);
      }
      adam_step(adam, params);
      epoch_loss += batch_loss;
      ++batches;
    }
    report.loss_history.push_back(epoch_loss / std::max<int64_t>(1, batches));
    report.epochs = epoch + 1;

    const double val_auc = evaluate_val();
    if (stopper.update(val_auc, epoch)) best.capture(params);
    if (stopper.should_stop()) break;
  }

  best.restore(params);
  report.val_auc = stopper.best();
  report.best_epoch = stopper.best_epoch();
  if (report_out) *report_out = report;
  model.trained = true;
  return model;
}

}  // namespace dps
