#pragma once

// The DPS network: cosine time kernel, interaction features, recursive
// attention convolution over sampled temporal subtrees, sampler fusion, and
// the link prediction head.

#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <vector>

#include "dps/graph.hpp"
#include "dps/nn.hpp"
#include "dps/optim.hpp"
#include "dps/sampler.hpp"
#include "dps/train_common.hpp"

namespace dps {

template <typename T>
struct AttentionHead {
  ad::Tensor<T> w_q;  // (d_query_in, d_head)
  ad::Tensor<T> w_k;  // (d_feat_in, d_head)
  ad::Tensor<T> w_v;  // (d_feat_in, d_head)
};

// One attention-based graph convolution layer: masked softmax over sampled
// neighbors per head, heads concatenated and merged back to model width.
template <typename T>
struct ConvLayer {
  std::vector<AttentionHead<T>> heads;
  ad::Tensor<T> w_merge;  // (H*d_head, d_model)

  static ConvLayer create(int64_t d_query_in, int64_t d_feat_in, int64_t d_model, int heads_n,
                          Rng& rng) {
    ConvLayer l;
    const int64_t d_head = d_model / heads_n;
    for (int h = 0; h < heads_n; ++h) {
      AttentionHead<T> head;
      head.w_q = ad::glorot_init<T>(ad::Shape{d_query_in, d_head}, rng);
      head.w_k = ad::glorot_init<T>(ad::Shape{d_feat_in, d_head}, rng);
      head.w_v = ad::glorot_init<T>(ad::Shape{d_feat_in, d_head}, rng);
      l.heads.push_back(std::move(head));
    }
    l.w_merge = ad::glorot_init<T>(ad::Shape{static_cast<int64_t>(heads_n) * d_head, d_model}, rng);
    return l;
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    for (size_t h = 0; h < heads.size(); ++h) {
      out.emplace_back(prefix + ".h" + std::to_string(h) + ".w_q", heads[h].w_q);
      out.emplace_back(prefix + ".h" + std::to_string(h) + ".w_k", heads[h].w_k);
      out.emplace_back(prefix + ".h" + std::to_string(h) + ".w_v", heads[h].w_v);
    }
    out.emplace_back(prefix + ".w_merge", w_merge);
  }
};

// conv_forward: h_q (B, d_q), neighbor features (B, s, D), mask (B, s).
// Rows with every neighbor masked produce a zero output row.
template <typename T>
ad::Tensor<T> conv_forward(const ConvLayer<T>& layer, const ad::Tensor<T>& h_q,
                           const ad::Tensor<T>& feats, const ad::Tensor<T>& mask,
                           double attn_dropout = 0.0, bool train = false, Rng* rng = nullptr,
                           std::vector<ad::Tensor<T>>* attn_out = nullptr) {
  const int64_t B = feats.shape()[0], s = feats.shape()[1];
  const int64_t d_head = layer.heads.front().w_q.shape()[1];
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_head)));

  std::vector<ad::Tensor<T>> messages;
  messages.reserve(layer.heads.size());
  for (const auto& head : layer.heads) {
    ad::Tensor<T> q = ad::matmul(h_q, head.w_q);  // (B, d_head)
    ad::Tensor<T> k = ad::bmm(feats, head.w_k);   // (B, s, d_head)
    ad::Tensor<T> logits = ad::reshape(ad::bmm(k, ad::reshape(q, ad::Shape{B, d_head, 1})),
                                       ad::Shape{B, s});
    logits = ad::mul(logits, ad::Tensor<T>::scalar(scale));
    ad::Tensor<T> alpha = ad::masked_softmax(logits, mask);
    if (attn_out) attn_out->push_back(alpha);
    if (train && attn_dropout > 0.0) alpha = ad::dropout(alpha, attn_dropout, true, *rng);
    ad::Tensor<T> v = ad::bmm(feats, head.w_v);  // (B, s, d_head)
    ad::Tensor<T> msg = ad::bmm(ad::reshape(alpha, ad::Shape{B, 1, s}), v);
    messages.push_back(ad::reshape(msg, ad::Shape{B, d_head}));
  }
  ad::Tensor<T> merged = messages.size() == 1 ? messages.front() : ad::concat(messages);
  return ad::matmul(merged, layer.w_merge);
}

// Attention-weighted combination of the two sampler branches (Eq.-style
// shared attention vector over sampler-specific transforms).
template <typename T>
struct FusionLayer {
  ad::Tensor<T> q;      // (d,)
  ad::Tensor<T> w_tds;  // (d, d)
  ad::Tensor<T> b_tds;  // (d,)
  ad::Tensor<T> w_gas;  // (d, d)
  ad::Tensor<T> b_gas;  // (d,)

  static FusionLayer create(int64_t d, Rng& rng) {
    FusionLayer f;
    f.q = ad::glorot_init<T>(ad::Shape{d}, rng);
    f.w_tds = ad::glorot_init<T>(ad::Shape{d, d}, rng);
    f.b_tds = ad::Tensor<T>::zeros(ad::Shape{d}, true);
    f.w_gas = ad::glorot_init<T>(ad::Shape{d, d}, rng);
    f.b_gas = ad::Tensor<T>::zeros(ad::Shape{d}, true);
    return f;
  }

  void collect(NamedParams<T>& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".q", q);
    out.emplace_back(prefix + ".w_tds", w_tds);
    out.emplace_back(prefix + ".b_tds", b_tds);
    out.emplace_back(prefix + ".w_gas", w_gas);
    out.emplace_back(prefix + ".b_gas", b_gas);
  }
};

// fuse: omega^S = q . sigmoid(W^S h^S + b^S), alpha = softmax over the two
// branch scores, output = alpha^TDS h^TDS + alpha^GAS h^GAS.
template <typename T>
ad::Tensor<T> fuse(const FusionLayer<T>& fusion, const ad::Tensor<T>& h_tds,
                   const ad::Tensor<T>& h_gas) {
  const int64_t B = h_tds.shape()[0];
  const int64_t d = fusion.q.shape()[0];
  ad::Tensor<T> q_col = ad::reshape(fusion.q, ad::Shape{d, 1});
  ad::Tensor<T> z_tds = ad::sigmoid(ad::add(ad::matmul(h_tds, fusion.w_tds), fusion.b_tds));
  ad::Tensor<T> z_gas = ad::sigmoid(ad::add(ad::matmul(h_gas, fusion.w_gas), fusion.b_gas));
  ad::Tensor<T> w_t = ad::matmul(z_tds, q_col);  // (B, 1)
  ad::Tensor<T> w_g = ad::matmul(z_gas, q_col);  // (B, 1)
  ad::Tensor<T> alpha = ad::masked_softmax(ad::concat<T>({w_t, w_g}));  // (B, 2)
  ad::Tensor<T> a_t = ad::slice(alpha, 1, 0, 1);
  ad::Tensor<T> a_g = ad::slice(alpha, 1, 1, 1);
  (void)B;
  return ad::add(ad::mul(a_t, h_tds), ad::mul(a_g, h_gas));
}

template <typename T>
struct DpsModel {
  int32_t num_nodes = 0;
  int32_t feature_dim = 0;
  int64_t d_model = 0;
  int64_t d_time = 0;
  int layers_n = 1;
  int heads_n = 1;
  int neighbors = 10;
  double dropout = 0.0;
  SamplerMode mode = SamplerMode::kDps;

  ad::Tensor<T> node_table;  // (num_nodes, d_model)
  TimeKernel<T> kernel;
  std::vector<ConvLayer<T>> conv_layers;  // shared across branches
  FusionLayer<T> fusion;                  // kDps / kUniform only
  ad::Tensor<T> w_concat;                 // (2d, d), kNoFusion only
  LinkHead<T> head;

  int64_t feat_dim_in() const { return d_model + d_time + feature_dim; }
  bool uses_fusion() const {
    return mode == SamplerMode::kDps || mode == SamplerMode::kUniform;
  }

  static DpsModel create(int32_t num_nodes, int32_t feature_dim, const TrainConfig& cfg,
                         Rng& rng) {
    DpsModel m;
    m.num_nodes = num_nodes;
    m.feature_dim = feature_dim;
    m.d_model = cfg.d_model;
    m.d_time = cfg.d_time;
    m.layers_n = cfg.layers;
    m.heads_n = cfg.heads;
    m.neighbors = cfg.neighbors;
    m.dropout = cfg.dropout;
    m.mode = cfg.sampler_mode;
    m.node_table = ad::glorot_init<T>(ad::Shape{num_nodes, cfg.d_model}, rng);
    m.kernel = TimeKernel<T>::create(cfg.d_time);
    for (int l = 0; l < cfg.layers; ++l)
      m.conv_layers.push_back(
          ConvLayer<T>::create(cfg.d_model, m.feat_dim_in(), cfg.d_model, cfg.heads, rng));
    if (m.uses_fusion()) m.fusion = FusionLayer<T>::create(cfg.d_model, rng);
    if (m.mode == SamplerMode::kNoFusion)
      m.w_concat = ad::glorot_init<T>(ad::Shape{2 * cfg.d_model, cfg.d_model}, rng);
    m.head = LinkHead<T>::create(cfg.d_model, cfg.d_model, rng);
    return m;
  }

  NamedParams<T> named_params() const {
    NamedParams<T> out;
    out.emplace_back("dps.node_table", node_table);
    out.emplace_back("dps.omegas", kernel.omegas);
    for (size_t l = 0; l < conv_layers.size(); ++l)
      conv_layers[l].collect(out, "dps.conv" + std::to_string(l));
    if (uses_fusion()) fusion.collect(out, "dps.fusion");
    if (mode == SamplerMode::kNoFusion) out.emplace_back("dps.w_concat", w_concat);
    head.collect(out, "dps.head");
    return out;
  }

  std::vector<ad::Tensor<T>> params() const {
    std::vector<ad::Tensor<T>> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }
};

// One sampler draw is reused per (node, time, layer) within a forward pass;
// fresh draws across batches come from clearing the cache.
struct SampleKey {
  int32_t node;
  int32_t layer;
  uint64_t time_bits;
  bool operator==(const SampleKey& o) const {
    return node == o.node && layer == o.layer && time_bits == o.time_bits;
  }
};
struct SampleKeyHash {
  size_t operator()(const SampleKey& k) const {
    uint64_t h = Rng::mix(k.time_bits, static_cast<uint64_t>(k.node) << 8 |
                                           static_cast<uint64_t>(static_cast<uint32_t>(k.layer)));
    return static_cast<size_t>(h);
  }
};
using SampleCache = std::unordered_map<SampleKey, std::vector<NeighborEntry>, SampleKeyHash>;

// Per-branch embedding context: which sampler to use, its draw cache, and the
// rng driving stochastic samplers.
struct BranchContext {
  NeighborSampler* sampler = nullptr;
  SampleCache cache;
  Rng* rng = nullptr;

  const std::vector<NeighborEntry>& draws(const TemporalGraph& g, int32_t node, double time,
                                          int layer, int s) {
    SampleKey key{node, layer, std::bit_cast<uint64_t>(time)};
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    NeighborSet ns = g.neighbors_before(node, time);
    auto drawn = sampler->sample(ns, s, *rng);
    return cache.emplace(key, std::move(drawn)).first->second;
  }
};

namespace model_detail {

// Recursive batched embedding. `pad` marks anchors that only exist as
// padding in the caller's neighbor grid; they produce rows that the caller
// masks away, and they never query the graph.
template <typename T>
ad::Tensor<T> embed_impl(const DpsModel<T>& model, const TemporalGraph& g, BranchContext& branch,
                         const std::vector<int32_t>& nodes, const std::vector<double>& times,
                         const std::vector<uint8_t>& pad, int layer, bool train) {
  const int64_t B = static_cast<int64_t>(nodes.size());
  if (layer == 0) {
    std::vector<int64_t> idx(nodes.begin(), nodes.end());
    return ad::gather(model.node_table, idx, ad::Shape{B});
  }

  const int s = model.neighbors;
  std::vector<int32_t> child_nodes(static_cast<size_t>(B) * s, 0);
  std::vector<double> child_times(static_cast<size_t>(B) * s, 0.0);
  std::vector<uint8_t> child_pad(static_cast<size_t>(B) * s, 1);
  ad::Tensor<T> dt = ad::Tensor<T>::zeros(ad::Shape{B, s});
  ad::Tensor<T> mask = ad::Tensor<T>::zeros(ad::Shape{B, s});
  ad::Tensor<T> feats;
  if (model.feature_dim > 0) feats = ad::Tensor<T>::zeros(ad::Shape{B, s, model.feature_dim});

  for (int64_t i = 0; i < B; ++i) {
    if (pad[static_cast<size_t>(i)]) continue;
    const auto& drawn = branch.draws(g, nodes[static_cast<size_t>(i)],
                                     times[static_cast<size_t>(i)], layer, s);
    for (size_t j = 0; j < drawn.size() && j < static_cast<size_t>(s); ++j) {
      const auto& e = drawn[j];
      const size_t flat = static_cast<size_t>(i) * s + j;
      child_nodes[flat] = e.node;
      child_times[flat] = e.time;
      child_pad[flat] = 0;
      dt.data()[flat] = static_cast<T>(times[static_cast<size_t>(i)] - e.time);
      mask.data()[flat] = T(1);
      if (model.feature_dim > 0) {
        const auto& f = g.edge(e.edge_id).features;
        for (size_t c = 0; c < f.size(); ++c)
          feats.data()[flat * static_cast<size_t>(model.feature_dim) + c] = static_cast<T>(f[c]);
      }
    }
  }

  ad::Tensor<T> child_emb = embed_impl(model, g, branch, child_nodes, child_times, child_pad,
                                       layer - 1, train);
  child_emb = ad::reshape(child_emb, ad::Shape{B, s, model.d_model});
  std::vector<ad::Tensor<T>> parts = {child_emb, model.kernel.encode(dt)};
  if (model.feature_dim > 0) parts.push_back(feats);
  ad::Tensor<T> h_e = ad::concat(parts);  // (B, s, D)
  // Padded slots carry zero feature vectors (Phi(0) would otherwise be ones).
  h_e = ad::mul(h_e, ad::reshape(mask, ad::Shape{B, s, 1}));

  ad::Tensor<T> h_q = embed_impl(model, g, branch, nodes, times, pad, layer - 1, train);
  return conv_forward(model.conv_layers[static_cast<size_t>(layer - 1)], h_q, h_e, mask,
                      model.dropout, train, branch.rng);
}

}  // namespace model_detail

// Batched branch embedding at the top layer.
template <typename T>
ad::Tensor<T> embed_nodes(const DpsModel<T>& model, const TemporalGraph& g, BranchContext& branch,
                          const std::vector<int32_t>& nodes, const std::vector<double>& times,
                          int layer, bool train = false) {
  if (nodes.size() != times.size())
    throw std::invalid_argument("embed_nodes: nodes/times size mismatch");
  std::vector<uint8_t> pad(nodes.size(), 0);
  return model_detail::embed_impl(model, g, branch, nodes, times, pad, layer, train);
}

// Single-node convenience: h_u^layer(t) as a flat vector tensor.
template <typename T>
ad::Tensor<T> embed_node(const DpsModel<T>& model, const TemporalGraph& g, BranchContext& branch,
                         int32_t u, double t, int layer) {
  ad::Tensor<T> h = embed_nodes(model, g, branch, {u}, {t}, layer, false);
  return ad::reshape(h, ad::Shape{model.d_model});
}

// Mode-dependent combination of the branch embeddings (B, d) -> (B, d).
template <typename T>
ad::Tensor<T> combine_branches(const DpsModel<T>& model, const ad::Tensor<T>& h_tds,
                               const ad::Tensor<T>& h_gas) {
  switch (model.mode) {
    case SamplerMode::kDps:
    case SamplerMode::kUniform:
      return fuse(model.fusion, h_tds, h_gas);
    case SamplerMode::kNoFusion:
      return ad::matmul(ad::concat<T>({h_tds, h_gas}), model.w_concat);
    case SamplerMode::kTdsOnly:
      return h_tds;
    case SamplerMode::kGasOnly:
      return h_gas;
  }
  throw std::logic_error("combine_branches: bad mode");
}

// predict_link: sigmoid(W relu(W_u h_u + W_v h_v)) per row.
template <typename T>
ad::Tensor<T> predict_link(const DpsModel<T>& model, const ad::Tensor<T>& h_u,
                           const ad::Tensor<T>& h_v) {
  return model.head.predict(h_u, h_v);
}

// edge_feature: concat(h_v, Phi(dt), m) for a single interaction.
template <typename T>
ad::Tensor<T> edge_feature(const TimeKernel<T>& kernel, const ad::Tensor<T>& h_v, double dt,
                           const std::vector<T>& m) {
  std::vector<ad::Tensor<T>> parts = {ad::reshape(h_v, ad::Shape{1, h_v.shape()[0]}),
                                      ad::reshape(kernel.encode_scalar(dt),
                                                  ad::Shape{1, kernel.dim()})};
  if (!m.empty())
    parts.push_back(ad::Tensor<T>::from_data(ad::Shape{1, static_cast<int64_t>(m.size())},
                                             std::vector<T>(m)));
  ad::Tensor<T> out = ad::concat(parts);
  return ad::reshape(out, ad::Shape{out.shape()[1]});
}

}  // namespace dps
