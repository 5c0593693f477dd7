#pragma once

// Training loops, evaluation, ablation variants and the temporal node
// classification head.

#include <algorithm>
#include <memory>
#include <optional>
#include <vector>

#include "dps/gas.hpp"
#include "dps/graph.hpp"
#include "dps/metrics.hpp"
#include "dps/model.hpp"
#include "dps/sampler.hpp"
#include "dps/tds.hpp"
#include "dps/train_common.hpp"

namespace dps {

// Everything needed to evaluate a trained run: the network plus the sampler
// states its mode requires.
template <typename T>
struct DpsBundle {
  DpsModel<T> model;
  DecayRates rates;  // used by kDps / kTdsOnly / kNoFusion
  GasModel<T> gas;   // used by kDps / kGasOnly / kNoFusion

  bool uses_tds() const {
    return model.mode == SamplerMode::kDps || model.mode == SamplerMode::kTdsOnly ||
           model.mode == SamplerMode::kNoFusion;
  }
  bool uses_gas() const {
    return model.mode == SamplerMode::kDps || model.mode == SamplerMode::kGasOnly ||
           model.mode == SamplerMode::kNoFusion;
  }
};

struct SamplerUsage {
  uint64_t tds_calls = 0;
  uint64_t gas_calls = 0;
  uint64_t uniform_calls = 0;
};

// Inference/training forward over a bundle: owns the per-run sampler
// instances (and their instrumentation counters).
template <typename T>
class DpsForward {
 public:
  DpsForward(const TemporalGraph& g, DpsBundle<T>& bundle) : g_(g), bundle_(bundle) {
    if (bundle_.uses_tds()) tds_ = std::make_unique<TdsSampler>(bundle_.rates);
    if (bundle_.uses_gas()) gas_ = std::make_unique<GasSampler<T>>(bundle_.gas, g_);
    if (bundle_.model.mode == SamplerMode::kUniform)
      uniform_ = std::make_unique<UniformSampler>();
  }

  // Combined (mode-dependent) embedding of the anchors; fresh sampler draws
  // per call.
  ad::Tensor<T> embed(const std::vector<int32_t>& nodes, const std::vector<double>& times,
                      bool train, Rng& rng) {
    DpsModel<T>& m = bundle_.model;
    const int L = m.layers_n;
    switch (m.mode) {
      case SamplerMode::kDps:
      case SamplerMode::kNoFusion: {
        BranchContext bt{tds_.get(), {}, &rng};
        BranchContext bg{gas_.get(), {}, &rng};
        ad::Tensor<T> h_t = embed_nodes(m, g_, bt, nodes, times, L, train);
        ad::Tensor<T> h_g = embed_nodes(m, g_, bg, nodes, times, L, train);
        return combine_branches(m, h_t, h_g);
      }
      case SamplerMode::kUniform: {
        BranchContext b1{uniform_.get(), {}, &rng};
        BranchContext b2{uniform_.get(), {}, &rng};
        ad::Tensor<T> h_t = embed_nodes(m, g_, b1, nodes, times, L, train);
        ad::Tensor<T> h_g = embed_nodes(m, g_, b2, nodes, times, L, train);
        return combine_branches(m, h_t, h_g);
      }
      case SamplerMode::kTdsOnly: {
        BranchContext bt{tds_.get(), {}, &rng};
        return embed_nodes(m, g_, bt, nodes, times, L, train);
      }
      case SamplerMode::kGasOnly: {
        BranchContext bg{gas_.get(), {}, &rng};
        return embed_nodes(m, g_, bg, nodes, times, L, train);
      }
    }
    throw std::logic_error("DpsForward: bad mode");
  }

  SamplerUsage usage() const {
    SamplerUsage u;
    if (tds_) u.tds_calls = tds_->calls();
    if (gas_) u.gas_calls = gas_->calls();
    if (uniform_) u.uniform_calls = uniform_->calls();
    return u;
  }

  DpsModel<T>& bundle_model() { return bundle_.model; }

 private:
  const TemporalGraph& g_;
  DpsBundle<T>& bundle_;
  std::unique_ptr<TdsSampler> tds_;
  std::unique_ptr<GasSampler<T>> gas_;
  std::unique_ptr<UniformSampler> uniform_;
};

// Scores positives against one sampled negative each; negatives come from
// `neg_rng` (pass a fixed-seed rng to make evaluation reproducible).
template <typename T>
EvalReport evaluate_links(DpsForward<T>& fwd, const TemporalGraph& g,
                          const std::vector<int32_t>& edge_ids, Rng& neg_rng,
                          Rng& sampler_rng) {
  if (edge_ids.empty()) throw std::invalid_argument("evaluate_links: no positives");
  std::vector<double> pos_scores, neg_scores;
  const size_t chunk = 128;
  for (size_t off = 0; off < edge_ids.size(); off += chunk) {
    const size_t n = std::min(chunk, edge_ids.size() - off);
    std::vector<int32_t> nodes;
    std::vector<double> times;
    for (size_t i = 0; i < n; ++i) {
      const auto& e = g.edge(edge_ids[off + i]);
      const int32_t neg = sample_negative(g, e, neg_rng);
      nodes.push_back(e.src);
      nodes.push_back(e.dst);
      nodes.push_back(neg);
      times.push_back(e.time);
      times.push_back(e.time);
      times.push_back(e.time);
    }
    ad::Tensor<T> h = fwd.embed(nodes, times, false, sampler_rng);
    const int64_t n64 = static_cast<int64_t>(n);
    std::vector<int64_t> u_rows, v_rows, j_rows;
    for (int64_t i = 0; i < n64; ++i) {
      u_rows.push_back(3 * i);
      v_rows.push_back(3 * i + 1);
      j_rows.push_back(3 * i + 2);
    }
    ad::Tensor<T> h_u = ad::gather(h, u_rows, ad::Shape{n64});
    ad::Tensor<T> p_pos = fwd.bundle_model().head.predict(h_u, ad::gather(h, v_rows, ad::Shape{n64}));
    ad::Tensor<T> p_neg = fwd.bundle_model().head.predict(h_u, ad::gather(h, j_rows, ad::Shape{n64}));
    for (int64_t i = 0; i < n64; ++i) {
      pos_scores.push_back(static_cast<double>(p_pos.at(i, 0)));
      neg_scores.push_back(static_cast<double>(p_neg.at(i, 0)));
    }
  }
  EvalReport report;
  report.n_pos = static_cast<int64_t>(pos_scores.size());
  report.n_neg = static_cast<int64_t>(neg_scores.size());
  report.accuracy = accuracy_score(pos_scores, neg_scores);
  report.auc = auc_score(pos_scores, neg_scores);
  return report;
}

template <typename T>
struct TrainResult {
  DpsBundle<T> bundle;
  EvalReport report;  // loss history + best validation AUC
  SamplerUsage usage;
};

// Trains the fusion network on temporal link prediction: shuffled
// mini-batches, one uniform negative per positive, Adam with decoupled weight
// decay, early stopping on validation AUC restoring the best epoch.
template <typename T>
TrainResult<T> train_dps(const TemporalGraph& g, const ChronoSplit& split,
                         const DecayRates* rates, const GasModel<T>* gas,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw std::invalid_argument("train_dps: empty training set");

  TrainResult<T> result;
  result.bundle.model = [&] {
    Rng init_rng(Rng::mix(cfg.seed, 0xd45));
    return DpsModel<T>::create(g.num_nodes(), g.feature_dim(), cfg, init_rng);
  }();
  DpsBundle<T>& bundle = result.bundle;
  if (bundle.uses_tds()) {
    if (!rates) throw std::invalid_argument("train_dps: mode requires fitted decay rates");
    bundle.rates = *rates;
  }
  if (bundle.uses_gas()) {
    if (!gas) throw std::invalid_argument("train_dps: mode requires a pretrained GAS model");
    if (!gas->trained) throw std::invalid_argument("train_dps: GAS model is not trained");
    bundle.gas = *gas;
  }

  DpsForward<T> fwd(g, bundle);
  std::vector<ad::Tensor<T>> params = bundle.model.params();
  ad::AdamState<T> adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  adam.reset(params);

  // Validation pairs are fixed once per run.
  Rng val_rng(Rng::mix(cfg.seed, 0xd46));
  Rng val_sampler_rng(Rng::mix(cfg.seed, 0xd47));
  std::vector<int32_t> val_neg;
  for (int32_t id : split.val) val_neg.push_back(sample_negative(g, g.edge(id), val_rng));

  auto evaluate_val = [&]() -> double {
    if (split.val.empty()) return 0.5;
    std::vector<double> pos_scores, neg_scores;
    Rng srng(Rng::mix(cfg.seed, 0xd48));  // same sampler draws every epoch
    const size_t chunk = 128;
    for (size_t off = 0; off < split.val.size(); off += chunk) {
      const size_t n = std::min(chunk, split.val.size() - off);
      std::vector<int32_t> nodes;
      std::vector<double> times;
      for (size_t i = 0; i < n; ++i) {
        const auto& e = g.edge(split.val[off + i]);
        nodes.push_back(e.src);
        nodes.push_back(e.dst);
        nodes.push_back(val_neg[off + i]);
        times.push_back(e.time);
        times.push_back(e.time);
        times.push_back(e.time);
      }
      ad::Tensor<T> h = fwd.embed(nodes, times, false, srng);
      const int64_t n64 = static_cast<int64_t>(n);
      std::vector<int64_t> u_rows, v_rows, j_rows;
      for (int64_t i = 0; i < n64; ++i) {
        u_rows.push_back(3 * i);
        v_rows.push_back(3 * i + 1);
        j_rows.push_back(3 * i + 2);
      }
      ad::Tensor<T> h_u = ad::gather(h, u_rows, ad::Shape{n64});
      ad::Tensor<T> p_pos =
          bundle.model.head.predict(h_u, ad::gather(h, v_rows, ad::Shape{n64}));
      ad::Tensor<T> p_neg =
          bundle.model.head.predict(h_u, ad::gather(h, j_rows, ad::Shape{n64}));
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

  Rng train_rng(Rng::mix(cfg.seed, 0xd49));
  std::vector<int32_t> order(split.train.begin(), split.train.end());

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(cfg.seed, 0xd50 + static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int64_t>(i)));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t n = std::min(order.size() - start, static_cast<size_t>(cfg.batch_size));
      std::vector<int32_t> nodes;
      std::vector<double> times;
      for (size_t i = 0; i < n; ++i) {
        const auto& e = g.edge(order[start + i]);
        const int32_t neg = sample_negative(g, e, train_rng);
        nodes.push_back(e.src);
        nodes.push_back(e.dst);
        nodes.push_back(neg);
        times.push_back(e.time);
        times.push_back(e.time);
        times.push_back(e.time);
      }
      ad::Tape<T> tape;
      {
        typename ad::Tape<T>::Scope scope(tape);
        ad::Tensor<T> h = fwd.embed(nodes, times, true, train_rng);
        const int64_t n64 = static_cast<int64_t>(n);
        std::vector<int64_t> u_rows, v_rows, j_rows;
        for (int64_t i = 0; i < n64; ++i) {
          u_rows.push_back(3 * i);
          v_rows.push_back(3 * i + 1);
          j_rows.push_back(3 * i + 2);
        }
        // Dropout on the fused embedding (attention dropout lives inside the
        // conv layers).
        h = ad::dropout(h, cfg.dropout, true, train_rng);
        ad::Tensor<T> h_u = ad::gather(h, u_rows, ad::Shape{n64});
        ad::Tensor<T> p_pos = bundle.model.head.predict(h_u, ad::gather(h, v_rows, ad::Shape{n64}));
        ad::Tensor<T> p_neg = bundle.model.head.predict(h_u, ad::gather(h, j_rows, ad::Shape{n64}));
        ad::Tensor<T> loss = link_loss(p_pos, p_neg);
        epoch_loss += static_cast<double>(loss.item());
        tape.backward(loss);
      }
      adam_step(adam, params);
      ++batches;
    }
    result.report.loss_history.push_back(epoch_loss / std::max<int64_t>(1, batches));
    result.report.epochs = epoch + 1;

    const double val_auc = evaluate_val();
    if (stopper.update(val_auc, epoch)) best.capture(params);
    if (stopper.should_stop()) break;
  }

  best.restore(params);
  result.report.val_auc = stopper.best();
  result.report.best_epoch = stopper.best_epoch();
  result.usage = fwd.usage();
  return result;
}

template <typename T>
struct AblationRow {
  SamplerMode mode;
  EvalReport report;
  SamplerUsage usage;
  DpsBundle<T> bundle;
};

// Runs the five sampler-mode variants with a shared seed and evaluates each
// on the test split. The wiring contract is asserted: single-sampler modes
// must never have invoked the other sampler.
template <typename T>
std::vector<AblationRow<T>> ablation_run(const TemporalGraph& g, const ChronoSplit& split,
                                         const DecayRates& rates, const GasModel<T>& gas,
                                         const TrainConfig& base_cfg) {
  std::vector<AblationRow<T>> table;
  for (SamplerMode mode : {SamplerMode::kDps, SamplerMode::kTdsOnly, SamplerMode::kGasOnly,
                           SamplerMode::kNoFusion, SamplerMode::kUniform}) {
    TrainConfig cfg = base_cfg;
    cfg.sampler_mode = mode;
    const DecayRates* r = nullptr;
    const GasModel<T>* gm = nullptr;
    if (mode == SamplerMode::kDps || mode == SamplerMode::kTdsOnly ||
        mode == SamplerMode::kNoFusion)
      r = &rates;
    if (mode == SamplerMode::kDps || mode == SamplerMode::kGasOnly ||
        mode == SamplerMode::kNoFusion)
      gm = &gas;
    TrainResult<T> res = train_dps<T>(g, split, r, gm, cfg);

    Rng neg_rng(Rng::mix(cfg.seed, 0xab1));
    Rng sampler_rng(Rng::mix(cfg.seed, 0xab2));
    DpsForward<T> fwd(g, res.bundle);
    EvalReport test = evaluate_links<T>(fwd, g, split.test, neg_rng, sampler_rng);
    test.loss_history = res.report.loss_history;
    test.epochs = res.report.epochs;
    test.best_epoch = res.report.best_epoch;
    test.val_auc = res.report.val_auc;

    SamplerUsage usage = res.usage;
    const SamplerUsage eval_usage = fwd.usage();
    usage.tds_calls += eval_usage.tds_calls;
    usage.gas_calls += eval_usage.gas_calls;
    usage.uniform_calls += eval_usage.uniform_calls;

    // Instrumented wiring assertions.
    if (mode == SamplerMode::kTdsOnly && usage.gas_calls != 0)
      throw std::logic_error("ablation: TDS_only run touched the GAS sampler");
    if (mode == SamplerMode::kGasOnly && usage.tds_calls != 0)
      throw std::logic_error("ablation: GAS_only run touched the TDS sampler");
    if (mode == SamplerMode::kUniform && (usage.tds_calls != 0 || usage.gas_calls != 0))
      throw std::logic_error("ablation: uniform run touched a learned sampler");

    table.push_back({mode, test, usage, std::move(res.bundle)});
  }
  return table;
}

// ---------------------------------------------------------------------------
// Temporal node classification
// ---------------------------------------------------------------------------

// Three-layer perceptron with hidden widths {80, 10, 1}.
template <typename T>
struct NodeClassifierHead {
  ad::Tensor<T> w1, b1, w2, b2, w3, b3;

  static NodeClassifierHead create(int64_t d_in, Rng& rng) {
    NodeClassifierHead h;
    h.w1 = ad::glorot_init<T>(ad::Shape{d_in, 80}, rng);
    h.b1 = ad::Tensor<T>::zeros(ad::Shape{80}, true);
    h.w2 = ad::glorot_init<T>(ad::Shape{80, 10}, rng);
    h.b2 = ad::Tensor<T>::zeros(ad::Shape{10}, true);
    h.w3 = ad::glorot_init<T>(ad::Shape{10, 1}, rng);
    h.b3 = ad::Tensor<T>::zeros(ad::Shape{1}, true);
    return h;
  }

  ad::Tensor<T> forward(const ad::Tensor<T>& x) const {
    ad::Tensor<T> h1 = ad::relu(ad::add(ad::matmul(x, w1), b1));
    ad::Tensor<T> h2 = ad::relu(ad::add(ad::matmul(h1, w2), b2));
    return ad::sigmoid(ad::add(ad::matmul(h2, w3), b3));
  }

  std::vector<ad::Tensor<T>> params() { return {w1, b1, w2, b2, w3, b3}; }
};

struct NodeClassifierConfig {
  int batch_size = 100;
  double lr = 1e-3;
  double weight_decay = 0.0;
  int patience = 10;
  int max_epochs = 200;
  uint64_t seed = 1;
};

// Fits the MLP on precomputed embeddings with per-batch minority
// oversampling to a balanced label ratio. Reports AUC on the test portion.
template <typename T>
std::pair<NodeClassifierHead<T>, EvalReport> fit_node_classifier(
    const ad::Tensor<T>& x_train, const std::vector<int>& y_train, const ad::Tensor<T>& x_val,
    const std::vector<int>& y_val, const ad::Tensor<T>& x_test, const std::vector<int>& y_test,
    const NodeClassifierConfig& cfg) {
  const int64_t d = x_train.shape()[1];
  std::vector<int64_t> pos_rows, neg_rows;
  for (size_t i = 0; i < y_train.size(); ++i)
    (y_train[i] ? pos_rows : neg_rows).push_back(static_cast<int64_t>(i));
  if (pos_rows.empty() || neg_rows.empty())
    throw std::invalid_argument("fit_node_classifier: training labels are single-class");

  Rng rng(Rng::mix(cfg.seed, 0xc1f));
  NodeClassifierHead<T> head = NodeClassifierHead<T>::create(d, rng);
  auto params = head.params();
  ad::AdamState<T> adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  adam.reset(params);

  auto scores_of = [&head](const ad::Tensor<T>& x) {
    ad::Tensor<T> p = head.forward(x);
    std::vector<double> out(static_cast<size_t>(p.shape()[0]));
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(p.at(int64_t(i), 0));
    return out;
  };
  auto auc_of = [&scores_of](const ad::Tensor<T>& x, const std::vector<int>& y) {
    auto s = scores_of(x);
    std::vector<double> pos, neg;
    for (size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(s[i]);
    if (pos.empty() || neg.empty()) return 0.5;
    return auc_score(pos, neg);
  };

  // The majority stream drives epoch length; the minority class is
  // oversampled with replacement to balance every batch.
  const bool pos_minority = pos_rows.size() <= neg_rows.size();
  std::vector<int64_t>& majority = pos_minority ? neg_rows : pos_rows;
  std::vector<int64_t>& minority = pos_minority ? pos_rows : neg_rows;

  EarlyStopper stopper(cfg.patience);
  ParamSnapshot<T> best;
  best.capture(params);
  EvalReport report;

  const int64_t half = std::max<int64_t>(1, cfg.batch_size / 2);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(cfg.seed, 0xc20 + static_cast<uint64_t>(epoch)));
    for (size_t i = majority.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int64_t>(i)));
      std::swap(majority[i - 1], majority[j]);
    }
    double epoch_loss = 0.0;
    int64_t batches = 0;
    for (size_t start = 0; start < majority.size(); start += static_cast<size_t>(half)) {
      const int64_t n_maj =
          static_cast<int64_t>(std::min(majority.size() - start, static_cast<size_t>(half)));
      std::vector<int64_t> rows;
      std::vector<T> labels;
      for (int64_t i = 0; i < n_maj; ++i) {
        rows.push_back(majority[start + static_cast<size_t>(i)]);
        labels.push_back(pos_minority ? T(0) : T(1));
      }
      for (int64_t i = 0; i < n_maj; ++i) {  // balanced by construction
        rows.push_back(minority[static_cast<size_t>(
            shuffle_rng.uniform_int(static_cast<int64_t>(minority.size())))]);
        labels.push_back(pos_minority ? T(1) : T(0));
      }
      const int64_t B = static_cast<int64_t>(rows.size());
      ad::Tape<T> tape;
      {
        typename ad::Tape<T>::Scope scope(tape);
        ad::Tensor<T> x = ad::gather(x_train, rows, ad::Shape{B});
        ad::Tensor<T> p = ad::clamp(head.forward(x), T(1e-7), T(1.0 - 1e-7));
        ad::Tensor<T> y = ad::Tensor<T>::from_data(ad::Shape{B, 1}, std::move(labels));
        ad::Tensor<T> one = ad::Tensor<T>::scalar(T(1));
        ad::Tensor<T> zero = ad::Tensor<T>::scalar(T(0));
        ad::Tensor<T> ll = ad::add(ad::mul(y, ad::log(p)),
                                   ad::mul(ad::sub(one, y), ad::log(ad::sub(one, p))));
        ad::Tensor<T> loss = ad::mean(ad::sub(zero, ll));
        epoch_loss += static_cast<double>(loss.item());
        tape.backward(loss);
      }
      adam_step(adam, params);
      ++batches;
    }
    report.loss_history.push_back(epoch_loss / std::max<int64_t>(1, batches));
    report.epochs = epoch + 1;

    const double val_auc = auc_of(x_val, y_val);
    if (stopper.update(val_auc, epoch)) best.capture(params);
    if (stopper.should_stop()) break;
  }
  best.restore(params);
  report.val_auc = stopper.best();
  report.best_epoch = stopper.best_epoch();

  // Test metrics on the imbalanced distribution.
  auto s = scores_of(x_test);
  std::vector<double> pos, neg;
  for (size_t i = 0; i < y_test.size(); ++i) (y_test[i] ? pos : neg).push_back(s[i]);
  report.n_pos = static_cast<int64_t>(pos.size());
  report.n_neg = static_cast<int64_t>(neg.size());
  if (!pos.empty() && !neg.empty()) {
    report.auc = auc_score(pos, neg);
    report.accuracy = accuracy_score(pos, neg);
  }
  return {std::move(head), report};
}

// Chronological split of label events by the same ratios as edges.
struct LabelSplit {
  std::vector<size_t> train, val, test;
};

inline LabelSplit label_chrono_split(const std::vector<LabelEvent>& events,
                                     std::array<double, 3> ratios = {0.70, 0.15, 0.15}) {
  LabelSplit out;
  const size_t n = events.size();
  const auto b1 = static_cast<size_t>(std::floor(ratios[0] * static_cast<double>(n)));
  const auto b2 = static_cast<size_t>(std::floor((ratios[0] + ratios[1]) * static_cast<double>(n)));
  for (size_t i = 0; i < n; ++i) {
    if (i < b1)
      out.train.push_back(i);
    else if (i < b2)
      out.val.push_back(i);
    else
      out.test.push_back(i);
  }
  return out;
}

// Embeds each labeled (node, time) with the frozen model and fits the MLP.
template <typename T>
std::pair<NodeClassifierHead<T>, EvalReport> train_node_classifier(
    DpsForward<T>& fwd, const TemporalGraph&, const std::vector<LabelEvent>& events,
    const NodeClassifierConfig& cfg) {
  if (events.empty()) throw std::invalid_argument("train_node_classifier: no label events");
  LabelSplit split = label_chrono_split(events);

  Rng srng(Rng::mix(cfg.seed, 0xc30));
  auto embed_part = [&](const std::vector<size_t>& idx, std::vector<int>& labels) {
    labels.clear();
    const int64_t n = static_cast<int64_t>(idx.size());
    std::vector<T> flat;
    int64_t d = 0;
    const size_t chunk = 256;
    for (size_t off = 0; off < idx.size(); off += chunk) {
      const size_t c = std::min(chunk, idx.size() - off);
      std::vector<int32_t> nodes;
      std::vector<double> times;
      for (size_t i = 0; i < c; ++i) {
        const auto& ev = events[idx[off + i]];
        nodes.push_back(ev.node);
        times.push_back(ev.time);
        labels.push_back(ev.label);
      }
      ad::Tensor<T> h = fwd.embed(nodes, times, false, srng);
      d = h.shape()[1];
      flat.insert(flat.end(), h.data().begin(), h.data().end());
    }
    return ad::Tensor<T>::from_data(ad::Shape{n, d}, std::move(flat));
  };

  std::vector<int> y_train, y_val, y_test;
  ad::Tensor<T> x_train = embed_part(split.train, y_train);
  ad::Tensor<T> x_val = embed_part(split.val, y_val);
  ad::Tensor<T> x_test = embed_part(split.test, y_test);
  return fit_node_classifier<T>(x_train, y_train, x_val, y_val, x_test, y_test, cfg);
}

}  // namespace dps
