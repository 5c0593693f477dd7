#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dps/gas.hpp"
#include "test_util.hpp"

using namespace dps;
using dps::testutil::random_tensor;

using T = double;

namespace {

NeighborSet make_ns(int32_t anchor, double t, const std::vector<std::pair<int32_t, double>>& nb) {
  NeighborSet ns;
  ns.anchor_node = anchor;
  ns.anchor_time = t;
  for (size_t i = 0; i < nb.size(); ++i)
    ns.entries.push_back({nb[i].first, nb[i].second, static_cast<int32_t>(i)});
  return ns;
}

}  // namespace

TEST_CASE("gas_scores: identical candidates score identically; orthogonal inputs score zero") {
  TemporalGraph g = testutil::random_graph(6, 12, 1);
  Rng rng(2);
  GasModel<T> model = GasModel<T>::create(6, 0, 4, 2, 6, rng);

  NeighborSet ns = make_ns(0, 10.0, {{3, 4.0}, {3, 4.0}, {2, 1.0}});
  ns.entries[1].edge_id = ns.entries[0].edge_id;  // same interaction content
  auto scores = gas_scores(model, g, ns);
  REQUIRE(scores.size() == 3);
  CHECK(scores[0] == scores[1]);

  CHECK_THROWS_AS(gas_scores(model, g, make_ns(0, 1.0, {})), std::invalid_argument);

  // Identity-padded transforms with orthogonal inputs: zero score. With
  // d_time = 1, omega = 1 and dt = pi/2 the candidate's time slot is 0 while
  // the anchor's is 1; the node blocks use disjoint one-hot rows.
  GasModel<T> ortho = GasModel<T>::create(6, 0, 2, 1, 3, rng);
  ortho.kernel.omegas.data() = {1.0};
  std::fill(ortho.node_table.data().begin(), ortho.node_table.data().end(), T(0));
  ortho.node_table.data()[0 * 2 + 0] = 1.0;  // anchor node 0 -> e1
  ortho.node_table.data()[1 * 2 + 1] = 1.0;  // candidate node 1 -> e2
  auto eye = [](ad::Tensor<T>& w) {
    std::fill(w.data().begin(), w.data().end(), T(0));
    const int64_t rows = w.shape()[0], cols = w.shape()[1];
    for (int64_t i = 0; i < std::min(rows, cols); ++i) w.data()[size_t(i * cols + i)] = 1.0;
  };
  eye(ortho.w_q);
  eye(ortho.w_k);
  const double t_anchor = 10.0;
  auto s0 = gas_scores(ortho, g, make_ns(0, t_anchor, {{1, t_anchor - M_PI / 2.0}}));
  CHECK(s0[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("gas_scores matches a straight-line reimplementation") {
  TemporalGraph g = testutil::random_graph(10, 60, 3, 2);  // with edge features
  Rng rng(5);
  GasModel<T> model = GasModel<T>::create(10, 2, 5, 3, 7, rng);

  const double t = g.max_time() + 1.0;
  for (int32_t u = 0; u < 5; ++u) {
    NeighborSet ns = g.neighbors_before(u, t);
    if (ns.entries.empty()) continue;
    auto scores = gas_scores(model, g, ns);

    // Naive oracle: build both input vectors, multiply by the full matrices.
    const int64_t D = model.input_dim(), A = model.d_att;
    auto project = [&](const std::vector<double>& x, const ad::Tensor<T>& W) {
      std::vector<double> out(static_cast<size_t>(A), 0.0);
      for (int64_t r = 0; r < D; ++r)
        for (int64_t c = 0; c < A; ++c) out[size_t(c)] += x[size_t(r)] * W.at(r, c);
      return out;
    };
    std::vector<double> xu;
    for (int64_t c = 0; c < model.d_node; ++c) xu.push_back(model.node_table.at(u, c));
    for (int64_t c = 0; c < model.d_time; ++c) xu.push_back(std::cos(model.kernel.omegas.at(c) * 0.0));
    for (int32_t c = 0; c < model.feature_dim; ++c) xu.push_back(0.0);
    auto ku = project(xu, model.w_k);
    for (size_t i = 0; i < ns.entries.size(); ++i) {
      const auto& e = ns.entries[i];
      std::vector<double> xc;
      for (int64_t c = 0; c < model.d_node; ++c) xc.push_back(model.node_table.at(e.node, c));
      for (int64_t c = 0; c < model.d_time; ++c)
        xc.push_back(std::cos(model.kernel.omegas.at(c) * (t - e.time)));
      for (double f : g.edge(e.edge_id).features) xc.push_back(f);
      auto qc = project(xc, model.w_q);
      double dot = 0.0;
      for (int64_t c = 0; c < A; ++c) dot += qc[size_t(c)] * ku[size_t(c)];
      CHECK(scores[i] == doctest::Approx(dot / std::sqrt(double(A))).epsilon(1e-6));
    }
  }
}

TEST_CASE("gumbel_attention: normalization, symmetry and the smooth limit") {
  GumbelDraw zero;
  zero.noise.assign(4, 0.0);
  auto alpha = gumbel_attention({1.5, 1.5, 1.5, 1.5}, zero, 1.0);
  for (double a : alpha) CHECK(a == doctest::Approx(0.25));

  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    size_t n = 2 + static_cast<size_t>(rng.uniform_int(6));
    std::vector<double> p;
    for (size_t i = 0; i < n; ++i) p.push_back(rng.uniform(-5.0, 5.0));
    auto d = GumbelDraw::sample(n, rng);
    auto a = gumbel_attention(p, d, rng.uniform(0.05, 10.0));
    double sum = std::accumulate(a.begin(), a.end(), 0.0);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }

  // Large temperature flattens the distribution.
  auto big_tau = gumbel_attention({3.0, -1.0, 0.5}, GumbelDraw::sample(3, rng), 1e6);
  for (double a : big_tau) CHECK(a == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

  CHECK_THROWS_AS(gumbel_attention({1.0}, zero, 0.0), std::invalid_argument);
}

TEST_CASE("gumbel-max law: argmax frequencies follow the softmax") {
  Rng rng(11);
  const int draws = 100000;

  // Worked pair p = (ln 2, 0): argmax probabilities (2/3, 1/3).
  {
    std::vector<double> p = {std::log(2.0), 0.0};
    int64_t first = 0;
    for (int i = 0; i < draws; ++i) {
      auto d = GumbelDraw::sample(2, rng);
      if (p[0] + d.noise[0] > p[1] + d.noise[1]) ++first;
    }
    double freq = double(first) / draws;
    double sigma = std::sqrt((2.0 / 3.0) * (1.0 / 3.0) / draws);
    CHECK(std::fabs(freq - 2.0 / 3.0) < 3.0 * sigma);
  }

  // Random vectors of length <= 8, independent of tau.
  for (double tau : {0.3, 1.0, 4.0}) {
    size_t n = 2 + static_cast<size_t>(rng.uniform_int(7));
    std::vector<double> p;
    for (size_t i = 0; i < n; ++i) p.push_back(rng.uniform(-1.5, 1.5));
    std::vector<int64_t> counts(n, 0);
    for (int i = 0; i < draws; ++i) {
      auto d = GumbelDraw::sample(n, rng);
      auto a = gumbel_attention(p, d, tau);
      counts[size_t(std::max_element(a.begin(), a.end()) - a.begin())]++;
    }
    double mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    std::vector<double> soft(n);
    for (size_t i = 0; i < n; ++i) {
      soft[i] = std::exp(p[i] - mx);
      z += soft[i];
    }
    for (size_t i = 0; i < n; ++i) {
      soft[i] /= z;
      double freq = double(counts[i]) / draws;
      double sigma = std::sqrt(soft[i] * (1.0 - soft[i]) / draws);
      CHECK(std::fabs(freq - soft[i]) < 3.5 * sigma);
    }
  }
}

TEST_CASE("gumbel draw noise has the standard Gumbel location") {
  Rng rng(13);
  double mean = 0.0;
  const int n = 200000;
  auto d = GumbelDraw::sample(n, rng);
  for (double g : d.noise) {
    CHECK(std::isfinite(g));
    mean += g;
  }
  mean /= n;
  CHECK(mean == doctest::Approx(0.5772).epsilon(0.02));  // Euler-Mascheroni
}

TEST_CASE("gas_select: top-s with lower-index tie break, equivariance, shift invariance") {
  CHECK(gas_select({0.1, 0.5, 0.4}, 2) == std::vector<int>{1, 2});
  CHECK(gas_select({0.1, 0.5, 0.4}, 7) == std::vector<int>{0, 1, 2});
  CHECK(gas_select({0.3, 0.3, 0.3, 0.3}, 2) == std::vector<int>{0, 1});

  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    size_t n = 3 + static_cast<size_t>(rng.uniform_int(6));
    std::vector<double> alpha;
    for (size_t i = 0; i < n; ++i) alpha.push_back(rng.uniform(0.0, 1.0));
    int s = 1 + static_cast<int>(rng.uniform_int(static_cast<int64_t>(n)));
    auto base = gas_select(alpha, s);

    // Shift invariance.
    std::vector<double> shifted = alpha;
    for (double& v : shifted) v += 11.25;
    CHECK(gas_select(shifted, s) == base);

    // Permutation equivariance (distinct values so ties cannot differ).
    std::vector<size_t> perm(n);
    std::iota(perm.begin(), perm.end(), size_t(0));
    for (size_t i = n; i > 1; --i)
      std::swap(perm[i - 1], perm[size_t(rng.uniform_int(int64_t(i)))]);
    std::vector<double> permuted(n);
    for (size_t i = 0; i < n; ++i) permuted[i] = alpha[perm[i]];
    auto got = gas_select(permuted, s);
    std::vector<int> expect;
    for (size_t i = 0; i < n; ++i)
      if (std::find(base.begin(), base.end(), int(perm[i])) != base.end())
        expect.push_back(int(i));
    CHECK(got == expect);
  }
}

TEST_CASE("gas_aggregate: singleton passthrough, equal-weight mean, gradient flow") {
  Rng rng(19);
  const int64_t C = 4, D = 5, A = 3;
  GasModel<T> model = GasModel<T>::create(4, 0, 2, 3, A, rng);
  model.w_v = random_tensor<T>(ad::Shape{D, A}, rng);  // match the test D
  ad::Tensor<T> feats = random_tensor<T>(ad::Shape{C, D}, rng);
  ad::Tensor<T> logits = random_tensor<T>(ad::Shape{C}, rng);

  // Single selected candidate: exactly W_V h_k.
  ad::Tensor<T> h1 = gas_aggregate(model, feats, logits, {2});
  ad::Tensor<T> row = ad::matmul(ad::slice(feats, 0, 2, 1), model.w_v);
  for (int64_t c = 0; c < A; ++c) CHECK(h1.at(c) == doctest::Approx(row.at(0, c)));

  // Two selected with equal logits: mean of the two value vectors.
  ad::Tensor<T> eq_logits = ad::Tensor<T>::full(ad::Shape{C}, T(0.7));
  ad::Tensor<T> h2 = gas_aggregate(model, feats, eq_logits, {0, 3});
  ad::Tensor<T> r0 = ad::matmul(ad::slice(feats, 0, 0, 1), model.w_v);
  ad::Tensor<T> r3 = ad::matmul(ad::slice(feats, 0, 3, 1), model.w_v);
  for (int64_t c = 0; c < A; ++c)
    CHECK(h2.at(c) == doctest::Approx(0.5 * (r0.at(0, c) + r3.at(0, c))));

  // Gradients through scores into W_Q (and the rest of the pipeline).
  ad::Tensor<T> x_anchor = random_tensor<T>(ad::Shape{1, D}, rng);
  auto forward = [&]() {
    ad::Tensor<T> k_u = ad::matmul(x_anchor, model.w_k);  // w_k resized below
    ad::Tensor<T> q_c = ad::matmul(feats, model.w_q);
    ad::Tensor<T> lg = ad::reshape(ad::matmul(q_c, ad::reshape(k_u, ad::Shape{A, 1})),
                                   ad::Shape{C});
    return ad::sum(gas_aggregate(model, feats, lg, {0, 2, 3}));
  };
  model.w_q = random_tensor<T>(ad::Shape{D, A}, rng);
  model.w_k = random_tensor<T>(ad::Shape{D, A}, rng);
  auto res = dps::testutil::check_gradients<T>({model.w_q, model.w_k, model.w_v, feats, x_anchor},
                                               forward);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("pretrain_gas learns the planted graph; determinism; sampler behavior") {
  SynthParams sp;
  sp.num_nodes = 80;
  sp.num_edges = 2000;
  sp.num_communities = 4;
  sp.decay_rate = 0.05;
  sp.seed = 9;
  TemporalGraph g = synth_generate(sp);
  ChronoSplit split = chrono_split(g);

  TrainConfig cfg;
  cfg.d_model = 32;
  cfg.d_time = 8;
  cfg.neighbors = 5;
  cfg.batch_size = 32;
  cfg.max_epochs = 40;
  cfg.lr = 0.01;
  cfg.dropout = 0.0;
  cfg.heads = 1;
  cfg.layers = 1;
  cfg.seed = 11;

  EvalReport report;
  GasModel<T> model = pretrain_gas<T>(g, split, cfg, &report);
  CHECK(model.trained);
  MESSAGE("gas val auc = ", report.val_auc, ", losses = ", report.loss_history.front(), " -> ",
          report.loss_history.back());
  CHECK(report.val_auc > 0.75);

  // Training reduces the loss below the no-update baseline (same seed, lr=0).
  TrainConfig frozen = cfg;
  frozen.lr = 0.0;
  frozen.weight_decay = 0.0;
  frozen.max_epochs = 1;
  EvalReport init_report;
  pretrain_gas<T>(g, split, frozen, &init_report);
  CHECK(report.loss_history.front() < init_report.loss_history.front());

  // Determinism: identical seeds give bit-identical parameters (short runs).
  TrainConfig quick = cfg;
  quick.max_epochs = 3;
  EvalReport ra, rb;
  GasModel<T> ma = pretrain_gas<T>(g, split, quick, &ra);
  GasModel<T> mb = pretrain_gas<T>(g, split, quick, &rb);
  CHECK(ra.val_auc == rb.val_auc);
  CHECK(ma.node_table.data() == mb.node_table.data());
  CHECK(ma.w_q.data() == mb.w_q.data());

  // gas_sample contracts on the trained model.
  GasModel<T> untrained = model;
  untrained.trained = false;
  NeighborSet big = g.neighbors_before(0, g.max_time() + 1.0);
  REQUIRE(big.entries.size() > 5);
  CHECK_THROWS_AS(gas_sample(untrained, g, big, 3), std::logic_error);

  auto a = gas_sample(model, g, big, 3);
  auto b = gas_sample(model, g, big, 3);
  REQUIRE(a.size() == 3);
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].edge_id == b[i].edge_id);

  NeighborSet small;
  small.anchor_node = 0;
  small.anchor_time = 1e9;
  small.entries.push_back({1, 2.0, 0});
  small.entries.push_back({2, 3.0, 1});
  CHECK(gas_sample(model, g, small, 5).size() == 2);

  // The GasSampler fast path agrees with gas_sample.
  GasSampler<T> sampler(model, g);
  Rng srng(1);
  auto c = sampler.sample(big, 3, srng);
  REQUIRE(c.size() == 3);
  for (size_t i = 0; i < c.size(); ++i) CHECK(c[i].edge_id == a[i].edge_id);

  // Trained attention hits the anchor community more often than uniform.
  Rng qrng(23);
  UniformSampler uni;
  int64_t gas_hits = 0, gas_total = 0, uni_hits = 0, uni_total = 0;
  const int queries = 10000;
  const int k = sp.num_communities;
  for (int qi = 0; qi < queries; ++qi) {
    int32_t u = static_cast<int32_t>(qrng.uniform_int(g.num_nodes()));
    double t = qrng.uniform(g.max_time() * 0.5, g.max_time());
    NeighborSet ns = g.neighbors_before(u, t);
    if (ns.entries.size() <= 3) continue;
    for (const auto& e : sampler.sample(ns, 3, qrng)) {
      gas_hits += (e.node % k == u % k) ? 1 : 0;
      ++gas_total;
    }
    for (const auto& e : uni.sample(ns, 3, qrng)) {
      uni_hits += (e.node % k == u % k) ? 1 : 0;
      ++uni_total;
    }
  }
  double gas_rate = double(gas_hits) / double(gas_total);
  double uni_rate = double(uni_hits) / double(uni_total);
  MESSAGE("community hit rate: gas ", gas_rate, " vs uniform ", uni_rate);
  CHECK(gas_rate > uni_rate);
}

