#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "dps/graph.hpp"
#include "test_util.hpp"

using namespace dps;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("load_edge_list normalizes and sorts timestamps") {
  auto path = write_temp("dps_load_basic.txt",
                         "a b 100\n"
                         "c d 50\n"
                         "a c 75\n"
                         "b d 50\n"
                         "d a 200\n");
  TemporalGraph g = load_edge_list(path, {});
  REQUIRE(g.num_edges() == 5);
  CHECK(g.num_nodes() == 4);
  CHECK(g.edge(0).time == doctest::Approx(0.0));
  CHECK(g.edge(1).time == doctest::Approx(0.0));
  CHECK(g.edge(2).time == doctest::Approx(25.0 / 86400.0));
  CHECK(g.edge(3).time == doctest::Approx(50.0 / 86400.0));
  CHECK(g.edge(4).time == doctest::Approx(150.0 / 86400.0));
  // Ties keep input order: (c,d,50) precedes (b,d,50).
  CHECK(g.node_labels()[size_t(g.edge(0).src)] == "c");
  CHECK(g.time_origin() == doctest::Approx(50.0));
  CHECK(g.time_scale() == doctest::Approx(86400.0));
}

TEST_CASE("load_edge_list handles empty files, headers and comma delimiters") {
  TemporalGraph empty = load_edge_list(write_temp("dps_load_empty.txt", ""));
  CHECK(empty.num_nodes() == 0);
  CHECK(empty.num_edges() == 0);

  TemporalGraph with_header = load_edge_list(
      write_temp("dps_load_header.txt", "src,dst,timestamp\n1,2,10\n2,3,20\n"));
  CHECK(with_header.num_nodes() == 3);
  CHECK(with_header.num_edges() == 2);
}

TEST_CASE("load_edge_list reports malformed lines and feature arity") {
  auto bad_time = write_temp("dps_load_bad.txt", "a b 1\na b xyz\n");
  CHECK_THROWS_WITH_AS(load_edge_list(bad_time), doctest::Contains("line 2"),
                       std::runtime_error);

  LoadOptions opt;
  opt.has_features = true;
  auto bad_arity = write_temp("dps_load_arity.txt", "a b 1 0.5 0.5\na b 2 0.5\n");
  CHECK_THROWS_WITH_AS(load_edge_list(bad_arity, opt), doctest::Contains("arity"),
                       std::runtime_error);
}

TEST_CASE("edge list round trip preserves structure") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    TemporalGraph g = testutil::random_graph(30, 200, seed);
    auto path = write_temp("dps_roundtrip.txt", "");
    save_edge_list(g, path);
    LoadOptions opt;
    opt.time_unit_divisor = 1.0;
    TemporalGraph r = load_edge_list(path, opt);

    REQUIRE(r.num_nodes() == g.num_nodes());
    REQUIRE(r.num_edges() == g.num_edges());
    // Edge multiset by (label, label, formatted time).
    auto key = [](const TemporalGraph& gr, const TemporalEdge& e) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.9g", e.time);
      return gr.node_labels()[size_t(e.src)] + "|" + gr.node_labels()[size_t(e.dst)] + "|" + buf;
    };
    std::multiset<std::string> a, b;
    for (const auto& e : g.edges()) a.insert(key(g, e));
    for (const auto& e : r.edges()) b.insert(key(r, e));
    CHECK(a == b);
    // Adjacency compared through node labels (dense ids are assigned by
    // first appearance, which changes when the file is rewritten in time
    // order).
    std::map<std::string, int32_t> r_index;
    for (int32_t u = 0; u < r.num_nodes(); ++u) r_index[r.node_labels()[size_t(u)]] = u;
    for (int32_t u = 0; u < g.num_nodes(); ++u) {
      const auto& ga = g.adjacency(u);
      const auto& ra = r.adjacency(r_index.at(g.node_labels()[size_t(u)]));
      REQUIRE(ga.size() == ra.size());
      for (size_t i = 0; i < ga.size(); ++i) {
        CHECK(g.node_labels()[size_t(ga[i].node)] == r.node_labels()[size_t(ra[i].node)]);
        CHECK(ga[i].time == doctest::Approx(ra[i].time).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("neighbors_before matches the motivating two-hop example") {
  // Nodes: U=0, A=1, B=2, V=3, W=4; times t0=1 < t1=2 < t2=3 < t3=4.
  std::vector<TemporalEdge> edges;
  auto push = [&edges](int s, int d, double t) {
    TemporalEdge e;
    e.src = s;
    e.dst = d;
    e.time = t;
    e.edge_id = static_cast<int32_t>(edges.size());
    edges.push_back(e);
  };
  push(1, 3, 1.0);  // (A,V,t0)
  push(2, 4, 1.0);  // (B,W,t0)
  push(0, 1, 2.0);  // (U,A,t1)
  push(0, 2, 2.0);  // (U,B,t1)
  push(0, 3, 3.0);  // (U,V,t2)
  TemporalGraph g = TemporalGraph::build(5, edges);

  NeighborSet ns = g.neighbors_before(0, 4.0);
  REQUIRE(ns.size() == 3);
  CHECK(ns.entries[0].node == 1);
  CHECK(ns.entries[0].time == 2.0);
  CHECK(ns.entries[1].node == 2);
  CHECK(ns.entries[1].time == 2.0);
  CHECK(ns.entries[2].node == 3);
  CHECK(ns.entries[2].time == 3.0);

  CHECK(g.neighbors_before(0, 2.0).empty());  // strict inequality at t1

  NeighborSet nv = g.neighbors_before(3, 4.0);  // V's undirected adjacency
  REQUIRE(nv.size() == 2);
  CHECK(nv.entries[0].node == 1);
  CHECK(nv.entries[0].time == 1.0);
  CHECK(nv.entries[1].node == 0);
  CHECK(nv.entries[1].time == 3.0);

  CHECK_THROWS_AS(g.neighbors_before(99, 1.0), std::out_of_range);
}

TEST_CASE("neighbors_before equals a naive filter on random graphs") {
  for (uint64_t seed : {11u, 12u}) {
    TemporalGraph g = testutil::random_graph(50, 400, seed);
    Rng rng(seed);
    for (int trial = 0; trial < 200; ++trial) {
      int32_t u = static_cast<int32_t>(rng.uniform_int(g.num_nodes()));
      double t = rng.uniform(0.0, g.max_time() * 1.1);
      NeighborSet ns = g.neighbors_before(u, t);
      std::vector<NeighborEntry> naive;
      for (const auto& e : g.adjacency(u))
        if (e.time < t) naive.push_back(e);
      REQUIRE(ns.size() == naive.size());
      for (size_t i = 0; i < naive.size(); ++i) {
        CHECK(ns.entries[i].node == naive[i].node);
        CHECK(ns.entries[i].edge_id == naive[i].edge_id);
        CHECK(ns.entries[i].time < t);
      }
    }
  }
}

TEST_CASE("graph invariants: bidirectional adjacency, sorted, 2|E| entries") {
  TemporalGraph g = testutil::random_graph(40, 300, 21);
  int64_t total = 0;
  for (int32_t u = 0; u < g.num_nodes(); ++u) {
    const auto& adj = g.adjacency(u);
    total += static_cast<int64_t>(adj.size());
    for (size_t i = 1; i < adj.size(); ++i) CHECK(adj[i - 1].time <= adj[i].time);
    for (const auto& e : adj) {
      const auto& edge = g.edge(e.edge_id);
      CHECK(((edge.src == u && edge.dst == e.node) || (edge.dst == u && edge.src == e.node)));
    }
  }
  CHECK(total == 2 * g.num_edges());
}

TEST_CASE("chrono_split boundaries and removal") {
  TemporalGraph g = testutil::random_graph(12, 20, 5);
  ChronoSplit split = chrono_split(g);
  CHECK(split.train.size() == 14);
  CHECK(split.val.size() + split.test.size() + split.removed.size() == 6);

  // Time ordering between parts.
  double train_max = g.edge(split.train.back()).time;
  for (int32_t id : split.val) CHECK(g.edge(id).time >= train_max);
  if (!split.val.empty() && !split.test.empty()) {
    double val_max = g.edge(split.val.back()).time;
    for (int32_t id : split.test) CHECK(g.edge(id).time >= val_max);
  }

  // Every val/test edge either has both endpoints in train or sits in removed.
  std::set<int32_t> train_nodes;
  for (int32_t id : split.train) {
    train_nodes.insert(g.edge(id).src);
    train_nodes.insert(g.edge(id).dst);
  }
  for (int32_t id : split.val) {
    CHECK(train_nodes.count(g.edge(id).src) == 1);
    CHECK(train_nodes.count(g.edge(id).dst) == 1);
  }
  for (int32_t id : split.removed) {
    bool unseen = train_nodes.count(g.edge(id).src) == 0 || train_nodes.count(g.edge(id).dst) == 0;
    CHECK(unseen);
  }

  TemporalGraph tiny = testutil::random_graph(3, 2, 1);
  CHECK_THROWS_AS(chrono_split(tiny), std::invalid_argument);
}

TEST_CASE("chrono_split keeps removed empty when all nodes appear in train") {
  // Two nodes interacting repeatedly: every node is in train.
  std::vector<TemporalEdge> edges;
  for (int i = 0; i < 10; ++i) {
    TemporalEdge e;
    e.src = i % 2;
    e.dst = (i + 1) % 2;
    e.time = i;
    e.edge_id = i;
    edges.push_back(e);
  }
  TemporalGraph g = TemporalGraph::build(2, edges);
  ChronoSplit split = chrono_split(g);
  CHECK(split.removed.empty());
}

TEST_CASE("chrono_split sends late-first-seen nodes to removed") {
  std::vector<TemporalEdge> edges;
  for (int i = 0; i < 19; ++i) {
    TemporalEdge e;
    e.src = i % 3;
    e.dst = (i + 1) % 3;
    e.time = i;
    e.edge_id = i;
    edges.push_back(e);
  }
  TemporalEdge late;  // node 3 first appears in the last 5% of edges
  late.src = 3;
  late.dst = 0;
  late.time = 19;
  late.edge_id = 19;
  edges.push_back(late);
  TemporalGraph g = TemporalGraph::build(4, edges);
  ChronoSplit split = chrono_split(g);
  REQUIRE(split.removed.size() == 1);
  CHECK(g.edge(split.removed[0]).src == 3);
}

TEST_CASE("sample_negative excludes endpoints with degenerate fallback") {
  TemporalGraph g2 = testutil::random_graph(2, 5, 7);
  Rng rng(3);
  TemporalEdge pos;
  pos.src = 0;
  pos.dst = 1;
  for (int i = 0; i < 50; ++i) CHECK(sample_negative(g2, pos, rng) == 0);

  TemporalGraph g = testutil::random_graph(20, 30, 9);
  for (int i = 0; i < 2000; ++i) {
    const auto& e = g.edge(static_cast<int32_t>(rng.uniform_int(g.num_edges())));
    int32_t neg = sample_negative(g, e, rng);
    CHECK(neg != e.dst);
    CHECK(neg != e.src);
  }
}

TEST_CASE("sample_negative is uniform over admissible nodes (chi-square)") {
  TemporalGraph g = testutil::random_graph(1000, 1200, 13);
  TemporalEdge pos;
  pos.src = 17;
  pos.dst = 401;
  Rng rng(99);
  const int64_t draws = 100000;
  std::vector<int64_t> counts(1000, 0);
  for (int64_t i = 0; i < draws; ++i) counts[size_t(sample_negative(g, pos, rng))]++;
  CHECK(counts[17] == 0);
  CHECK(counts[401] == 0);
  const double expected = static_cast<double>(draws) / 998.0;
  double chi2 = 0.0;
  for (size_t u = 0; u < counts.size(); ++u) {
    if (u == 17 || u == 401) continue;
    const double d = static_cast<double>(counts[u]) - expected;
    chi2 += d * d / expected;
  }
  // df = 997; mean df, variance 2*df. 3-sigma acceptance band.
  const double df = 997.0;
  CHECK(chi2 < df + 3.0 * std::sqrt(2.0 * df));
  CHECK(chi2 > df - 3.0 * std::sqrt(2.0 * df));
}

TEST_CASE("synth_generate is deterministic and community-dominated") {
  SynthParams params;
  params.num_nodes = 120;
  params.num_edges = 4000;
  params.num_communities = 4;
  params.decay_rate = 1.0;
  params.seed = 7;
  TemporalGraph a = synth_generate(params);
  TemporalGraph b = synth_generate(params);
  REQUIRE(a.num_edges() == b.num_edges());
  for (int64_t i = 0; i < a.num_edges(); ++i) {
    CHECK(a.edge(int32_t(i)).src == b.edge(int32_t(i)).src);
    CHECK(a.edge(int32_t(i)).dst == b.edge(int32_t(i)).dst);
    CHECK(a.edge(int32_t(i)).time == b.edge(int32_t(i)).time);
  }

  int64_t same_comm = 0;
  for (const auto& e : a.edges())
    if (e.src % 4 == e.dst % 4) ++same_comm;
  CHECK(static_cast<double>(same_comm) / static_cast<double>(a.num_edges()) > 0.7);
}

TEST_CASE("synth_generate with one community spreads over all nodes") {
  SynthParams params;
  params.num_nodes = 60;
  params.num_edges = 3000;
  params.num_communities = 1;
  params.seed = 11;
  TemporalGraph g = synth_generate(params);
  std::set<int32_t> dsts;
  for (const auto& e : g.edges()) dsts.insert(e.dst);
  CHECK(dsts.size() > 55);  // recency-weighted over everyone, not a clique
}

TEST_CASE("ingest summary statistics") {
  TemporalGraph g = testutil::random_graph(10, 40, 3);
  CHECK(g.density() == doctest::Approx(2.0 * 40 / (10.0 * 9.0)));

  // Repetition: fraction of interactions whose endpoint pair occurred before.
  std::vector<TemporalEdge> edges;
  auto push = [&edges](int s, int d, double t) {
    TemporalEdge e;
    e.src = s;
    e.dst = d;
    e.time = t;
    e.edge_id = static_cast<int32_t>(edges.size());
    edges.push_back(e);
  };
  push(0, 1, 0.0);
  push(1, 0, 1.0);  // same unordered pair -> repetition
  push(0, 2, 2.0);
  push(0, 1, 3.0);  // repetition
  TemporalGraph r = TemporalGraph::build(3, edges);
  CHECK(r.repetition_fraction() == doctest::Approx(0.5));
}

TEST_CASE("label events load, normalize and sort") {
  TemporalGraph g = load_edge_list(
      write_temp("dps_lbl_graph.txt", "a b 100\nb c 200\nc a 300\n"), {});
  auto labels = write_temp("dps_lbl.txt", "b 250 1\na 150 0\nc 300 0\n");
  auto events = load_label_events(labels, g);
  REQUIRE(events.size() == 3);
  CHECK(events[0].time == doctest::Approx(50.0 / 86400.0));
  CHECK(events[0].label == 0);
  CHECK(events[1].label == 1);
  CHECK_THROWS(load_label_events(write_temp("dps_lbl_bad.txt", "zz 1 1\n"), g));
}
