#include "dps/graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace dps {

namespace {

bool looks_numeric(const std::string& tok) {
  if (tok.empty()) return false;
  char* end = nullptr;
  std::strtod(tok.c_str(), &end);
  return end != nullptr && *end == '\0';
}

std::vector<std::string> split_fields(const std::string& line) {
  std::string normalized = line;
  for (char& c : normalized) {
    if (c == ',' || c == '\t' || c == ';') c = ' ';
  }
  std::vector<std::string> out;
  std::istringstream is(normalized);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

TemporalGraph TemporalGraph::build(int32_t num_nodes, std::vector<TemporalEdge> edges,
                                   std::vector<std::string> node_labels,
                                   double time_origin, double time_scale) {
  TemporalGraph g;
  g.num_nodes_ = num_nodes;
  g.time_origin_ = time_origin;
  g.time_scale_ = time_scale;

  std::stable_sort(edges.begin(), edges.end(), [](const TemporalEdge& a, const TemporalEdge& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.edge_id < b.edge_id;
  });
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i].edge_id = static_cast<int32_t>(i);
    if (!std::isfinite(edges[i].time) || edges[i].time < 0.0)
      throw std::invalid_argument("TemporalGraph: timestamps must be finite and >= 0");
    if (edges[i].src < 0 || edges[i].src >= num_nodes || edges[i].dst < 0 ||
        edges[i].dst >= num_nodes)
      throw std::invalid_argument("TemporalGraph: node id out of range");
  }
  g.feature_dim_ = edges.empty() ? 0 : static_cast<int32_t>(edges.front().features.size());
  for (const auto& e : edges) {
    if (static_cast<int32_t>(e.features.size()) != g.feature_dim_)
      throw std::invalid_argument("TemporalGraph: inconsistent feature arity");
  }

  g.adjacency_.assign(static_cast<size_t>(num_nodes), {});
  for (const auto& e : edges) {
    g.adjacency_[static_cast<size_t>(e.src)].push_back({e.dst, e.time, e.edge_id});
    g.adjacency_[static_cast<size_t>(e.dst)].push_back({e.src, e.time, e.edge_id});
  }
  // Edges were appended in (time, edge_id) order, so adjacency is sorted.
  g.edges_ = std::move(edges);

  if (node_labels.empty()) {
    node_labels.resize(static_cast<size_t>(num_nodes));
    for (int32_t u = 0; u < num_nodes; ++u) node_labels[static_cast<size_t>(u)] = std::to_string(u);
  }
  if (static_cast<int32_t>(node_labels.size()) != num_nodes)
    throw std::invalid_argument("TemporalGraph: node label count mismatch");
  g.labels_ = std::move(node_labels);
  return g;
}

const std::vector<NeighborEntry>& TemporalGraph::adjacency(int32_t u) const {
  if (u < 0 || u >= num_nodes_)
    throw std::out_of_range("TemporalGraph::adjacency: unknown node " + std::to_string(u));
  return adjacency_[static_cast<size_t>(u)];
}

NeighborSet TemporalGraph::neighbors_before(int32_t u, double t) const {
  const auto& adj = adjacency(u);
  auto it = std::lower_bound(adj.begin(), adj.end(), t,
                             [](const NeighborEntry& e, double v) { return e.time < v; });
  NeighborSet ns;
  ns.anchor_node = u;
  ns.anchor_time = t;
  ns.entries.assign(adj.begin(), it);
  return ns;
}

int64_t TemporalGraph::degree_before(int32_t u, double t) const {
  const auto& adj = adjacency(u);
  auto it = std::lower_bound(adj.begin(), adj.end(), t,
                             [](const NeighborEntry& e, double v) { return e.time < v; });
  return it - adj.begin();
}

double TemporalGraph::repetition_fraction() const {
  if (edges_.empty()) return 0.0;
  std::unordered_set<uint64_t> seen;
  seen.reserve(edges_.size() * 2);
  int64_t repeated = 0;
  for (const auto& e : edges_) {
    uint64_t a = static_cast<uint32_t>(std::min(e.src, e.dst));
    uint64_t b = static_cast<uint32_t>(std::max(e.src, e.dst));
    uint64_t key = (a << 32) | b;
    if (!seen.insert(key).second) ++repeated;
  }
  return static_cast<double>(repeated) / static_cast<double>(edges_.size());
}

double TemporalGraph::density() const {
  if (num_nodes_ < 2) return 0.0;
  return 2.0 * static_cast<double>(edges_.size()) /
         (static_cast<double>(num_nodes_) * (static_cast<double>(num_nodes_) - 1.0));
}

uint64_t TemporalGraph::fingerprint() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<uint64_t>(num_nodes_));
  feed(static_cast<uint64_t>(edges_.size()));
  for (const auto& e : edges_) {
    feed(static_cast<uint64_t>(e.src));
    feed(static_cast<uint64_t>(e.dst));
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(e.time));
    std::memcpy(&bits, &e.time, sizeof(bits));
    feed(bits);
  }
  return h;
}

TemporalGraph load_edge_list(const std::string& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_edge_list: cannot open " + path);

  std::unordered_map<std::string, int32_t> node_index;
  std::vector<std::string> labels;
  auto intern = [&](const std::string& tok) {
    auto [it, inserted] = node_index.emplace(tok, static_cast<int32_t>(labels.size()));
    if (inserted) labels.push_back(tok);
    return it->second;
  };

  std::vector<TemporalEdge> edges;
  int32_t feature_dim = -1;
  std::string line;
  int64_t line_no = 0;
  bool first_content_line = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = line;
    size_t pos = trimmed.find_first_not_of(" \t");
    if (pos == std::string::npos || trimmed[pos] == '#' || trimmed[pos] == '%') continue;
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (first_content_line) {
      first_content_line = false;
      // Header detection: skip one line whose timestamp column is non-numeric.
      if (fields.size() >= 3 && !looks_numeric(fields[2])) continue;
      if (fields.size() < 3 && !looks_numeric(fields[0])) continue;
    }
    if (fields.size() < 3)
      throw std::runtime_error("load_edge_list: line " + std::to_string(line_no) +
                               ": expected at least `src dst timestamp`");

    std::string fmt = options.format;
    if (fmt == "auto") fmt = (fields.size() == 4 && !options.has_features) ? "sdwt" : "sdt";
    size_t time_col = (fmt == "sdwt") ? 3 : 2;
    if (fmt == "sdwt" && fields.size() < 4)
      throw std::runtime_error("load_edge_list: line " + std::to_string(line_no) +
                               ": format sdwt needs 4 columns");

    TemporalEdge e;
    e.src = intern(fields[0]);
    e.dst = intern(fields[1]);
    char* end = nullptr;
    e.time = std::strtod(fields[time_col].c_str(), &end);
    if (end == nullptr || *end != '\0' || !std::isfinite(e.time))
      throw std::runtime_error("load_edge_list: line " + std::to_string(line_no) +
                               ": bad timestamp `" + fields[time_col] + "`");

    size_t feat_begin = time_col + 1;
    if (options.has_features) {
      for (size_t i = feat_begin; i < fields.size(); ++i) {
        double v = std::strtod(fields[i].c_str(), &end);
        if (end == nullptr || *end != '\0')
          throw std::runtime_error("load_edge_list: line " + std::to_string(line_no) +
                                   ": bad feature value `" + fields[i] + "`");
        e.features.push_back(v);
      }
    } else if (fields.size() > feat_begin && fmt == "sdt" && fields.size() != 4) {
      throw std::runtime_error("load_edge_list: line " + std::to_string(line_no) +
                               ": unexpected extra columns (use has_features)");
    }
    if (feature_dim < 0) {
      feature_dim = static_cast<int32_t>(e.features.size());
    } else if (static_cast<int32_t>(e.features.size()) != feature_dim) {
      throw std::runtime_error("load_edge_list: line " + std::to_string(line_no) +
                               ": feature arity " + std::to_string(e.features.size()) +
                               " != " + std::to_string(feature_dim));
    }
    e.edge_id = static_cast<int32_t>(edges.size());  // load order; re-ranked in build
    edges.push_back(std::move(e));
  }

  double origin = 0.0;
  if (!edges.empty()) {
    origin = std::numeric_limits<double>::infinity();
    for (const auto& e : edges) origin = std::min(origin, e.time);
    double div = options.time_unit_divisor;
    if (!(div > 0.0)) throw std::invalid_argument("load_edge_list: divisor must be positive");
    for (auto& e : edges) e.time = (e.time - origin) / div;
  }
  const int32_t num_nodes = static_cast<int32_t>(labels.size());
  return TemporalGraph::build(num_nodes, std::move(edges), std::move(labels), origin,
                              options.time_unit_divisor);
}

void save_edge_list(const TemporalGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_edge_list: cannot open " + path);
  char buf[64];
  for (const auto& e : g.edges()) {
    out << g.node_labels()[static_cast<size_t>(e.src)] << ' '
        << g.node_labels()[static_cast<size_t>(e.dst)];
    std::snprintf(buf, sizeof(buf), "%.9g", e.time);
    out << ' ' << buf;
    for (double f : e.features) {
      std::snprintf(buf, sizeof(buf), "%.9g", f);
      out << ' ' << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_edge_list: write failed for " + path);
}

ChronoSplit chrono_split(const TemporalGraph& g, std::array<double, 3> ratios) {
  const int64_t n = g.num_edges();
  if (n < 3) throw std::invalid_argument("chrono_split: need at least 3 edges");
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("chrono_split: ratios must sum to 1");

  const int64_t b1 = static_cast<int64_t>(std::floor(ratios[0] * static_cast<double>(n)));
  const int64_t b2 =
      static_cast<int64_t>(std::floor((ratios[0] + ratios[1]) * static_cast<double>(n)));

  std::vector<uint8_t> in_train(static_cast<size_t>(g.num_nodes()), 0);
  ChronoSplit split;
  for (int64_t i = 0; i < b1; ++i) {
    const auto& e = g.edge(static_cast<int32_t>(i));
    in_train[static_cast<size_t>(e.src)] = 1;
    in_train[static_cast<size_t>(e.dst)] = 1;
    split.train.push_back(static_cast<int32_t>(i));
  }
  for (int64_t i = b1; i < n; ++i) {
    const auto& e = g.edge(static_cast<int32_t>(i));
    bool seen = in_train[static_cast<size_t>(e.src)] && in_train[static_cast<size_t>(e.dst)];
    if (!seen) {
      split.removed.push_back(static_cast<int32_t>(i));
    } else if (i < b2) {
      split.val.push_back(static_cast<int32_t>(i));
    } else {
      split.test.push_back(static_cast<int32_t>(i));
    }
  }
  return split;
}

int32_t sample_negative(const TemporalGraph& g, const TemporalEdge& positive, Rng& rng) {
  const int32_t n = g.num_nodes();
  if (n < 2) throw std::invalid_argument("sample_negative: need at least 2 nodes");
  const bool exclude_both = (positive.src != positive.dst) ? n > 2 : n > 1;
  for (;;) {
    int32_t cand = static_cast<int32_t>(rng.uniform_int(n));
    if (cand == positive.dst) continue;
    if (exclude_both && cand == positive.src) continue;
    return cand;
  }
}

TemporalGraph synth_generate(const SynthParams& params) {
  if (params.num_nodes <= 1 || params.num_edges <= 0 || params.num_communities <= 0 ||
      params.decay_rate <= 0.0)
    throw std::invalid_argument("synth_generate: parameters must be positive");
  Rng rng(params.seed);
  const int32_t n = params.num_nodes;
  const int32_t k = std::min<int32_t>(params.num_communities, n);
  auto community = [k](int32_t u) { return u % k; };

  // Per node: past same-community interactions as (partner, time) instances.
  // A repetition draws one instance recency-weighted by exp(-rate*dt) and
  // repeats its partner, which is exactly the temporal-link-repetition
  // process the decay fit estimates.
  std::vector<std::vector<std::pair<int32_t, double>>> history(static_cast<size_t>(n));

  std::vector<TemporalEdge> edges;
  edges.reserve(static_cast<size_t>(params.num_edges));
  double t = 0.0;
  std::vector<double> weights;
  for (int64_t i = 0; i < params.num_edges; ++i) {
    if (i > 0) t += rng.exponential(1.0);
    int32_t src = static_cast<int32_t>(rng.uniform_int(n));
    int32_t dst = -1;
    const auto& cand = history[static_cast<size_t>(src)];
    if (!cand.empty() && rng.uniform() < 0.8) {
      weights.resize(cand.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (const auto& [node, when] : cand) mx = std::max(mx, -params.decay_rate * (t - when));
      double total = 0.0;
      for (size_t j = 0; j < cand.size(); ++j) {
        weights[j] = std::exp(-params.decay_rate * (t - cand[j].second) - mx);
        total += weights[j];
      }
      double r = rng.uniform() * total;
      double acc = 0.0;
      size_t pick = cand.size() - 1;
      for (size_t j = 0; j < cand.size(); ++j) {
        acc += weights[j];
        if (r < acc) {
          pick = j;
          break;
        }
      }
      dst = cand[pick].first;
    }
    while (dst < 0) {
      int32_t c = static_cast<int32_t>(rng.uniform_int(n));
      if (c != src) dst = c;
    }
    TemporalEdge e;
    e.src = src;
    e.dst = dst;
    e.time = t;
    e.edge_id = static_cast<int32_t>(i);
    edges.push_back(std::move(e));
    if (community(src) == community(dst)) {
      history[static_cast<size_t>(src)].emplace_back(dst, t);
      history[static_cast<size_t>(dst)].emplace_back(src, t);
    }
  }
  return TemporalGraph::build(n, std::move(edges));
}

std::vector<LabelEvent> load_label_events(const std::string& path, const TemporalGraph& g) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_label_events: cannot open " + path);
  std::unordered_map<std::string, int32_t> index;
  for (size_t i = 0; i < g.node_labels().size(); ++i)
    index.emplace(g.node_labels()[i], static_cast<int32_t>(i));

  std::vector<LabelEvent> events;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty() || fields[0][0] == '#') continue;
    if (fields.size() != 3)
      throw std::runtime_error("load_label_events: line " + std::to_string(line_no) +
                               ": expected `node_id timestamp label`");
    auto it = index.find(fields[0]);
    if (it == index.end())
      throw std::runtime_error("load_label_events: line " + std::to_string(line_no) +
                               ": unknown node `" + fields[0] + "`");
    LabelEvent ev;
    ev.node = it->second;
    char* end = nullptr;
    double raw = std::strtod(fields[1].c_str(), &end);
    if (end == nullptr || *end != '\0')
      throw std::runtime_error("load_label_events: line " + std::to_string(line_no) +
                               ": bad timestamp");
    ev.time = (raw - g.time_origin()) / g.time_scale();
    if (fields[2] == "0") {
      ev.label = 0;
    } else if (fields[2] == "1") {
      ev.label = 1;
    } else {
      throw std::runtime_error("load_label_events: line " + std::to_string(line_no) +
                               ": label must be 0 or 1");
    }
    events.push_back(ev);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const LabelEvent& a, const LabelEvent& b) { return a.time < b.time; });
  return events;
}

}  // namespace dps
