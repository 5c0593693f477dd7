#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dps/rng.hpp"

namespace dps {

// One timestamped interaction. Node ids are dense integers; `features` holds
// the optional per-interaction feature vector (same arity across the graph).
struct TemporalEdge {
  int32_t src = 0;
  int32_t dst = 0;
  double time = 0.0;  // normalized days, >= 0
  std::vector<double> features;
  int32_t edge_id = 0;  // rank in the time-sorted order
};

struct NeighborEntry {
  int32_t node = 0;
  double time = 0.0;
  int32_t edge_id = 0;
};

// Interactions of an anchor node strictly before its anchor time, ascending.
struct NeighborSet {
  std::vector<NeighborEntry> entries;
  int32_t anchor_node = 0;
  double anchor_time = 0.0;

  bool empty() const { return entries.empty(); }
  size_t size() const { return entries.size(); }
};

// Chronological 70/15/15 split over edge ids (which are time-ranked).
// `removed` holds val/test edges touching nodes absent from the train set.
struct ChronoSplit {
  std::vector<int32_t> train;
  std::vector<int32_t> val;
  std::vector<int32_t> test;
  std::vector<int32_t> removed;
};

// Immutable time-indexed interaction store. Interactions are undirected for
// neighborhood purposes: each edge appears in both endpoints' adjacency.
class TemporalGraph {
 public:
  TemporalGraph() = default;

  // Builds the sorted edge list and adjacency from raw interactions.
  // Node labels are the original external ids (used on export); when empty,
  // labels default to the decimal node index.
  static TemporalGraph build(int32_t num_nodes, std::vector<TemporalEdge> edges,
                             std::vector<std::string> node_labels = {},
                             double time_origin = 0.0, double time_scale = 1.0);

  int32_t num_nodes() const { return num_nodes_; }
  int64_t num_edges() const { return static_cast<int64_t>(edges_.size()); }
  int32_t feature_dim() const { return feature_dim_; }
  double time_origin() const { return time_origin_; }
  double time_scale() const { return time_scale_; }

  const std::vector<TemporalEdge>& edges() const { return edges_; }
  const TemporalEdge& edge(int32_t id) const { return edges_[static_cast<size_t>(id)]; }
  const std::vector<NeighborEntry>& adjacency(int32_t u) const;
  const std::vector<std::string>& node_labels() const { return labels_; }

  // Entries of u's adjacency with timestamp strictly below t (binary search).
  NeighborSet neighbors_before(int32_t u, double t) const;
  // Count of such entries without materializing them.
  int64_t degree_before(int32_t u, double t) const;

  double min_time() const { return edges_.empty() ? 0.0 : edges_.front().time; }
  double max_time() const { return edges_.empty() ? 0.0 : edges_.back().time; }
  double timespan() const { return max_time() - min_time(); }

  // Fraction of interactions whose endpoint pair occurred earlier.
  double repetition_fraction() const;
  // 2|E| / (|V| (|V|-1)); can exceed 1 on multigraphs.
  double density() const;
  uint64_t fingerprint() const;

 private:
  int32_t num_nodes_ = 0;
  int32_t feature_dim_ = 0;
  double time_origin_ = 0.0;
  double time_scale_ = 1.0;
  std::vector<TemporalEdge> edges_;                      // ascending (time, edge_id)
  std::vector<std::vector<NeighborEntry>> adjacency_;    // per node, ascending time
  std::vector<std::string> labels_;
};

struct LoadOptions {
  bool has_features = false;
  double time_unit_divisor = 86400.0;  // seconds -> days
  // Column layout: "sdt" = src dst time [features...],
  // "sdwt" = src dst weight time (weight dropped),
  // "auto" picks sdt for 3 columns, sdwt for 4 (unless has_features).
  std::string format = "auto";
};

// Parses a delimiter-separated edge list (comma or whitespace); an optional
// single header line is skipped when its leading tokens are non-numeric.
TemporalGraph load_edge_list(const std::string& path, const LoadOptions& options = {});

// Same format on export: `src dst time [features...]`, normalized days with
// 9 significant digits, edges in time order, original node labels.
void save_edge_list(const TemporalGraph& g, const std::string& path);

ChronoSplit chrono_split(const TemporalGraph& g,
                         std::array<double, 3> ratios = {0.70, 0.15, 0.15});

// Uniform negative node, excluding both endpoints of the positive edge.
// Degenerate graphs where both endpoints cover all candidates fall back to
// excluding only the destination.
int32_t sample_negative(const TemporalGraph& g, const TemporalEdge& positive, Rng& rng);

struct SynthParams {
  int32_t num_nodes = 500;
  int64_t num_edges = 20000;
  int32_t num_communities = 10;
  double decay_rate = 1.0;
  uint64_t seed = 1;
};

// Planted-preference generator: uniform source; with probability 0.8 the
// destination is drawn from the source community's recent participants,
// recency-weighted by exp(-decay_rate * dt), else uniformly. Timestamps come
// from a unit-rate arrival process.
TemporalGraph synth_generate(const SynthParams& params);

// Timestamped node label event (labels in {0,1}).
struct LabelEvent {
  int32_t node = 0;
  double time = 0.0;
  int32_t label = 0;
};

// Reads `node_id timestamp label` lines; node ids resolved against the
// graph's labels, timestamps normalized with the graph's origin/scale.
std::vector<LabelEvent> load_label_events(const std::string& path, const TemporalGraph& g);

}  // namespace dps
