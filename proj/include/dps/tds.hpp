#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "dps/graph.hpp"
#include "dps/rng.hpp"

namespace dps {

inline constexpr double kLambdaMin = 1e-6;
inline constexpr double kLambdaMax = 100.0;
inline constexpr int kTdsEventBudget = 100;

// One temporal link repetition: an interaction whose partner appeared earlier
// in the node's history. `prior_time` is the latest earlier occurrence;
// `candidate_times` are the timestamps of the whole neighborhood before the
// anchor.
struct RepetitionEvent {
  double anchor_time = 0.0;
  double prior_time = 0.0;
  std::vector<double> candidate_times;
};

// Per-node exponential decay rates with a pooled fallback for nodes that
// never repeat a partner.
struct DecayRates {
  std::vector<double> lambda;
  double fallback_lambda = 1.0;
  std::vector<uint8_t> fitted;

  double rate(int32_t u) const { return lambda[static_cast<size_t>(u)]; }
};

// Repetition events of node u, restricted to adjacency entries with
// edge_id < max_edge_id (pass the train boundary to fit on training data).
std::vector<RepetitionEvent> repetition_events(
    const TemporalGraph& g, int32_t u,
    int32_t max_edge_id = std::numeric_limits<int32_t>::max());

// Negative log likelihood of the repetition events under decay rate lambda:
// -sum_e [lambda*t_prior - logsumexp_w(lambda*t_w)], max-shifted.
double tds_nll(double lambda, const std::vector<RepetitionEvent>& events);

// Minimizer of tds_nll over [kLambdaMin, kLambdaMax]: golden-section search to
// interval width 1e-6 plus one clamped Newton polish step. Event lists larger
// than `budget` are subsampled without replacement using `seed`.
double fit_lambda(const std::vector<RepetitionEvent>& events, int budget = kTdsEventBudget,
                  uint64_t seed = 0);

// Fits lambda for every node over its training-range repetition events.
// Nodes without events receive fallback_lambda (fit over the pooled events of
// all nodes; 1.0 with a warning when the training set has no repetitions).
DecayRates fit_all(const TemporalGraph& g, const ChronoSplit& split, uint64_t seed = 0,
                   int budget = kTdsEventBudget);

// Eq.-style categorical probabilities over the neighbor set:
// p_k proportional to exp(lambda * t_k), computed with max-shift.
std::vector<double> tds_probabilities(const NeighborSet& ns, double lambda);

// Up to s entries drawn without replacement from the decay distribution;
// returns everything when the set is small, empty for an empty set.
std::vector<NeighborEntry> tds_sample(const NeighborSet& ns, const DecayRates& rates, int s,
                                      Rng& rng);

// Text export, one `node_id lambda fitted_flag` line per node.
void save_decay_rates_text(const DecayRates& rates, const TemporalGraph& g,
                           const std::string& path);

}  // namespace dps
