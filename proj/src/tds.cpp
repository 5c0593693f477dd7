#include "dps/tds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <unordered_map>

namespace dps {

namespace {

double event_nll(double lambda, const RepetitionEvent& ev) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double t : ev.candidate_times) mx = std::max(mx, lambda * t);
  double sum = 0.0;
  for (double t : ev.candidate_times) sum += std::exp(lambda * t - mx);
  double lse = mx + std::log(sum);
  return -(lambda * ev.prior_time - lse);
}

// First and second derivative of the per-event nll in lambda:
// d/dl = E_l[t] - t_prior, d2/dl2 = Var_l[t] >= 0.
void event_derivatives(double lambda, const RepetitionEvent& ev, double& d1, double& d2) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double t : ev.candidate_times) mx = std::max(mx, lambda * t);
  double z = 0.0, m1 = 0.0, m2 = 0.0;
  for (double t : ev.candidate_times) {
    double w = std::exp(lambda * t - mx);
    z += w;
    m1 += w * t;
    m2 += w * t * t;
  }
  m1 /= z;
  m2 /= z;
  d1 += m1 - ev.prior_time;
  d2 += std::max(0.0, m2 - m1 * m1);
}

double fit_over(const std::vector<const RepetitionEvent*>& events) {
  auto f = [&events](double lambda) {
    double total = 0.0;
    for (const auto* ev : events) total += event_nll(lambda, *ev);
    return total;
  };

  // Golden-section search on [kLambdaMin, kLambdaMax] to interval width 1e-6.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = kLambdaMin, b = kLambdaMax;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-6) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  double x = 0.5 * (a + b);

  // One clamped Newton polish step; steps are bounded by the bracket scale so
  // a flat objective cannot throw the result far from the converged interval.
  double d1 = 0.0, d2 = 0.0;
  for (const auto* ev : events) event_derivatives(x, *ev, d1, d2);
  if (d2 > 1e-18) {
    x -= std::clamp(d1 / d2, -1e-3, 1e-3);
  }
  return std::clamp(x, kLambdaMin, kLambdaMax);
}

}  // namespace

std::vector<RepetitionEvent> repetition_events(const TemporalGraph& g, int32_t u,
                                               int32_t max_edge_id) {
  const auto& adj = g.adjacency(u);
  std::vector<RepetitionEvent> out;
  std::unordered_map<int32_t, double> last_seen;
  std::vector<double> times;
  size_t i = 0;
  while (i < adj.size() && adj[i].edge_id < max_edge_id) {
    // Entries in [i, j) share a timestamp; only strictly earlier ones are
    // candidates or priors for anchors in the group.
    size_t j = i;
    while (j < adj.size() && adj[j].edge_id < max_edge_id && adj[j].time == adj[i].time) ++j;
    for (size_t k = i; k < j; ++k) {
      auto it = last_seen.find(adj[k].node);
      if (it == last_seen.end()) continue;
      RepetitionEvent ev;
      ev.anchor_time = adj[k].time;
      ev.prior_time = it->second;
      ev.candidate_times = times;
      out.push_back(std::move(ev));
    }
    for (size_t k = i; k < j; ++k) {
      last_seen[adj[k].node] = adj[k].time;
      times.push_back(adj[k].time);
    }
    i = j;
  }
  return out;
}

double tds_nll(double lambda, const std::vector<RepetitionEvent>& events) {
  if (events.empty())
    throw std::invalid_argument("tds_nll: empty event list (use the fallback rate)");
  double total = 0.0;
  for (const auto& ev : events) total += event_nll(lambda, ev);
  return total;
}

double fit_lambda(const std::vector<RepetitionEvent>& events, int budget, uint64_t seed) {
  if (events.empty()) throw std::invalid_argument("fit_lambda: empty event list");
  std::vector<const RepetitionEvent*> ptrs;
  if (budget > 0 && events.size() > static_cast<size_t>(budget)) {
    Rng rng(seed);
    auto idx = rng.sample_without_replacement(static_cast<int64_t>(events.size()), budget);
    std::sort(idx.begin(), idx.end());
    for (int64_t i : idx) ptrs.push_back(&events[static_cast<size_t>(i)]);
  } else {
    ptrs.reserve(events.size());
    for (const auto& ev : events) ptrs.push_back(&ev);
  }
  return fit_over(ptrs);
}

DecayRates fit_all(const TemporalGraph& g, const ChronoSplit& split, uint64_t seed, int budget) {
  const int32_t cutoff = split.train.empty() ? 0 : split.train.back() + 1;  // ids are [0, b1)
  DecayRates rates;
  rates.lambda.assign(static_cast<size_t>(g.num_nodes()), 1.0);
  rates.fitted.assign(static_cast<size_t>(g.num_nodes()), 0);

  // Pooled fallback: reservoir-sample `budget` events from the node-major
  // event stream so memory stays bounded on dense graphs.
  Rng pool_rng(Rng::mix(seed, 0xfa11bacc));
  std::vector<RepetitionEvent> pooled;
  pooled.reserve(static_cast<size_t>(budget));
  int64_t pooled_seen = 0;
  for (int32_t u = 0; u < g.num_nodes(); ++u) {
    for (auto& ev : repetition_events(g, u, cutoff)) {
      ++pooled_seen;
      if (pooled.size() < static_cast<size_t>(budget)) {
        pooled.push_back(std::move(ev));
      } else {
        int64_t slot = pool_rng.uniform_int(pooled_seen);
        if (slot < budget) pooled[static_cast<size_t>(slot)] = std::move(ev);
      }
    }
  }

  if (pooled.empty()) {
    rates.fallback_lambda = 1.0;
    std::cerr << "fit_all: no repetition events in the training range; fallback lambda = 1.0\n";
  } else {
    rates.fallback_lambda = fit_lambda(pooled, budget, Rng::mix(seed, 0xfa11bacd));
  }

  for (int32_t u = 0; u < g.num_nodes(); ++u) {
    auto events = repetition_events(g, u, cutoff);
    if (events.empty()) {
      rates.lambda[static_cast<size_t>(u)] = rates.fallback_lambda;
      continue;
    }
    rates.lambda[static_cast<size_t>(u)] =
        fit_lambda(events, budget, Rng::mix(seed, static_cast<uint64_t>(u)));
    rates.fitted[static_cast<size_t>(u)] = 1;
  }
  return rates;
}

std::vector<double> tds_probabilities(const NeighborSet& ns, double lambda) {
  std::vector<double> p(ns.entries.size(), 0.0);
  if (p.empty()) return p;
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < p.size(); ++i) mx = std::max(mx, lambda * ns.entries[i].time);
  double z = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(lambda * ns.entries[i].time - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<NeighborEntry> tds_sample(const NeighborSet& ns, const DecayRates& rates, int s,
                                      Rng& rng) {
  if (s < 1) throw std::invalid_argument("tds_sample: s must be >= 1");
  if (ns.entries.empty()) return {};
  if (ns.entries.size() <= static_cast<size_t>(s)) return ns.entries;

  const double lambda = rates.rate(ns.anchor_node);
  double mx = -std::numeric_limits<double>::infinity();
  for (const auto& e : ns.entries) mx = std::max(mx, lambda * e.time);
  std::vector<double> w(ns.entries.size());
  double total = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(lambda * ns.entries[i].time - mx);
    total += w[i];
  }

  std::vector<uint8_t> drawn(w.size(), 0);
  std::vector<NeighborEntry> out;
  out.reserve(static_cast<size_t>(s));
  for (int draw = 0; draw < s; ++draw) {
    if (total <= 0.0) {
      // Remaining weights underflowed to zero: uniform over the survivors.
      std::vector<size_t> remaining;
      for (size_t i = 0; i < w.size(); ++i)
        if (!drawn[i]) remaining.push_back(i);
      size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(remaining.size())));
      drawn[remaining[j]] = 1;
      out.push_back(ns.entries[remaining[j]]);
      continue;
    }
    double r = rng.uniform() * total;
    double acc = 0.0;
    size_t pick = SIZE_MAX;
    for (size_t i = 0; i < w.size(); ++i) {
      if (drawn[i]) continue;
      acc += w[i];
      if (r < acc) {
        pick = i;
        break;
      }
    }
    if (pick == SIZE_MAX) {  // rounding pushed r past the tail
      for (size_t i = w.size(); i-- > 0;)
        if (!drawn[i]) {
          pick = i;
          break;
        }
    }
    drawn[pick] = 1;
    out.push_back(ns.entries[pick]);
    total -= w[pick];
  }
  return out;
}

void save_decay_rates_text(const DecayRates& rates, const TemporalGraph& g,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_decay_rates_text: cannot open " + path);
  char buf[64];
  for (size_t u = 0; u < rates.lambda.size(); ++u) {
    std::snprintf(buf, sizeof(buf), "%.17g", rates.lambda[u]);
    out << g.node_labels()[u] << ' ' << buf << ' ' << int(rates.fitted[u]) << '\n';
  }
}

}  // namespace dps
