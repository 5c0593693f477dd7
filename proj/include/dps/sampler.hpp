#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dps/graph.hpp"
#include "dps/rng.hpp"
#include "dps/tds.hpp"

namespace dps {

// Neighborhood sampler interface used by the graph convolution. Call counts
// are instrumentation for the ablation wiring checks: a sampler that must not
// participate in a run can be asserted untouched.
class NeighborSampler {
 public:
  virtual ~NeighborSampler() = default;
  virtual std::vector<NeighborEntry> sample(const NeighborSet& ns, int s, Rng& rng) = 0;
  virtual std::string name() const = 0;

  uint64_t calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_calls() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  void count_call() { calls_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<uint64_t> calls_{0};
};

// Heuristic baseline: s entries uniformly without replacement.
class UniformSampler : public NeighborSampler {
 public:
  std::vector<NeighborEntry> sample(const NeighborSet& ns, int s, Rng& rng) override {
    count_call();
    if (ns.entries.empty()) return {};
    if (ns.entries.size() <= static_cast<size_t>(s)) return ns.entries;
    auto idx = rng.sample_without_replacement(static_cast<int64_t>(ns.entries.size()), s);
    std::vector<NeighborEntry> out;
    out.reserve(idx.size());
    for (int64_t i : idx) out.push_back(ns.entries[static_cast<size_t>(i)]);
    return out;
  }
  std::string name() const override { return "uniform"; }
};

// Time-decay sampling with per-node fitted rates.
class TdsSampler : public NeighborSampler {
 public:
  explicit TdsSampler(DecayRates rates) : rates_(std::move(rates)) {}

  std::vector<NeighborEntry> sample(const NeighborSet& ns, int s, Rng& rng) override {
    count_call();
    return tds_sample(ns, rates_, s, rng);
  }
  std::string name() const override { return "tds"; }
  const DecayRates& rates() const { return rates_; }

 private:
  DecayRates rates_;
};

}  // namespace dps
