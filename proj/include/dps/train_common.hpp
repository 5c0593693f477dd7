#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dps/tensor.hpp"

namespace dps {

enum class SamplerMode { kDps, kTdsOnly, kGasOnly, kNoFusion, kUniform };

inline const char* to_string(SamplerMode m) {
  switch (m) {
    case SamplerMode::kDps: return "DPS";
    case SamplerMode::kTdsOnly: return "TDS_only";
    case SamplerMode::kGasOnly: return "GAS_only";
    case SamplerMode::kNoFusion: return "no_fusion";
    case SamplerMode::kUniform: return "uniform";
  }
  return "?";
}

inline SamplerMode sampler_mode_from(const std::string& s) {
  if (s == "DPS") return SamplerMode::kDps;
  if (s == "TDS_only") return SamplerMode::kTdsOnly;
  if (s == "GAS_only") return SamplerMode::kGasOnly;
  if (s == "no_fusion") return SamplerMode::kNoFusion;
  if (s == "uniform") return SamplerMode::kUniform;
  throw std::invalid_argument("unknown sampler mode: " + s);
}

struct TrainConfig {
  int batch_size = 200;
  double dropout = 0.1;
  int layers = 2;
  int heads = 2;
  int neighbors = 20;
  double lr = 1e-3;
  double weight_decay = 1e-5;
  int patience = 3;
  int max_epochs = 50;
  uint64_t seed = 42;
  SamplerMode sampler_mode = SamplerMode::kDps;
  int d_model = 64;
  int d_time = 64;
  bool deterministic = true;
  // Gumbel-softmax temperature schedule for the attention sampler
  // pretraining: tau_start * tau_decay^epoch, floored at tau_floor.
  double tau_start = 1.0;
  double tau_decay = 0.8;
  double tau_floor = 0.25;

  void validate() const {
    if (batch_size < 1 || layers < 1 || heads < 1 || neighbors < 1 || max_epochs < 1 ||
        patience < 1 || d_model < 1 || d_time < 1)
      throw std::invalid_argument("TrainConfig: counts must be positive");
    if (layers > 2) throw std::invalid_argument("TrainConfig: layers must be 1 or 2");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("TrainConfig: dropout must be in [0,1)");
    if (lr < 0.0 || weight_decay < 0.0)  // lr == 0 is a legal frozen run
      throw std::invalid_argument("TrainConfig: bad optimizer settings");
    if (d_model % heads != 0)
      throw std::invalid_argument("TrainConfig: heads must divide d_model");
    if (tau_start <= 0.0 || tau_floor <= 0.0 || tau_decay <= 0.0 || tau_decay > 1.0)
      throw std::invalid_argument("TrainConfig: bad temperature schedule");
  }

  // Values outside the searched spaces are legal overrides; the CLI surfaces
  // them as warnings.
  std::vector<std::string> search_space_warnings() const {
    auto in = [](int v, std::initializer_list<int> set) {
      for (int x : set)
        if (v == x) return true;
      return false;
    };
    std::vector<std::string> w;
    if (!in(batch_size, {100, 150, 200, 250})) w.push_back("batch_size outside {100,150,200,250}");
    if (!(dropout == 0.0 || dropout == 0.1 || dropout == 0.2 || dropout == 0.3))
      w.push_back("dropout outside {0.0,0.1,0.2,0.3}");
    if (!in(layers, {1, 2})) w.push_back("layers outside {1,2}");
    if (!in(heads, {1, 2, 4})) w.push_back("heads outside {1,2,4}");
    if (!in(neighbors, {10, 20, 30, 40})) w.push_back("neighbors outside {10,20,30,40}");
    return w;
  }
};

// Parameter value snapshot for best-epoch restoration.
template <typename T>
class ParamSnapshot {
 public:
  void capture(const std::vector<ad::Tensor<T>>& params) {
    values_.clear();
    for (const auto& p : params) values_.push_back(p.data());
  }
  void restore(std::vector<ad::Tensor<T>>& params) const {
    if (values_.size() != params.size())
      throw std::logic_error("ParamSnapshot: parameter list changed");
    for (size_t i = 0; i < params.size(); ++i) params[i].data() = values_[i];
  }
  bool empty() const { return values_.empty(); }

 private:
  std::vector<std::vector<T>> values_;
};

// Stop when the metric has not improved for `patience` consecutive epochs;
// the caller restores the snapshot captured at the best epoch.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  bool update(double metric, int epoch) {
    if (metric > best_) {
      best_ = metric;
      best_epoch_ = epoch;
      since_best_ = 0;
      return true;
    }
    ++since_best_;
    return false;
  }

  bool should_stop() const { return since_best_ >= patience_; }
  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  int since_best_ = 0;
};

// Negative-sampling cross entropy over a batch of (positive, negative)
// pairs, mean over pairs: -[log p_pos + log(1 - p_neg)]. Probabilities are
// clamped to [1e-7, 1-1e-7].
template <typename T>
ad::Tensor<T> link_loss(const ad::Tensor<T>& p_pos, const ad::Tensor<T>& p_neg) {
  const T lo = static_cast<T>(1e-7);
  const T hi = static_cast<T>(1.0) - static_cast<T>(1e-7);
  ad::Tensor<T> one = ad::Tensor<T>::scalar(T(1));
  ad::Tensor<T> pos_term = ad::log(ad::clamp(p_pos, lo, hi));
  ad::Tensor<T> neg_term = ad::log(ad::sub(one, ad::clamp(p_neg, lo, hi)));
  ad::Tensor<T> zero = ad::Tensor<T>::scalar(T(0));
  return ad::mean(ad::sub(zero, ad::add(pos_term, neg_term)));
}

}  // namespace dps
