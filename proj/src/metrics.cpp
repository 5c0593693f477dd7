#include "dps/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dps {

double auc_score(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores) {
  const size_t n1 = pos_scores.size(), n0 = neg_scores.size();
  if (n1 == 0 || n0 == 0) throw std::invalid_argument("auc_score: need both classes");

  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(n1 + n0);
  for (double s : pos_scores) all.push_back({s, true});
  for (double s : neg_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.score < b.score; });

  // Rank-sum with average ranks over tie groups; algebraically identical to
  // counting pairwise wins with 0.5 per tie.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (all[k].positive) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n1) * (static_cast<double>(n1) + 1.0);
  return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

double accuracy_score(const std::vector<double>& pos_scores,
                      const std::vector<double>& neg_scores, double threshold) {
  const size_t n = pos_scores.size() + neg_scores.size();
  if (n == 0) throw std::invalid_argument("accuracy_score: empty input");
  size_t correct = 0;
  for (double s : pos_scores)
    if (s >= threshold) ++correct;
  for (double s : neg_scores)
    if (s < threshold) ++correct;
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::string EvalReport::to_json() const {
  std::ostringstream os;
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "{\"accuracy\":" << num(accuracy) << ",\"auc\":" << num(auc) << ",\"n_pos\":" << n_pos
     << ",\"n_neg\":" << n_neg << ",\"epochs\":" << epochs << ",\"best_epoch\":" << best_epoch
     << ",\"val_auc\":" << num(val_auc) << ",\"loss_history\":[";
  for (size_t i = 0; i < loss_history.size(); ++i) {
    if (i) os << ',';
    os << num(loss_history[i]);
  }
  os << "]}";
  return os.str();
}

std::string EvalReport::csv_row(const std::string& command, const std::string& dataset,
                                const std::string& mode, uint64_t seed) const {
  std::ostringstream os;
  char buf[64];
  os << command << ',' << dataset << ',' << mode << ',';
  std::snprintf(buf, sizeof(buf), "%.6f", accuracy);
  os << buf << ',';
  std::snprintf(buf, sizeof(buf), "%.6f", auc);
  os << buf << ',' << epochs << ',' << seed;
  return os.str();
}

}  // namespace dps
