#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dps {

// Area under the ROC curve by the rank statistic, with half credit for ties:
// equals the probability that a random positive outscores a random negative.
double auc_score(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores);

// Classification accuracy at the given threshold over one-negative-per-
// positive score sets (predicted label 1 iff score >= threshold).
double accuracy_score(const std::vector<double>& pos_scores,
                      const std::vector<double>& neg_scores, double threshold = 0.5);

struct EvalReport {
  double accuracy = 0.0;
  double auc = 0.0;
  int64_t n_pos = 0;
  int64_t n_neg = 0;
  std::vector<double> loss_history;  // per-epoch training loss
  int epochs = 0;                    // epochs actually run
  int best_epoch = -1;               // epoch of the best validation AUC
  double val_auc = 0.0;              // best validation AUC

  std::string to_json() const;
  // Row matching the metrics CSV header `command,dataset,mode,accuracy,auc,epochs,seed`.
  std::string csv_row(const std::string& command, const std::string& dataset,
                      const std::string& mode, uint64_t seed) const;
};

inline const char* kMetricsCsvHeader = "command,dataset,mode,accuracy,auc,epochs,seed";

}  // namespace dps
