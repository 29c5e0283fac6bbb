#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mtlswin {

struct MetricsReport {
  double acc = 0.0, prec = 0.0, rec = 0.0, f1 = 0.0;
  std::optional<double> auc;      // absent when only one class is present
  std::optional<double> iou_seg;  // absent when no masks were evaluated
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Hard decisions at threshold 0.5 on the positive-class probability; AUC is
/// the Mann-Whitney concordance with ties counting one half.
MetricsReport classification_metrics(const std::vector<double>& scores, const std::vector<int>& labels);

/// Rank-based Mann-Whitney AUC; exactly equals pairwise concordance counting.
std::optional<double> mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// |intersection| / |union| of binary masks; both empty counts as 1.
double binary_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth);

std::string metrics_table(const MetricsReport& r);
std::string metrics_csv(const MetricsReport& r);

}  // namespace mtlswin
