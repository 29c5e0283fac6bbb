#include "mtlswin/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mtlswin {

std::optional<double> mann_whitney_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  int64_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups; rank sums stay exact half-integers.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport classification_metrics(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("metrics: scores and labels must be non-empty and aligned");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("metrics: scores must lie in [0, 1]");
  }
  MetricsReport r;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= 0.5;
    const bool truth = labels[i] == 1;
    if (pred && truth) r.tp++;
    else if (pred && !truth) r.fp++;
    else if (!pred && truth) r.fn++;
    else r.tn++;
  }
  const double total = static_cast<double>(scores.size());
  r.acc = static_cast<double>(r.tp + r.tn) / total;
  r.prec = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.rec = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = (r.prec + r.rec) > 0 ? 2.0 * r.prec * r.rec / (r.prec + r.rec) : 0.0;
  r.auc = mann_whitney_auc(scores, labels);
  return r;
}

double binary_iou(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("iou: mask size mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    inter += (p && t) ? 1 : 0;
    uni += (p || t) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string metrics_table(const MetricsReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "  acc    %.4f\n"
                "  prec   %.4f\n"
                "  rec    %.4f\n"
                "  f1     %.4f\n"
                "  auc    %s\n"
                "  iou    %s\n"
                "  counts TP=%lld FP=%lld TN=%lld FN=%lld\n",
                r.acc, r.prec, r.rec, r.f1,
                r.auc ? (std::to_string(*r.auc).c_str()) : "n/a",
                r.iou_seg ? (std::to_string(*r.iou_seg).c_str()) : "n/a",
                static_cast<long long>(r.tp), static_cast<long long>(r.fp),
                static_cast<long long>(r.tn), static_cast<long long>(r.fn));
  return buf;
}

std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,value\n";
  os << "acc," << r.acc << "\n";
  os << "prec," << r.prec << "\n";
  os << "rec," << r.rec << "\n";
  os << "f1," << r.f1 << "\n";
  if (r.auc) os << "auc," << *r.auc << "\n";
  if (r.iou_seg) os << "iou_seg," << *r.iou_seg << "\n";
  os << "tp," << r.tp << "\nfp," << r.fp << "\ntn," << r.tn << "\nfn," << r.fn << "\n";
  return os.str();
}

}  // namespace mtlswin
