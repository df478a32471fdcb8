#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adnet/tensor.hpp"

namespace adnet::evaluation {

struct ConfusionCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::int64_t total() const { return tp + tn + fp + fn; }
};

struct Metrics {
  double jaccard = 0.0, dice = 0.0, accuracy = 0.0, sensitivity = 0.0, specificity = 0.0;
};

// Binarize predictions at threshold (>= maps to 1) and count the four cells.
ConfusionCounts confusion(const Tensor& pred_prob, const Tensor& mask, double threshold = 0.5);

// Zero denominators yield 1.0 when the numerator condition is vacuous
// (nothing to find and nothing found), else 0.0.
Metrics metrics_from_counts(const ConfusionCounts& c);

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // sorted by fpr, (0,0) .. (1,1)
  double auc = 0.0;
};

// Threshold sweep over unique scores (descending); ties share one step.
// Throws ContractViolation when only one class is present.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct WilcoxonResult {
  double w = 0.0;       // min(W+, W-)
  double p_value = 1.0; // two-sided
  bool significant_at_5pct = false;
  int n_effective = 0;  // pairs left after dropping zero differences
  bool exact = false;   // exact enumeration (n <= 12) vs normal approximation
};

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

struct PerImageRecord {
  std::string id;
  Metrics metrics;
};

struct MetricsReport {
  std::vector<PerImageRecord> per_image;
  Metrics mean;
  Metrics stddev;
  RocResult roc;  // pooled over all pixels of the set
  bool roc_valid = false;
};

MetricsReport aggregate_report(std::vector<PerImageRecord> per_image,
                               const std::vector<double>& pooled_scores,
                               const std::vector<int>& pooled_labels);

void write_metrics_csv(const std::string& path, const MetricsReport& report);
void write_roc_csv(const std::string& path, const RocResult& roc);
void write_roc_svg(const std::string& path, const RocResult& roc);

}  // namespace adnet::evaluation
