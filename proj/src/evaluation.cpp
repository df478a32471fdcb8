#include "adnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace adnet::evaluation {

ConfusionCounts confusion(const Tensor& pred_prob, const Tensor& mask, double threshold) {
  require_same_shape(pred_prob, mask, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double m = mask.data[i];
    if (m != 0.0 && m != 1.0)
      throw ContractViolation("confusion: ground truth must be binary, found " + std::to_string(m));
    const bool pred = pred_prob.data[i] >= threshold;
    const bool truth = m == 1.0;
    if (pred && truth) ++c.tp;
    else if (pred && !truth) ++c.fp;
    else if (!pred && truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  Metrics m;
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  m.accuracy = c.total() > 0 ? (tp + tn) / static_cast<double>(c.total()) : 1.0;
  // zero denominator: 1.0 when the complementary error count is also zero
  m.sensitivity = (c.tp + c.fn) > 0 ? tp / (tp + fn) : (c.fp == 0 ? 1.0 : 0.0);
  m.specificity = (c.tn + c.fp) > 0 ? tn / (tn + fp) : (c.fn == 0 ? 1.0 : 0.0);
  m.jaccard = (c.tp + c.fp + c.fn) > 0 ? tp / (tp + fp + fn) : 1.0;
  m.dice = (2 * c.tp + c.fp + c.fn) > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 1.0;
  return m;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ContractViolation("roc_auc: scores and labels differ in length");
  std::int64_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw ContractViolation("roc_auc: ROC undefined with a single class present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });

  RocResult r;
  r.points.push_back({0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    // all samples tied at this score move together
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    r.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  double auc = 0.0;
  for (std::size_t k = 1; k < r.points.size(); ++k)
    auc += (r.points[k].fpr - r.points[k - 1].fpr) * (r.points[k].tpr + r.points[k - 1].tpr) / 2.0;
  r.auc = auc;
  return r;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ContractViolation("wilcoxon: paired samples differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty())
    throw ContractViolation("wilcoxon: all differences are zero, test is degenerate");
  const int n = static_cast<int>(diffs.size());
  if (n < 5)
    throw ContractViolation("wilcoxon: need at least 5 non-zero differences, have " +
                            std::to_string(n));

  // midranks of |d|
  std::vector<int> order(diffs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return std::abs(diffs[i]) < std::abs(diffs[j]); });
  std::vector<double> rank(diffs.size());
  double tie_correction = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const double t = static_cast<double>(j - i);
    tie_correction += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = mid;
    i = j;
  }

  double w_plus = 0.0;
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0.0) w_plus += rank[i];
  const double rank_sum = static_cast<double>(n) * (n + 1) / 2.0;
  const double w_minus = rank_sum - w_plus;

  WilcoxonResult res;
  res.n_effective = n;
  res.w = std::min(w_plus, w_minus);

  if (n <= 12) {
    res.exact = true;
    const std::uint64_t total = 1ULL << n;
    std::uint64_t count = 0;
    for (std::uint64_t s = 0; s < total; ++s) {
      double wp = 0.0;
      for (int i = 0; i < n; ++i)
        if (s & (1ULL << i)) wp += rank[i];
      if (std::min(wp, rank_sum - wp) <= res.w + 1e-9) ++count;
    }
    res.p_value = static_cast<double>(count) / static_cast<double>(total);
  } else {
    const double mean = static_cast<double>(n) * (n + 1) / 4.0;
    const double var =
        static_cast<double>(n) * (n + 1) * (2 * n + 1) / 24.0 - tie_correction / 48.0;
    const double z = (res.w - mean + 0.5) / std::sqrt(var);  // continuity toward the mean
    res.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
  }
  res.significant_at_5pct = res.p_value < 0.05;
  return res;
}

namespace {

Metrics elementwise_stat(const std::vector<PerImageRecord>& recs, bool want_std,
                         const Metrics& mean) {
  Metrics out;
  const double n = static_cast<double>(recs.size());
  auto accumulate = [&](auto member) {
    double acc = 0.0;
    for (const PerImageRecord& r : recs) {
      const double v = r.metrics.*member;
      acc += want_std ? (v - mean.*member) * (v - mean.*member) : v;
    }
    return recs.empty() ? 0.0 : (want_std ? std::sqrt(acc / n) : acc / n);
  };
  out.jaccard = accumulate(&Metrics::jaccard);
  out.dice = accumulate(&Metrics::dice);
  out.accuracy = accumulate(&Metrics::accuracy);
  out.sensitivity = accumulate(&Metrics::sensitivity);
  out.specificity = accumulate(&Metrics::specificity);
  return out;
}

}  // namespace

MetricsReport aggregate_report(std::vector<PerImageRecord> per_image,
                               const std::vector<double>& pooled_scores,
                               const std::vector<int>& pooled_labels) {
  MetricsReport report;
  report.per_image = std::move(per_image);
  report.mean = elementwise_stat(report.per_image, false, Metrics{});
  report.stddev = elementwise_stat(report.per_image, true, report.mean);
  bool both = false, seen_pos = false, seen_neg = false;
  for (int l : pooled_labels) {
    (l ? seen_pos : seen_neg) = true;
    if (seen_pos && seen_neg) {
      both = true;
      break;
    }
  }
  if (both) {
    report.roc = roc_auc(pooled_scores, pooled_labels);
    report.roc_valid = true;
  }
  return report;
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream os(path);
  if (!os) throw DataError("metrics: cannot write " + path);
  os << "id,jaccard,dice,accuracy,sensitivity,specificity\n";
  auto row = [&](const std::string& id, const Metrics& m) {
    os << id << ',' << m.jaccard << ',' << m.dice << ',' << m.accuracy << ',' << m.sensitivity
       << ',' << m.specificity << '\n';
  };
  os.precision(12);
  for (const PerImageRecord& r : report.per_image) row(r.id, r.metrics);
  row("mean", report.mean);
  row("stddev", report.stddev);
}

void write_roc_csv(const std::string& path, const RocResult& roc) {
  std::ofstream os(path);
  if (!os) throw DataError("roc: cannot write " + path);
  os.precision(12);
  os << "fpr,tpr\n";
  for (const RocPoint& p : roc.points) os << p.fpr << ',' << p.tpr << '\n';
}

void write_roc_svg(const std::string& path, const RocResult& roc) {
  std::ofstream os(path);
  if (!os) throw DataError("roc: cannot write " + path);
  const int s = 512, m = 48;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << s + 2 * m << "' height='"
     << s + 2 * m << "'>\n";
  os << "<rect x='" << m << "' y='" << m << "' width='" << s << "' height='" << s
     << "' fill='white' stroke='black'/>\n";
  os << "<line x1='" << m << "' y1='" << m + s << "' x2='" << m + s << "' y2='" << m
     << "' stroke='gray' stroke-dasharray='4'/>\n";
  os << "<polyline fill='none' stroke='blue' stroke-width='2' points='";
  for (const RocPoint& p : roc.points)
    os << m + p.fpr * s << ',' << m + s - p.tpr * s << ' ';
  os << "'/>\n<text x='" << m << "' y='" << m - 10 << "'>AUC = " << roc.auc << "</text>\n</svg>\n";
}

}  // namespace adnet::evaluation
