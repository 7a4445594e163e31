#include "smokelab/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace smokelab {

namespace {

std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> harmonic_f1(std::optional<double> precision, std::optional<double> recall) {
  if (!precision || !recall) return std::nullopt;
  const double sum = *precision + *recall;
  if (sum == 0.0) return std::nullopt;
  return 2.0 * (*precision) * (*recall) / sum;
}

std::optional<double> mean_of_present(std::optional<double> a, std::optional<double> b) {
  if (a && b) return 0.5 * (*a + *b);
  if (a) return a;
  return b;
}

struct OpacityCounts {
  std::int64_t high_inter = 0;
  std::int64_t low_inter = 0;
  std::int64_t g_high = 0;
  std::int64_t g_low = 0;
  std::int64_t pred_pos = 0;
};

OpacityCounts count_opacity(const BinMask& pred, const OpacityTruth& truth) {
  detail::require_same_shape(pred, truth, "opacity_metrics");
  OpacityCounts c;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const std::uint8_t label = truth(i);
    if (label != kOpacityBackground && label != kOpacityLow && label != kOpacityHigh) {
      throw std::invalid_argument("opacity_metrics: invalid opacity label " +
                                  std::to_string(static_cast<int>(label)));
    }
    const bool p = pred(i);
    if (p) ++c.pred_pos;
    if (label == kOpacityHigh) {
      ++c.g_high;
      if (p) ++c.high_inter;
    } else if (label == kOpacityLow) {
      ++c.g_low;
      if (p) ++c.low_inter;
    }
  }
  return c;
}

OpacityMetrics opacity_from_counts(const OpacityCounts& c) {
  // A class with no ground-truth pixels yields no metrics at all: scoring an
  // absent class as 0 would bias the dataset means.
  OpacityMetrics m;
  if (c.g_high > 0) {
    m.recall_high = ratio(c.high_inter, c.g_high);
    m.iou_high = ratio(c.high_inter, c.pred_pos + c.g_high - c.high_inter);
    m.precision_high = ratio(c.high_inter, c.pred_pos);
    m.f1_high = harmonic_f1(m.precision_high, m.recall_high);
  }
  if (c.g_low > 0) {
    m.recall_low = ratio(c.low_inter, c.g_low);
    m.iou_low = ratio(c.low_inter, c.pred_pos + c.g_low - c.low_inter);
    m.precision_low = ratio(c.low_inter, c.pred_pos);
    m.f1_low = harmonic_f1(m.precision_low, m.recall_low);
  }
  m.miou_smoke = mean_of_present(m.iou_high, m.iou_low);
  return m;
}

ImageMetrics metrics_from_counts(const ConfusionCounts& c, std::optional<double> mmse) {
  ImageMetrics m;
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.f1 = harmonic_f1(m.precision, m.recall);
  m.iou_smoke = ratio(c.tp, c.tp + c.fp + c.fn);
  m.iou_background = ratio(c.tn, c.tn + c.fp + c.fn);
  m.miou = mean_of_present(m.iou_smoke, m.iou_background);
  m.mmse = mmse;
  return m;
}

}  // namespace

ConfusionCounts confusion(const BinMask& pred, const BinMask& gt) {
  detail::require_same_shape(pred, gt, "confusion");
  ConfusionCounts c;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (pred(i)) {
      gt(i) ? ++c.tp : ++c.fp;
    } else {
      gt(i) ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

ImageMetrics overall_metrics(const BinMask& pred, const BinMask& gt, MmseMode mode,
                             const ProbMap* pred_prob) {
  const ConfusionCounts c = confusion(pred, gt);

  std::optional<double> mmse;
  switch (mode) {
    case MmseMode::kBinary:
      // Whole-image mean squared error of binary values: (fp + fn) / (H W).
      mmse = ratio(c.fp + c.fn, c.total());
      break;
    case MmseMode::kProb: {
      if (pred_prob == nullptr) {
        throw std::invalid_argument("overall_metrics: kProb mode needs the probability map");
      }
      detail::require_same_shape(*pred_prob, gt, "overall_metrics");
      double sum = 0.0;
      for (Eigen::Index i = 0; i < gt.size(); ++i) {
        const double d = (*pred_prob)(i) - (gt(i) ? 1.0 : 0.0);
        sum += d * d;
      }
      mmse = gt.size() > 0 ? std::optional<double>(sum / static_cast<double>(gt.size()))
                           : std::nullopt;
      break;
    }
    case MmseMode::kRegion:
      // Restricted to ground-truth smoke pixels; equals the miss rate there.
      mmse = ratio(c.fn, c.tp + c.fn);
      break;
  }
  return metrics_from_counts(c, mmse);
}

OpacityMetrics opacity_metrics(const BinMask& pred, const OpacityTruth& truth) {
  return opacity_from_counts(count_opacity(pred, truth));
}

BinMask opacity_to_binary(const OpacityTruth& truth) {
  return truth != kOpacityBackground;
}

std::optional<double> metric_value(const ImageRow& row, std::size_t idx) {
  const OpacityMetrics* op = row.opacity ? &*row.opacity : nullptr;
  switch (idx) {
    case 0: return row.overall.recall;
    case 1: return row.overall.precision;
    case 2: return row.overall.f1;
    case 3: return row.overall.iou_smoke;
    case 4: return row.overall.iou_background;
    case 5: return row.overall.miou;
    case 6: return row.overall.mmse;
    case 7: return op ? op->recall_high : std::nullopt;
    case 8: return op ? op->recall_low : std::nullopt;
    case 9: return op ? op->iou_high : std::nullopt;
    case 10: return op ? op->iou_low : std::nullopt;
    case 11: return op ? op->precision_high : std::nullopt;
    case 12: return op ? op->precision_low : std::nullopt;
    case 13: return op ? op->f1_high : std::nullopt;
    case 14: return op ? op->f1_low : std::nullopt;
    case 15: return op ? op->miou_smoke : std::nullopt;
    default: throw std::out_of_range("metric_value: bad metric index");
  }
}

AggregateReport aggregate(std::vector<ImageRow> rows) {
  if (rows.empty()) throw std::invalid_argument("aggregate: no image rows");
  AggregateReport report;
  report.rows = std::move(rows);
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    std::vector<double> values;
    values.reserve(report.rows.size());
    int skipped = 0;
    for (const ImageRow& row : report.rows) {
      if (const auto v = metric_value(row, m)) {
        values.push_back(*v);
      } else {
        ++skipped;
      }
    }
    MetricStat& stat = report.stats[m];
    stat.skipped = skipped;
    stat.counted = static_cast<int>(values.size());
    if (!values.empty()) {
      std::sort(values.begin(), values.end());
      double sum = 0.0;
      for (double v : values) sum += v;
      stat.mean = sum / static_cast<double>(values.size());
    }
  }
  return report;
}

void MicroAccumulator::add(const BinMask& pred, const BinMask& gt, MmseMode mode,
                           const ProbMap* pred_prob) {
  const ConfusionCounts c = confusion(pred, gt);
  counts_.tp += c.tp;
  counts_.fp += c.fp;
  counts_.fn += c.fn;
  counts_.tn += c.tn;
  if (mode == MmseMode::kProb) {
    if (pred_prob == nullptr) {
      throw std::invalid_argument("MicroAccumulator: kProb mode needs the probability map");
    }
    detail::require_same_shape(*pred_prob, gt, "MicroAccumulator");
    for (Eigen::Index i = 0; i < gt.size(); ++i) {
      const double d = (*pred_prob)(i) - (gt(i) ? 1.0 : 0.0);
      sq_err_sum_ += d * d;
    }
  }
  region_miss_ += c.fn;
}

void MicroAccumulator::add_opacity(const BinMask& pred, const OpacityTruth& truth) {
  const OpacityCounts c = count_opacity(pred, truth);
  any_opacity_ = true;
  high_inter_ += c.high_inter;
  low_inter_ += c.low_inter;
  g_high_ += c.g_high;
  g_low_ += c.g_low;
  pred_pos_ += c.pred_pos;
}

ImageMetrics MicroAccumulator::overall(MmseMode mode) const {
  std::optional<double> mmse;
  switch (mode) {
    case MmseMode::kBinary:
      mmse = ratio(counts_.fp + counts_.fn, counts_.total());
      break;
    case MmseMode::kProb:
      mmse = counts_.total() > 0
                 ? std::optional<double>(sq_err_sum_ / static_cast<double>(counts_.total()))
                 : std::nullopt;
      break;
    case MmseMode::kRegion:
      mmse = ratio(region_miss_, counts_.tp + counts_.fn);
      break;
  }
  return metrics_from_counts(counts_, mmse);
}

std::optional<OpacityMetrics> MicroAccumulator::opacity() const {
  if (!any_opacity_) return std::nullopt;
  OpacityCounts c;
  c.high_inter = high_inter_;
  c.low_inter = low_inter_;
  c.g_high = g_high_;
  c.g_low = g_low_;
  c.pred_pos = pred_pos_;
  return opacity_from_counts(c);
}

}  // namespace smokelab
