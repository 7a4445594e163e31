#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smokelab/core.hpp"

namespace smokelab {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
};

enum class MmseMode { kBinary, kProb, kRegion };

// Binary smoke-vs-background metrics. A metric is absent when its denominator
// is zero; absent metrics are excluded from dataset means.
struct ImageMetrics {
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> iou_smoke;
  std::optional<double> iou_background;
  std::optional<double> miou;  // mean of the present IoUs
  std::optional<double> mmse;
};

// Binary prediction evaluated against the high/low opacity split.
struct OpacityMetrics {
  std::optional<double> recall_high;
  std::optional<double> recall_low;
  std::optional<double> iou_high;
  std::optional<double> iou_low;
  std::optional<double> precision_high;
  std::optional<double> precision_low;
  std::optional<double> f1_high;
  std::optional<double> f1_low;
  std::optional<double> miou_smoke;  // mean of the present opacity IoUs
};

// Pixel-wise confusion counts; shapes must match.
ConfusionCounts confusion(const BinMask& pred, const BinMask& gt);

// Metrics from confusion counts. kProb needs the raw probability map; kRegion
// restricts the squared error to ground-truth smoke pixels.
ImageMetrics overall_metrics(const BinMask& pred, const BinMask& gt,
                             MmseMode mode = MmseMode::kBinary,
                             const ProbMap* pred_prob = nullptr);

OpacityMetrics opacity_metrics(const BinMask& pred, const OpacityTruth& truth);

// Derives the binary smoke ground truth (LOW or HIGH) from an opacity map.
BinMask opacity_to_binary(const OpacityTruth& truth);

struct ImageRow {
  std::string name;
  ImageMetrics overall;
  std::optional<OpacityMetrics> opacity;
};

inline constexpr std::array<const char*, 16> kMetricNames = {
    "recall",         "precision",      "f1",          "iou_smoke",
    "iou_background", "miou",           "mmse",        "recall_high",
    "recall_low",     "iou_high",       "iou_low",     "precision_high",
    "precision_low",  "f1_high",        "f1_low",      "miou_smoke"};

struct MetricStat {
  std::optional<double> mean;
  int counted = 0;
  int skipped = 0;
};

struct AggregateReport {
  std::vector<ImageRow> rows;
  std::array<MetricStat, kMetricNames.size()> stats;
};

// Value of the idx-th metric (kMetricNames order) for one image row.
std::optional<double> metric_value(const ImageRow& row, std::size_t idx);

// Macro aggregation: per-metric arithmetic mean over the images where the
// metric is present. Present values are summed in sorted order, so the result
// is independent of row order.
AggregateReport aggregate(std::vector<ImageRow> rows);

// Micro aggregation diagnostic: pools pixel counts across images and derives
// one metrics row from the pooled counts.
class MicroAccumulator {
 public:
  void add(const BinMask& pred, const BinMask& gt, MmseMode mode = MmseMode::kBinary,
           const ProbMap* pred_prob = nullptr);
  void add_opacity(const BinMask& pred, const OpacityTruth& truth);

  ImageMetrics overall(MmseMode mode = MmseMode::kBinary) const;
  std::optional<OpacityMetrics> opacity() const;

 private:
  ConfusionCounts counts_;
  double sq_err_sum_ = 0.0;       // kProb accumulator
  std::int64_t region_miss_ = 0;  // kRegion accumulator
  bool any_opacity_ = false;
  std::int64_t high_inter_ = 0;
  std::int64_t low_inter_ = 0;
  std::int64_t g_high_ = 0;
  std::int64_t g_low_ = 0;
  std::int64_t pred_pos_ = 0;
};

}  // namespace smokelab
