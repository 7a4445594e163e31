#include "smokelab/constraints.hpp"

#include <array>
#include <stdexcept>

namespace smokelab {

namespace {

struct LabelRow {
  int raw;
  const char* meaning;
  ExpectedSmoke expected;
  ConstraintKind kind;
  double confidence;  // only meaningful for positive rows
};

constexpr std::array<LabelRow, 10> kLabelTable = {{
    {47, "Gold Standard Positive", ExpectedSmoke::kTrue, ConstraintKind::kPositiveConstraint, 0.9},
    {32, "Gold Standard Negative", ExpectedSmoke::kFalse, ConstraintKind::kSkipVideo, 0.0},
    {23, "Strong Positive", ExpectedSmoke::kTrue, ConstraintKind::kPositiveConstraint, 0.8},
    {16, "Strong Negative", ExpectedSmoke::kFalse, ConstraintKind::kSkipVideo, 0.0},
    {19, "Weak Positive", ExpectedSmoke::kTrue, ConstraintKind::kPositiveConstraint, 0.7},
    {20, "Weak Negative", ExpectedSmoke::kFalse, ConstraintKind::kSkipVideo, 0.0},
    {5, "Maybe Positive", ExpectedSmoke::kTrue, ConstraintKind::kPositiveConstraint, 0.65},
    {4, "Maybe Negative", ExpectedSmoke::kFalse, ConstraintKind::kSkipVideo, 0.0},
    {3, "Disagreement", ExpectedSmoke::kUnknown, ConstraintKind::kNoConstraint, 0.0},
    {-1, "No Data", ExpectedSmoke::kUnknown, ConstraintKind::kNoConstraint, 0.0},
}};

const LabelRow& find_row(int raw) {
  for (const auto& row : kLabelTable) {
    if (row.raw == raw) return row;
  }
  throw std::invalid_argument("unknown label value: " + std::to_string(raw));
}

}  // namespace

WeakLabel decode_label(int raw) {
  const LabelRow& row = find_row(raw);
  return WeakLabel{row.raw, row.meaning, row.expected};
}

ConstraintDecision label_to_constraint(const WeakLabel& label) {
  const LabelRow& row = find_row(label.raw_value);
  ConstraintDecision d;
  d.kind = row.kind;
  if (row.kind == ConstraintKind::kPositiveConstraint) d.confidence = row.confidence;
  return d;
}

ProbMap fuse_probability(const ProbMap& p_model, const ConstraintDecision& decision,
                         const FusionConfig& cfg) {
  switch (decision.kind) {
    case ConstraintKind::kSkipVideo:
      throw std::invalid_argument("fuse_probability: video excluded by negative label");
    case ConstraintKind::kNoConstraint:
      return p_model;
    case ConstraintKind::kPositiveConstraint: {
      if (!decision.confidence) {
        throw std::invalid_argument("fuse_probability: positive constraint without confidence");
      }
      const double lambda = cfg.lambda_positive;
      if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("fuse_probability: lambda_positive must lie in [0,1]");
      }
      // A video-level label carries no spatial information, so the constraint
      // map is the constant map at the label confidence.
      return lambda * p_model + (1.0 - lambda) * *decision.confidence;
    }
  }
  throw std::logic_error("fuse_probability: unreachable");
}

}  // namespace smokelab
