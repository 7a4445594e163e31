#pragma once

#include <optional>
#include <string>

#include "smokelab/core.hpp"

namespace smokelab {

enum class ExpectedSmoke { kTrue, kFalse, kUnknown };

// One row of the video-level label table.
struct WeakLabel {
  int raw_value = -1;
  std::string meaning;
  ExpectedSmoke expected_smoke = ExpectedSmoke::kUnknown;
};

enum class ConstraintKind { kPositiveConstraint, kSkipVideo, kNoConstraint };

// Decoded video-level constraint. `confidence` is set only for
// kPositiveConstraint and takes one of {0.9, 0.8, 0.7, 0.65}.
struct ConstraintDecision {
  ConstraintKind kind = ConstraintKind::kNoConstraint;
  std::optional<double> confidence;
};

struct FusionConfig {
  double lambda_positive = 0.8;
  // Retained for the alternative reading of negative labels; unused by the
  // default skip policy.
  double lambda_negative = 0.4;
};

// Maps a raw integer label to its table row. Unknown values throw.
WeakLabel decode_label(int raw);

// Table row -> constraint: positives carry their inference confidence,
// negatives skip the video, disagreement / no-data impose no constraint.
ConstraintDecision label_to_constraint(const WeakLabel& label);

// Blends the model probability map with the constant constraint map given by
// the decision confidence: out = lambda * p + (1 - lambda) * confidence.
// NoConstraint passes the map through unchanged; SkipVideo must be filtered
// out by the caller and throws here.
ProbMap fuse_probability(const ProbMap& p_model, const ConstraintDecision& decision,
                         const FusionConfig& cfg = {});

}  // namespace smokelab
