#pragma once

#include <span>
#include <utility>
#include <vector>

#include "smokelab/constraints.hpp"
#include "smokelab/core.hpp"

namespace smokelab {

struct SelectionConfig {
  double alpha = 0.85;      // mean-activation vs foreground-ratio weight
  double tau = 0.6;         // binarization / foreground threshold
  int top_k = 3;            // candidate center frames
  int neighbor_radius = 2;  // +-n temporal neighbors
  double beta = 0.7;        // mask-IoU vs correlation weight
  double gamma = 0.8;       // center confidence vs coherence weight
};

struct FrameScore {
  int frame_index = 0;
  double confidence = 0.0;
};

struct TemporalGroup {
  int center_index = 0;
  std::vector<int> member_indices;  // contiguous window clipped to the video
  double coherence = 0.0;           // mean pair similarity, 1.0 for singletons
  double composite_score = 0.0;     // gamma * C(center) + (1-gamma) * coherence
};

// C(f) = alpha * mean(P) + (1 - alpha) * foreground_ratio(P, tau).
double confidence_score(const ProbMap& p, const SelectionConfig& cfg = {});

// sim(u,v) = beta * IoU(binarize(u), binarize(v)) + (1 - beta) * corr(u, v).
double pair_similarity(const ProbMap& pu, const ProbMap& pv, const SelectionConfig& cfg = {});

// Confidence for every frame, in frame order.
std::vector<FrameScore> score_frames(std::span<const ProbMap> frames,
                                     const SelectionConfig& cfg = {});

// Evaluates the top-k candidate centers and returns the group with the
// highest composite score. Ties break toward the lower frame index at every
// stage.
TemporalGroup score_groups(std::span<const ProbMap> frames, const SelectionConfig& cfg = {});

// Member indices of the best temporal group. When no valid group exists
// (fewer than two frames, or no frame has any foreground at tau) falls back
// to the highest-confidence frame and its immediate +-1 neighbors.
std::vector<int> select_frames(std::span<const ProbMap> frames, const SelectionConfig& cfg = {});

// Fuses every frame with the video-level constraint, selects frames on the
// fused maps, and binarizes the fused maps of the selected frames at tau.
std::vector<std::pair<int, BinMask>> generate_pseudolabels(std::span<const ProbMap> frames,
                                                           const ConstraintDecision& decision,
                                                           const SelectionConfig& sel_cfg = {},
                                                           const FusionConfig& fus_cfg = {});

}  // namespace smokelab
