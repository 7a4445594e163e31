#include "smokelab/selection.hpp"

#include <algorithm>
#include <stdexcept>

namespace smokelab {

namespace {

void validate(const SelectionConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) {
    throw std::invalid_argument("SelectionConfig: alpha must lie in [0,1]");
  }
  if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) {
    throw std::invalid_argument("SelectionConfig: beta must lie in [0,1]");
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) {
    throw std::invalid_argument("SelectionConfig: gamma must lie in [0,1]");
  }
  if (!(cfg.tau > 0.0 && cfg.tau < 1.0)) {
    throw std::invalid_argument("SelectionConfig: tau must lie in (0,1)");
  }
  if (cfg.top_k < 1) throw std::invalid_argument("SelectionConfig: top_k must be >= 1");
  if (cfg.neighbor_radius < 0) {
    throw std::invalid_argument("SelectionConfig: neighbor_radius must be >= 0");
  }
}

std::vector<int> clipped_window(int center, int radius, int frame_count) {
  const int lo = std::max(0, center - radius);
  const int hi = std::min(frame_count - 1, center + radius);
  std::vector<int> members;
  members.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (int i = lo; i <= hi; ++i) members.push_back(i);
  return members;
}

TemporalGroup build_group(std::span<const ProbMap> frames, int center, double center_confidence,
                          const SelectionConfig& cfg) {
  TemporalGroup g;
  g.center_index = center;
  g.member_indices = clipped_window(center, cfg.neighbor_radius, static_cast<int>(frames.size()));
  if (g.member_indices.size() < 2) {
    g.coherence = 1.0;  // no pairs: singleton groups are perfectly coherent
  } else {
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < g.member_indices.size(); ++i) {
      for (std::size_t j = i + 1; j < g.member_indices.size(); ++j) {
        sum += pair_similarity(frames[static_cast<std::size_t>(g.member_indices[i])],
                               frames[static_cast<std::size_t>(g.member_indices[j])], cfg);
        ++pairs;
      }
    }
    g.coherence = sum / static_cast<double>(pairs);
  }
  g.composite_score = cfg.gamma * center_confidence + (1.0 - cfg.gamma) * g.coherence;
  return g;
}

}  // namespace

double confidence_score(const ProbMap& p, const SelectionConfig& cfg) {
  validate(cfg);
  return cfg.alpha * p.mean() + (1.0 - cfg.alpha) * foreground_ratio(p, cfg.tau);
}

double pair_similarity(const ProbMap& pu, const ProbMap& pv, const SelectionConfig& cfg) {
  validate(cfg);
  detail::require_same_shape(pu, pv, "pair_similarity");
  const double mask_iou = iou(binarize(pu, cfg.tau), binarize(pv, cfg.tau));
  return cfg.beta * mask_iou + (1.0 - cfg.beta) * pearson_corr(pu, pv);
}

std::vector<FrameScore> score_frames(std::span<const ProbMap> frames, const SelectionConfig& cfg) {
  std::vector<FrameScore> scores;
  scores.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    scores.push_back({static_cast<int>(i), confidence_score(frames[i], cfg)});
  }
  return scores;
}

TemporalGroup score_groups(std::span<const ProbMap> frames, const SelectionConfig& cfg) {
  validate(cfg);
  if (frames.empty()) throw std::invalid_argument("score_groups: empty frame list");

  std::vector<FrameScore> scores = score_frames(frames, cfg);
  std::vector<FrameScore> ranked = scores;
  std::sort(ranked.begin(), ranked.end(), [](const FrameScore& a, const FrameScore& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.frame_index < b.frame_index;
  });
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.top_k), ranked.size());

  bool have_best = false;
  TemporalGroup best;
  for (std::size_t c = 0; c < k; ++c) {
    TemporalGroup g = build_group(frames, ranked[c].frame_index, ranked[c].confidence, cfg);
    if (!have_best || g.composite_score > best.composite_score ||
        (g.composite_score == best.composite_score && g.center_index < best.center_index)) {
      best = std::move(g);
      have_best = true;
    }
  }
  return best;
}

std::vector<int> select_frames(std::span<const ProbMap> frames, const SelectionConfig& cfg) {
  validate(cfg);
  if (frames.empty()) throw std::invalid_argument("select_frames: empty frame list");

  const int n = static_cast<int>(frames.size());
  bool any_foreground = false;
  for (const ProbMap& f : frames) {
    if (foreground_ratio(f, cfg.tau) > 0.0) {
      any_foreground = true;
      break;
    }
  }

  if (n < 2 || !any_foreground) {
    // Fallback: highest-confidence frame plus its immediate neighbors.
    std::vector<FrameScore> scores = score_frames(frames, cfg);
    int best = 0;
    for (const FrameScore& s : scores) {
      if (s.confidence > scores[static_cast<std::size_t>(best)].confidence) best = s.frame_index;
    }
    return clipped_window(best, 1, n);
  }

  return score_groups(frames, cfg).member_indices;
}

std::vector<std::pair<int, BinMask>> generate_pseudolabels(std::span<const ProbMap> frames,
                                                           const ConstraintDecision& decision,
                                                           const SelectionConfig& sel_cfg,
                                                           const FusionConfig& fus_cfg) {
  if (decision.kind == ConstraintKind::kSkipVideo) {
    throw std::invalid_argument("generate_pseudolabels: video excluded by negative label");
  }
  if (frames.empty()) throw std::invalid_argument("generate_pseudolabels: empty frame list");

  // Fusion happens before scoring so the constraint steers frame selection,
  // not just the final masks.
  std::vector<ProbMap> fused;
  fused.reserve(frames.size());
  for (const ProbMap& f : frames) fused.push_back(fuse_probability(f, decision, fus_cfg));

  std::vector<std::pair<int, BinMask>> out;
  for (int idx : select_frames(fused, sel_cfg)) {
    out.emplace_back(idx, binarize(fused[static_cast<std::size_t>(idx)], sel_cfg.tau));
  }
  return out;
}

}  // namespace smokelab
