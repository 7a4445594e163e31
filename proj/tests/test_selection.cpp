#include <doctest.h>

#include <vector>

#include "smokelab/selection.hpp"
#include "support.hpp"

using namespace smokelab;
using namespace smokelab::testsupport;

namespace {

// Frames 3..7 share one high-activation blob; the rest is near-zero noise.
std::vector<ProbMap> stable_blob_video(double noise_scale = 0.04) {
  Rng rng(77);
  std::vector<ProbMap> frames;
  const ProbMap blob = blob_map(16, 16, 8, 8, 5, 0.9, 0.05);
  for (int f = 0; f < 9; ++f) {
    if (f >= 3 && f <= 7) {
      frames.push_back(blob);
    } else {
      ProbMap noise(16, 16);
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise(i) = noise_scale * rng.uniform();
      frames.push_back(noise);
    }
  }
  return frames;
}

}  // namespace

TEST_CASE("confidence score blends mean activation and foreground ratio") {
  SelectionConfig cfg;
  CHECK(confidence_score(ProbMap::Zero(4, 4), cfg) == 0.0);
  CHECK(confidence_score(ProbMap::Constant(4, 4, 1.0), cfg) == doctest::Approx(1.0));

  const ProbMap map = probmap_from({{0.2, 0.8}, {0.9, 0.1}});
  CHECK(confidence_score(map, cfg) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("confidence score is monotone in pixel probability") {
  Rng rng(31);
  SelectionConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    ProbMap map = random_probmap(rng, 5, 5);
    const double before = confidence_score(map, cfg);
    CHECK(before >= 0.0);
    CHECK(before <= 1.0);
    const Eigen::Index i = rng.uniform_int(0, static_cast<int>(map.size()) - 1);
    map(i) = std::min(1.0, map(i) + rng.uniform(0.0, 1.0 - map(i)));
    CHECK(confidence_score(map, cfg) >= before - 1e-15);
  }
}

TEST_CASE("pair similarity worked examples") {
  SelectionConfig cfg;  // beta = 0.7, tau = 0.6
  const ProbMap u = probmap_from({{1.0, 0.0, 0.0, 1.0}});
  const ProbMap v = probmap_from({{1.0, 1.0, 0.0, 0.0}});
  CHECK(pair_similarity(u, v, cfg) == doctest::Approx(0.7 / 3.0).epsilon(1e-12));

  const ProbMap w = probmap_from({{0.1, 0.7}, {0.9, 0.2}});
  CHECK(pair_similarity(w, w, cfg) == doctest::Approx(1.0));

  cfg.beta = 1.0;  // degenerates to mask IoU
  CHECK(pair_similarity(u, v, cfg) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("pair similarity is symmetric") {
  Rng rng(32);
  SelectionConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const ProbMap u = random_probmap(rng, 6, 6);
    const ProbMap v = random_probmap(rng, 6, 6);
    CHECK(pair_similarity(u, v, cfg) == pair_similarity(v, u, cfg));
  }
}

TEST_CASE("score_groups picks the coherent stable window") {
  SelectionConfig cfg;
  const std::vector<ProbMap> frames = stable_blob_video();
  const TemporalGroup best = score_groups(frames, cfg);
  CHECK(best.center_index == 5);
  CHECK(best.member_indices == std::vector<int>{3, 4, 5, 6, 7});
  CHECK(best.coherence == doctest::Approx(1.0));
  CHECK(best.composite_score ==
        cfg.gamma * confidence_score(frames[5], cfg) + (1.0 - cfg.gamma) * best.coherence);
}

TEST_CASE("score_groups handles singleton videos") {
  SelectionConfig cfg;
  const std::vector<ProbMap> frames = {ProbMap::Constant(4, 4, 0.8)};
  const TemporalGroup g = score_groups(frames, cfg);
  CHECK(g.member_indices == std::vector<int>{0});
  CHECK(g.coherence == 1.0);  // no pairs
  CHECK(g.composite_score ==
        doctest::Approx(cfg.gamma * confidence_score(frames[0], cfg) + (1.0 - cfg.gamma)));
  CHECK_THROWS_AS(score_groups(std::vector<ProbMap>{}, cfg), std::invalid_argument);
}

TEST_CASE("select_frames returns the stable window") {
  SelectionConfig cfg;
  CHECK(select_frames(stable_blob_video(), cfg) == std::vector<int>{3, 4, 5, 6, 7});
}

TEST_CASE("select_frames fallback paths") {
  SelectionConfig cfg;

  const std::vector<ProbMap> single = {ProbMap::Constant(4, 4, 0.9)};
  CHECK(select_frames(single, cfg) == std::vector<int>{0});

  const std::vector<ProbMap> zeros = {ProbMap::Zero(4, 4), ProbMap::Zero(4, 4)};
  CHECK(select_frames(zeros, cfg) == std::vector<int>{0, 1});

  CHECK_THROWS_AS(select_frames(std::vector<ProbMap>{}, cfg), std::invalid_argument);
}

TEST_CASE("select_frames output is a contiguous in-range window") {
  Rng rng(33);
  SelectionConfig cfg;
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 1 + rng.uniform_int(0, 11);
    std::vector<ProbMap> frames;
    for (int f = 0; f < n; ++f) frames.push_back(random_probmap(rng, 6, 6));
    const std::vector<int> picked = select_frames(frames, cfg);
    REQUIRE_FALSE(picked.empty());
    for (std::size_t i = 0; i < picked.size(); ++i) {
      CHECK(picked[i] >= 0);
      CHECK(picked[i] < n);
      if (i > 0) CHECK(picked[i] == picked[i - 1] + 1);
    }
  }
}

TEST_CASE("select_frames matches the exhaustive oracle") {
  Rng rng(34);
  SelectionConfig cfg;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + rng.uniform_int(0, 11);
    std::vector<ProbMap> frames;
    const bool zero_video = rng.uniform() < 0.15;
    for (int f = 0; f < n; ++f) {
      ProbMap map = random_probmap(rng, 5, 5);
      if (zero_video) map *= 0.3;  // nothing above tau: forces the fallback
      frames.push_back(std::move(map));
    }
    CHECK(select_frames(frames, cfg) == oracle_select(frames, cfg));
  }
}

TEST_CASE("selection is invariant under no-op fusion") {
  Rng rng(35);
  SelectionConfig cfg;
  const ConstraintDecision none{ConstraintKind::kNoConstraint, std::nullopt};
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<ProbMap> frames;
    const int n = 2 + rng.uniform_int(0, 6);
    for (int f = 0; f < n; ++f) frames.push_back(random_probmap(rng, 6, 6));
    std::vector<ProbMap> fused;
    for (const ProbMap& f : frames) fused.push_back(fuse_probability(f, none, FusionConfig{}));
    CHECK(select_frames(frames, cfg) == select_frames(fused, cfg));
  }
}

TEST_CASE("generate_pseudolabels on saturating and boundary maps") {
  SelectionConfig sel;
  FusionConfig fus;

  const ConstraintDecision none{ConstraintKind::kNoConstraint, std::nullopt};
  const std::vector<ProbMap> ones = {ProbMap::Constant(3, 3, 1.0)};
  const auto saturated = generate_pseudolabels(ones, none, sel, fus);
  REQUIRE(saturated.size() == 1);
  CHECK(saturated[0].first == 0);
  CHECK(saturated[0].second.all());

  // Fused 0.8*0.55 + 0.2*0.9 = 0.62 > tau: everything turns on.
  const ConstraintDecision strong{ConstraintKind::kPositiveConstraint, 0.9};
  const std::vector<ProbMap> mid = {ProbMap::Constant(3, 3, 0.55)};
  const auto fused_on = generate_pseudolabels(mid, strong, sel, fus);
  REQUIRE(fused_on.size() == 1);
  CHECK(fused_on[0].second.all());

  // Without the constraint 0.55 stays below tau.
  const auto fused_off = generate_pseudolabels(mid, none, sel, fus);
  REQUIRE(fused_off.size() == 1);
  CHECK(fused_off[0].second.count() == 0);

  const ConstraintDecision skip{ConstraintKind::kSkipVideo, std::nullopt};
  CHECK_THROWS_AS(generate_pseudolabels(mid, skip, sel, fus), std::invalid_argument);
}
