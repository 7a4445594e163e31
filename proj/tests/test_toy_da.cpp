#include <doctest.h>

#include <sstream>

#include "smokelab/toy_da.hpp"
#include "support.hpp"

using namespace smokelab;
using namespace smokelab::testsupport;

namespace {

SyntheticDomainSpec small_spec(std::uint64_t seed = 7) {
  SyntheticDomainSpec spec = SyntheticDomainSpec::shifted(2.0, seed);
  spec.pixels_per_image = 16;
  spec.images_per_domain = 20;
  return spec;
}

bool same_generator(const ToyGenerator& a, const ToyGenerator& b) {
  return a.weight.cwiseEqual(b.weight).all() && a.bias.cwiseEqual(b.bias).all() &&
         a.seg_weight.cwiseEqual(b.seg_weight).all() && a.seg_bias == b.seg_bias;
}

}  // namespace

TEST_CASE("synthetic dataset is seed-deterministic") {
  const SyntheticDomainSpec spec = small_spec();
  const SyntheticDataset a = synth_dataset(spec);
  const SyntheticDataset b = synth_dataset(spec);
  REQUIRE(a.source.size() == b.source.size());
  for (std::size_t i = 0; i < a.source.size(); ++i) {
    CHECK(a.source[i].features.cwiseEqual(b.source[i].features).all());
    CHECK(a.source[i].labels.cwiseEqual(b.source[i].labels).all());
  }
  CHECK(a.target.back().features.cwiseEqual(b.target.back().features).all());
}

TEST_CASE("zero stddev collapses samples onto the class-domain means") {
  SyntheticDomainSpec spec = small_spec();
  for (DomainClassSpec* cell :
       {&spec.source_bg, &spec.source_smoke, &spec.target_bg, &spec.target_smoke}) {
    cell->stddev = 0.0;
  }
  const SyntheticDataset data = synth_dataset(spec);
  for (const PixelBatch& batch : data.target) {
    for (Eigen::Index p = 0; p < batch.features.rows(); ++p) {
      const Eigen::VectorXd expected =
          batch.labels(p) == 1.0 ? spec.target_smoke.mean : spec.target_bg.mean;
      CHECK((batch.features.row(p).transpose() - expected).norm() == 0.0);
    }
  }
}

TEST_CASE("probe separates offset domains and not identical ones") {
  // Offset 2 sigma: raw per-image features are trivially separable.
  const SyntheticDataset offset = synth_dataset(small_spec());
  std::vector<int> tags;
  const Eigen::MatrixXd raw = mean_pixel_features(offset, &tags);
  CHECK(probe_accuracy(raw, tags, 99) >= 0.9);

  // Identical distributions: held-out accuracy hovers near chance.
  SyntheticDomainSpec same = SyntheticDomainSpec::shifted(0.0, 11);
  same.pixels_per_image = 16;
  same.images_per_domain = 100;  // 200 images total
  const SyntheticDataset identical = synth_dataset(same);
  const Eigen::MatrixXd feats = mean_pixel_features(identical, &tags);
  const double acc = probe_accuracy(feats, tags, 100);
  CHECK(acc >= 0.35);
  CHECK(acc <= 0.65);
}

TEST_CASE("probe rejects degenerate inputs") {
  Eigen::MatrixXd feats(3, 2);
  feats.setZero();
  CHECK_THROWS_AS(probe_accuracy(feats, {0, 0, 1}, 1), std::invalid_argument);
  CHECK_THROWS_AS(probe_accuracy(feats, {0, 1}, 1), std::invalid_argument);
}

TEST_CASE("gradient reversal contract inside a training step") {
  const SyntheticDomainSpec spec = small_spec();
  const SyntheticDataset data = synth_dataset(spec);
  Rng rng(5);
  const ToyGenerator gen = make_generator(4, spec.feature_dim, 0.5, rng);
  const ToyDiscriminator ds = make_discriminator(4, 0.5, rng);
  const ToyDiscriminator db = make_discriminator(4, 0.5, rng);
  LossWeights w;

  const StepGradients reversed =
      compute_step(gen, ds, db, data.source[0], data.target[0], w, 0.5, /*use_grl=*/true);
  const StepGradients pass =
      compute_step(gen, ds, db, data.source[0], data.target[0], w, 0.5, /*use_grl=*/false);

  // Generator-side domain gradient is exactly -0.5x the pass-through one.
  CHECK((reversed.weight_dom + 0.5 * pass.weight_dom).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((reversed.bias_dom + 0.5 * pass.bias_dom).cwiseAbs().maxCoeff() <= 1e-12);
  // Discriminator gradients do not pass through the reversal layer.
  CHECK(reversed.disc_smoke_weight.cwiseEqual(pass.disc_smoke_weight).all());
  CHECK(reversed.disc_bg_weight.cwiseEqual(pass.disc_bg_weight).all());

  // lambda = 0 silences the generator's domain gradient entirely.
  const StepGradients silent =
      compute_step(gen, ds, db, data.source[0], data.target[0], w, 0.0, /*use_grl=*/true);
  CHECK(silent.weight_dom.isZero(0.0));
  CHECK(silent.bias_dom.isZero(0.0));
  CHECK(silent.disc_smoke_weight.cwiseEqual(pass.disc_smoke_weight).all());  // discs unaffected
}

TEST_CASE("discriminators never receive segmentation gradients") {
  const SyntheticDomainSpec spec = small_spec();
  const SyntheticDataset data = synth_dataset(spec);
  Rng rng(6);
  const ToyGenerator gen = make_generator(4, spec.feature_dim, 0.5, rng);
  const ToyDiscriminator ds = make_discriminator(4, 0.5, rng);
  const ToyDiscriminator db = make_discriminator(4, 0.5, rng);

  LossWeights w;
  w.lambda_da = 0.0;  // remove the only path into the discriminators
  const StepGradients g =
      compute_step(gen, ds, db, data.source[0], data.target[0], w, 1.0);
  CHECK(g.seg_loss > 0.0);
  CHECK(g.disc_smoke_weight.isZero(0.0));
  CHECK(g.disc_smoke_bias == 0.0);
  CHECK(g.disc_bg_weight.isZero(0.0));
  CHECK(g.disc_bg_bias == 0.0);
  CHECK(g.weight_dom.isZero(0.0));
}

TEST_CASE("step da_loss agrees with the domain_adaptation_loss operation") {
  const SyntheticDomainSpec spec = small_spec();
  const SyntheticDataset data = synth_dataset(spec);
  Rng rng(8);
  const ToyGenerator gen = make_generator(4, spec.feature_dim, 0.5, rng);
  const ToyDiscriminator ds = make_discriminator(4, 0.5, rng);
  const ToyDiscriminator db = make_discriminator(4, 0.5, rng);

  // Recompute the four scores by hand along the documented forward path.
  const auto scores_for = [&](const PixelBatch& batch, double* smoke_score, double* bg_score) {
    const Eigen::MatrixXd feat = gen.features(batch.features);
    const Eigen::VectorXd logits = gen.seg_logits(feat);
    for (int cls = 0; cls < 2; ++cls) {
      Eigen::VectorXd w(logits.size());
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const bool in_mask = cls == 0 ? logits(i) > 0.0 : logits(i) <= 0.0;
        const double sig = 1.0 / (1.0 + std::exp(-logits(i)));
        w(i) = in_mask ? (cls == 0 ? sig : 1.0 - sig) : 0.0;
      }
      REQUIRE(w.sum() > 0.0);  // this fixture keeps both classes populated
      const Eigen::VectorXd pooled = attention_pool(feat, w);
      const double score = (cls == 0 ? ds : db).score(pooled);
      *(cls == 0 ? smoke_score : bg_score) = score;
    }
  };

  DomainScores scores;
  scores_for(data.source[0], &scores.d_smoke_source, &scores.d_bg_source);
  scores_for(data.target[0], &scores.d_smoke_target, &scores.d_bg_target);

  const StepGradients g =
      compute_step(gen, ds, db, data.source[0], data.target[0], LossWeights{}, 1.0);
  CHECK(g.da_loss == doctest::Approx(domain_adaptation_loss(scores)).epsilon(1e-12));
}

TEST_CASE("training is deterministic and records history per epoch") {
  const SyntheticDomainSpec spec = small_spec();
  TrainSchedule sched;
  sched.epochs = 12;
  sched.seed = 3;
  const TrainResult a = train(spec, sched);
  const TrainResult b = train(spec, sched);
  CHECK(same_generator(a.generator, b.generator));
  CHECK(a.history.size() == 12);
  for (const EpochStats& s : a.history) {
    CHECK(std::isfinite(s.seg_loss));
    CHECK(std::isfinite(s.da_loss));
  }
  CHECK(a.history.front().lambda_grl == 0.0);
  CHECK(a.history.back().lambda_grl == 1.0);
}

TEST_CASE("lambda ramp is linear between its endpoints") {
  TrainSchedule sched;
  sched.epochs = 5;
  CHECK(lambda_grl_at(sched, 0) == 0.0);
  CHECK(lambda_grl_at(sched, 2) == doctest::Approx(0.5));
  CHECK(lambda_grl_at(sched, 4) == 1.0);
  sched.epochs = 1;
  CHECK(lambda_grl_at(sched, 0) == 1.0);
}

TEST_CASE("zero domain weight reduces to a segmentation-only run") {
  const SyntheticDomainSpec spec = small_spec();
  TrainSchedule ramped;
  ramped.epochs = 10;
  ramped.seed = 4;
  ramped.weights.lambda_da = 0.0;

  TrainSchedule pinned = ramped;
  pinned.lambda_grl_start = 0.0;
  pinned.lambda_grl_end = 0.0;

  const TrainResult a = train(spec, ramped);
  const TrainResult b = train(spec, pinned);
  CHECK(same_generator(a.generator, b.generator));
  // With lambda_da = 0 the discriminators stay at their initialization.
  CHECK(a.disc_smoke.weight.cwiseEqual(b.disc_smoke.weight).all());
  CHECK(a.disc_smoke.bias == b.disc_smoke.bias);
}

TEST_CASE("pinned-zero reversal still lets discriminators learn") {
  SyntheticDomainSpec spec = small_spec(9);
  spec.images_per_domain = 30;
  TrainSchedule sched;
  sched.epochs = 60;
  sched.seed = 9;
  sched.lambda_grl_start = 0.0;
  sched.lambda_grl_end = 0.0;  // generator never receives adversarial gradient

  const TrainResult r = train(spec, sched);
  const double first = r.history.front().da_loss;
  const double last = r.history.back().da_loss;
  CHECK(last < first);  // discriminator loss trends down
}

TEST_CASE("history CSV carries the probe column when evaluated") {
  const SyntheticDomainSpec spec = small_spec();
  TrainSchedule sched;
  sched.epochs = 4;
  sched.probe_every = 2;
  const TrainResult r = train(spec, sched);
  std::ostringstream out;
  write_history_csv(r.history, out);
  const std::string csv = out.str();
  CHECK(csv.rfind("epoch,seg_loss,da_loss,lambda_grl,probe_accuracy\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 epochs
}
