#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "smokelab/adaptation.hpp"
#include "smokelab/rng.hpp"

namespace smokelab {

// Gaussian mixture parameters for one (domain, class) cell.
struct DomainClassSpec {
  Eigen::VectorXd mean;
  double stddev = 1.0;
};

struct SyntheticDomainSpec {
  int feature_dim = 4;
  DomainClassSpec source_bg;
  DomainClassSpec source_smoke;
  DomainClassSpec target_bg;
  DomainClassSpec target_smoke;
  int pixels_per_image = 64;
  int images_per_domain = 100;
  std::uint64_t seed = 0;

  // Classes separated along the second axis, domains offset along the first:
  // bg at the origin, smoke at +2 e2, target shifted by domain_offset e1.
  static SyntheticDomainSpec shifted(double domain_offset = 2.0, std::uint64_t seed = 0);
};

// One image: a batch of per-pixel feature rows with class labels.
struct PixelBatch {
  Eigen::MatrixXd features;  // pixels x D
  Eigen::VectorXd labels;    // 1 = smoke, 0 = background
  int domain = 0;            // 0 = source, 1 = target
};

struct SyntheticDataset {
  std::vector<PixelBatch> source;
  std::vector<PixelBatch> target;
};

SyntheticDataset synth_dataset(const SyntheticDomainSpec& spec);

// Linear per-pixel feature generator with a logistic segmentation head.
struct ToyGenerator {
  Eigen::MatrixXd weight;      // C x D
  Eigen::VectorXd bias;        // C
  Eigen::VectorXd seg_weight;  // C
  double seg_bias = 0.0;

  Eigen::Index channels() const { return weight.rows(); }

  // F = W X^T + b 1^T, one feature column per pixel.
  Eigen::MatrixXd features(const Eigen::MatrixXd& pixels) const;
  // Per-pixel segmentation logits from a feature matrix.
  Eigen::VectorXd seg_logits(const Eigen::MatrixXd& feature_cols) const;
};

// Logistic domain discriminator on a pooled feature vector.
struct ToyDiscriminator {
  Eigen::VectorXd weight;  // C
  double bias = 0.0;

  double logit(const Eigen::VectorXd& pooled) const { return weight.dot(pooled) + bias; }
  // Sigmoid output clamped away from {0,1}.
  double score(const Eigen::VectorXd& pooled) const;
};

ToyGenerator make_generator(int channels, int feature_dim, double init_scale, Rng& rng);
ToyDiscriminator make_discriminator(int channels, double init_scale, Rng& rng);

struct TrainSchedule {
  int epochs = 500;
  double learning_rate = 0.4;
  double lambda_grl_start = 0.0;
  double lambda_grl_end = 1.0;  // linear ramp across epochs
  LossWeights weights;          // lambda_da = 0.1, lambda_p = 1.0 defaults
  std::uint64_t seed = 0;
  int feature_channels = 4;
  double init_scale = 0.5;
  int probe_every = 0;  // evaluate the domain probe every k epochs; 0 = off
};

// GRL strength for a 0-based epoch under the linear ramp.
double lambda_grl_at(const TrainSchedule& sched, int epoch);

// All gradients for one source/target batch pair. Seg-loss and domain-loss
// contributions to the generator are kept separate so the reversal contract
// can be inspected.
struct StepGradients {
  double seg_loss = 0.0;  // L^S + lambda_p L^T
  double da_loss = 0.0;   // unweighted quarter-sum of the present CE terms

  Eigen::MatrixXd weight_seg;
  Eigen::VectorXd bias_seg;
  Eigen::VectorXd seg_weight_seg;
  double seg_bias_seg = 0.0;

  // Domain contribution after the reversal layer (or pass-through).
  Eigen::MatrixXd weight_dom;
  Eigen::VectorXd bias_dom;

  Eigen::VectorXd disc_smoke_weight;
  double disc_smoke_bias = 0.0;
  Eigen::VectorXd disc_bg_weight;
  double disc_bg_bias = 0.0;
};

// Forward + backward for one batch pair following the training procedure:
// class masks from the seg logits, per-class attention-pooled features into
// the two discriminators, source label 0 / target label 1. Masks and
// attention weights are treated as constants on the domain path; the
// reversal applies to the feature map only. `use_grl = false` substitutes a
// pass-through layer (gradient multiplier +1 instead of -lambda_grl).
StepGradients compute_step(const ToyGenerator& gen, const ToyDiscriminator& disc_smoke,
                           const ToyDiscriminator& disc_bg, const PixelBatch& source,
                           const PixelBatch& target, const LossWeights& weights,
                           double lambda_grl, bool use_grl = true);

struct EpochStats {
  int epoch = 0;
  double seg_loss = 0.0;
  double da_loss = 0.0;
  double lambda_grl = 0.0;
  double probe_accuracy = 0.0;
  bool probe_evaluated = false;
};

struct TrainResult {
  ToyGenerator generator;
  ToyDiscriminator disc_smoke;
  ToyDiscriminator disc_bg;
  ToyGenerator initial_generator;  // frozen copy of the init, for baselines
  std::vector<EpochStats> history;
};

// Alternating source-first pairwise gradient-descent training with the
// linear GRL ramp. Fully deterministic given (spec.seed, sched.seed).
TrainResult train(const SyntheticDomainSpec& spec, const TrainSchedule& sched);

// Mean-pooled generator features per image, one row per image, source images
// first. `tags` receives the matching domain labels.
Eigen::MatrixXd pooled_image_features(const ToyGenerator& gen, const SyntheticDataset& data,
                                      std::vector<int>* tags = nullptr);

// Mean of raw pixel features per image (identity generator baseline).
Eigen::MatrixXd mean_pixel_features(const SyntheticDataset& data, std::vector<int>* tags = nullptr);

// Held-out accuracy of a fresh logistic domain probe on a 70/30 split.
double probe_accuracy(const Eigen::MatrixXd& features, const std::vector<int>& domain_tags,
                      std::uint64_t seed);

// epoch,seg_loss,da_loss,lambda_grl,probe_accuracy (blank when not evaluated).
void write_history_csv(const std::vector<EpochStats>& history, std::ostream& os);

}  // namespace smokelab
