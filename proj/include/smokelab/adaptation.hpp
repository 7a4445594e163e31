#pragma once

#include <Eigen/Dense>

#include <functional>

#include "smokelab/core.hpp"

namespace smokelab {

// One row per pixel, one column per embedding dimension.
using PixelEmbeddings = Eigen::MatrixXd;
using ClassCenter = Eigen::VectorXd;
// Pixel-aligned boolean selector over the N rows of a PixelEmbeddings.
using MaskVec = Eigen::Array<bool, Eigen::Dynamic, 1>;

struct ContrastiveConfig {
  double temperature = 0.1;
};

struct LossWeights {
  double lambda_cont = 0.0;
  double lambda_da = 0.1;
  double lambda_p = 1.0;
  double lambda_grl = 1.0;
};

// Discriminator outputs for the four (class, domain) combinations, each
// strictly inside (0,1).
struct DomainScores {
  double d_smoke_source = 0.5;
  double d_bg_source = 0.5;
  double d_smoke_target = 0.5;
  double d_bg_target = 0.5;
};

enum class SmokeClass { kSmoke, kBackground };

// Clamp applied to raw sigmoid outputs before they enter a log.
inline constexpr double kScoreEpsilon = 1e-7;
inline double clamp_score(double d) {
  return std::min(1.0 - kScoreEpsilon, std::max(kScoreEpsilon, d));
}

// Row-major flattening of a 2-D mask into a pixel-aligned selector.
MaskVec flatten_mask(const BinMask& mask);

// --- cosine similarity -----------------------------------------------------

// a.b / (|a| |b|); returns 0 when either norm is below 1e-12.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Accumulates d(upstream * sim)/da and /db into grad_a, grad_b.
void cosine_similarity_backward(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                double upstream, Eigen::VectorXd& grad_a,
                                Eigen::VectorXd& grad_b);

// --- class centers ----------------------------------------------------------

// Arithmetic mean of the masked rows. Throws when the mask is empty.
ClassCenter class_center(const PixelEmbeddings& z, const MaskVec& mask);

// Accumulates the center gradient back onto the selected rows of grad_z.
void class_center_backward(const MaskVec& mask, const Eigen::VectorXd& upstream,
                           Eigen::MatrixXd& grad_z);

// --- pixel-wise contrastive loss --------------------------------------------

// -log( e^{s1/t} / (e^{s1/t} + e^{s2/t}) ) with s1 = sim(zi, center_smoke)
// and s2 = sim(zi, center_bg), computed with log-sum-exp stabilization.
double pixel_contrastive(const Eigen::VectorXd& zi, const ClassCenter& center_smoke,
                         const ClassCenter& center_bg, const ContrastiveConfig& cfg = {});

void pixel_contrastive_backward(const Eigen::VectorXd& zi, const ClassCenter& center_smoke,
                                const ClassCenter& center_bg, const ContrastiveConfig& cfg,
                                double upstream, Eigen::VectorXd& grad_zi,
                                Eigen::VectorXd& grad_center_smoke,
                                Eigen::VectorXd& grad_center_bg);

// --- image-level contrastive loss -------------------------------------------

// Mean of pixel_contrastive over the smoke pixels of x, against the smoke and
// background class centers of the reference image. Throws when a required
// class is absent, naming the missing class.
double contrastive_loss(const PixelEmbeddings& z_x, const MaskVec& y_x,
                        const PixelEmbeddings& z_ref, const MaskVec& y_ref,
                        const ContrastiveConfig& cfg = {});

void contrastive_loss_backward(const PixelEmbeddings& z_x, const MaskVec& y_x,
                               const PixelEmbeddings& z_ref, const MaskVec& y_ref,
                               const ContrastiveConfig& cfg, double upstream,
                               Eigen::MatrixXd& grad_z_x, Eigen::MatrixXd& grad_z_ref);

// --- attention-guided pooling -----------------------------------------------

// Per channel c: sum_j w_j F(c,j) / sum_j w_j. Weights must be non-negative
// with a positive sum.
Eigen::VectorXd attention_pool(const Eigen::MatrixXd& features, const Eigen::VectorXd& weights);

void attention_pool_backward(const Eigen::MatrixXd& features, const Eigen::VectorXd& weights,
                             const Eigen::VectorXd& upstream, Eigen::MatrixXd& grad_features,
                             Eigen::VectorXd& grad_weights);

// FeatureMap/AttnMap convenience wrapper (row-major spatial flattening).
Eigen::VectorXd attention_pool(const FeatureMap& f, const AttnMap& a);

// --- class masks ------------------------------------------------------------

// M_smoke = (sigmoid(logit) > 0.5), M_bg its complement. sigmoid(x) > 0.5 is
// exactly x > 0, so the boundary logit 0 lands in the background mask.
BinMask class_mask(const Image<double>& logit_map, SmokeClass cls);

// --- gradient reversal ------------------------------------------------------

// Forward pass of the reversal layer: identity.
inline FeatureMap grl_forward(FeatureMap f, double /*lambda_grl*/) { return f; }
inline Eigen::MatrixXd grl_forward(Eigen::MatrixXd f, double /*lambda_grl*/) { return f; }

// Reverse-pass contract: an incoming gradient g maps to -lambda_grl * g.
Eigen::MatrixXd grl_backward(const Eigen::MatrixXd& upstream, double lambda_grl);
Eigen::VectorXd grl_backward(const Eigen::VectorXd& upstream, double lambda_grl);

// --- domain adaptation loss ---------------------------------------------------

// 1/4 [ -log(1 - d_smoke_src) - log(1 - d_bg_src) - log(d_smoke_tgt)
//       - log(d_bg_tgt) ]: binary cross-entropy with source label 0 and
// target label 1. Scores must lie strictly inside (0,1).
double domain_adaptation_loss(const DomainScores& scores);

DomainScores domain_adaptation_loss_backward(const DomainScores& scores, double upstream);

// --- total loss ---------------------------------------------------------------

// (l_gen_source + lambda_p * l_gen_target) + lambda_cont * l_cont
//   + lambda_da * l_da.
double total_loss(double l_gen_source, double l_gen_target, double l_cont, double l_da,
                  const LossWeights& w);

// --- finite-difference gradient checking --------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
};

// Central finite differences per coordinate against the supplied analytic
// gradient. Relative error uses max(1e-8, |g_a| + |g_fd|) as denominator.
// Throws when the loss is non-finite at a perturbed point.
GradCheckResult grad_check(const std::function<double(const Eigen::VectorXd&)>& loss_fn,
                           const Eigen::VectorXd& input, const Eigen::VectorXd& analytic_grad,
                           double epsilon = 1e-6);

}  // namespace smokelab
