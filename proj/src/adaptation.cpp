#include "smokelab/adaptation.hpp"

#include <cmath>
#include <stdexcept>

namespace smokelab {

namespace {

constexpr double kNormEpsilon = 1e-12;

double softplus(double x) {
  // log(1 + e^x) without overflow on either side.
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
  }
}

}  // namespace

MaskVec flatten_mask(const BinMask& mask) {
  return Eigen::Map<const MaskVec>(mask.data(), mask.size());
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  require_dim(a, b, "cosine_similarity");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kNormEpsilon || nb < kNormEpsilon) return 0.0;
  return a.dot(b) / (na * nb);
}

void cosine_similarity_backward(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                double upstream, Eigen::VectorXd& grad_a,
                                Eigen::VectorXd& grad_b) {
  require_dim(a, b, "cosine_similarity_backward");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kNormEpsilon || nb < kNormEpsilon) return;  // similarity is constant 0 here
  const double s = a.dot(b) / (na * nb);
  grad_a += upstream * (b / (na * nb) - s * a / (na * na));
  grad_b += upstream * (a / (na * nb) - s * b / (nb * nb));
}

ClassCenter class_center(const PixelEmbeddings& z, const MaskVec& mask) {
  if (mask.size() != z.rows()) {
    throw std::invalid_argument("class_center: mask length does not match pixel count");
  }
  const Eigen::Index m = mask.count();
  if (m == 0) throw std::invalid_argument("class_center: class has no pixels");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (mask(i)) sum += z.row(i).transpose();
  }
  return sum / static_cast<double>(m);
}

void class_center_backward(const MaskVec& mask, const Eigen::VectorXd& upstream,
                           Eigen::MatrixXd& grad_z) {
  const Eigen::Index m = mask.count();
  if (m == 0) throw std::invalid_argument("class_center_backward: class has no pixels");
  const Eigen::RowVectorXd per_row = upstream.transpose() / static_cast<double>(m);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    if (mask(i)) grad_z.row(i) += per_row;
  }
}

double pixel_contrastive(const Eigen::VectorXd& zi, const ClassCenter& center_smoke,
                         const ClassCenter& center_bg, const ContrastiveConfig& cfg) {
  if (!(cfg.temperature > 0.0)) {
    throw std::invalid_argument("pixel_contrastive: temperature must be positive");
  }
  const double s1 = cosine_similarity(zi, center_smoke);
  const double s2 = cosine_similarity(zi, center_bg);
  return softplus((s2 - s1) / cfg.temperature);
}

void pixel_contrastive_backward(const Eigen::VectorXd& zi, const ClassCenter& center_smoke,
                                const ClassCenter& center_bg, const ContrastiveConfig& cfg,
                                double upstream, Eigen::VectorXd& grad_zi,
                                Eigen::VectorXd& grad_center_smoke,
                                Eigen::VectorXd& grad_center_bg) {
  if (!(cfg.temperature > 0.0)) {
    throw std::invalid_argument("pixel_contrastive_backward: temperature must be positive");
  }
  const double s1 = cosine_similarity(zi, center_smoke);
  const double s2 = cosine_similarity(zi, center_bg);
  const double q = sigmoid((s2 - s1) / cfg.temperature);  // dL/d(s2 - s1) * temperature
  const double g1 = upstream * (-q / cfg.temperature);
  const double g2 = upstream * (q / cfg.temperature);
  cosine_similarity_backward(zi, center_smoke, g1, grad_zi, grad_center_smoke);
  cosine_similarity_backward(zi, center_bg, g2, grad_zi, grad_center_bg);
}

namespace {

void require_contrastive_classes(const PixelEmbeddings& z_x, const MaskVec& y_x,
                                 const PixelEmbeddings& z_ref, const MaskVec& y_ref) {
  if (y_x.size() != z_x.rows() || y_ref.size() != z_ref.rows()) {
    throw std::invalid_argument("contrastive_loss: mask length does not match pixel count");
  }
  if (z_x.cols() != z_ref.cols()) {
    throw std::invalid_argument("contrastive_loss: embedding dimension mismatch");
  }
  if (y_x.count() == 0) {
    throw std::invalid_argument("contrastive_loss: image has no smoke pixels");
  }
  if (y_ref.count() == 0) {
    throw std::invalid_argument("contrastive_loss: reference image has no smoke pixels");
  }
  if ((!y_ref).count() == 0) {
    throw std::invalid_argument("contrastive_loss: reference image has no background pixels");
  }
}

}  // namespace

double contrastive_loss(const PixelEmbeddings& z_x, const MaskVec& y_x,
                        const PixelEmbeddings& z_ref, const MaskVec& y_ref,
                        const ContrastiveConfig& cfg) {
  require_contrastive_classes(z_x, y_x, z_ref, y_ref);
  const ClassCenter center_smoke = class_center(z_ref, y_ref);
  const ClassCenter center_bg = class_center(z_ref, (!y_ref).eval());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < z_x.rows(); ++i) {
    if (y_x(i)) sum += pixel_contrastive(z_x.row(i).transpose(), center_smoke, center_bg, cfg);
  }
  return sum / static_cast<double>(y_x.count());
}

void contrastive_loss_backward(const PixelEmbeddings& z_x, const MaskVec& y_x,
                               const PixelEmbeddings& z_ref, const MaskVec& y_ref,
                               const ContrastiveConfig& cfg, double upstream,
                               Eigen::MatrixXd& grad_z_x, Eigen::MatrixXd& grad_z_ref) {
  require_contrastive_classes(z_x, y_x, z_ref, y_ref);
  const MaskVec y_ref_bg = !y_ref;
  const ClassCenter center_smoke = class_center(z_ref, y_ref);
  const ClassCenter center_bg = class_center(z_ref, y_ref_bg);

  const double scale = upstream / static_cast<double>(y_x.count());
  Eigen::VectorXd grad_center_smoke = Eigen::VectorXd::Zero(z_ref.cols());
  Eigen::VectorXd grad_center_bg = Eigen::VectorXd::Zero(z_ref.cols());
  for (Eigen::Index i = 0; i < z_x.rows(); ++i) {
    if (!y_x(i)) continue;
    Eigen::VectorXd grad_zi = Eigen::VectorXd::Zero(z_x.cols());
    pixel_contrastive_backward(z_x.row(i).transpose(), center_smoke, center_bg, cfg, scale,
                               grad_zi, grad_center_smoke, grad_center_bg);
    grad_z_x.row(i) += grad_zi.transpose();
  }
  class_center_backward(y_ref, grad_center_smoke, grad_z_ref);
  class_center_backward(y_ref_bg, grad_center_bg, grad_z_ref);
}

Eigen::VectorXd attention_pool(const Eigen::MatrixXd& features, const Eigen::VectorXd& weights) {
  if (weights.size() != features.cols()) {
    throw std::invalid_argument("attention_pool: weight count does not match pixel count");
  }
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("attention_pool: weights must be non-negative");
  }
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("attention_pool: degenerate attention");
  return features * weights / total;
}

void attention_pool_backward(const Eigen::MatrixXd& features, const Eigen::VectorXd& weights,
                             const Eigen::VectorXd& upstream, Eigen::MatrixXd& grad_features,
                             Eigen::VectorXd& grad_weights) {
  if (upstream.size() != features.rows()) {
    throw std::invalid_argument("attention_pool_backward: upstream dimension mismatch");
  }
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("attention_pool_backward: degenerate attention");
  const Eigen::VectorXd pooled = features * weights / total;
  grad_features += upstream * weights.transpose() / total;
  grad_weights += (features.transpose() * upstream - Eigen::VectorXd::Constant(
                                                         weights.size(), upstream.dot(pooled))) /
                  total;
}

Eigen::VectorXd attention_pool(const FeatureMap& f, const AttnMap& a) {
  if (a.rows() != f.height || a.cols() != f.width) {
    throw std::invalid_argument("attention_pool: attention shape does not match feature map");
  }
  if (f.values.cols() != f.pixels()) {
    throw std::invalid_argument("attention_pool: feature map values have wrong pixel count");
  }
  const Eigen::Map<const Eigen::VectorXd> w(a.data(), a.size());
  return attention_pool(f.values, w);
}

BinMask class_mask(const Image<double>& logit_map, SmokeClass cls) {
  if (!logit_map.allFinite()) {
    throw std::invalid_argument("class_mask: logits must be finite");
  }
  // sigmoid(x) > 0.5 is exactly x > 0.
  if (cls == SmokeClass::kSmoke) return logit_map > 0.0;
  return logit_map <= 0.0;
}

Eigen::MatrixXd grl_backward(const Eigen::MatrixXd& upstream, double lambda_grl) {
  if (lambda_grl < 0.0) throw std::invalid_argument("grl_backward: lambda_grl must be >= 0");
  return (-lambda_grl) * upstream;
}

Eigen::VectorXd grl_backward(const Eigen::VectorXd& upstream, double lambda_grl) {
  if (lambda_grl < 0.0) throw std::invalid_argument("grl_backward: lambda_grl must be >= 0");
  return (-lambda_grl) * upstream;
}

namespace {

void require_open_unit(double d, const char* name) {
  if (!(d > 0.0 && d < 1.0)) {
    throw std::invalid_argument(std::string("domain_adaptation_loss: ") + name +
                                " outside (0,1): " + std::to_string(d));
  }
}

}  // namespace

double domain_adaptation_loss(const DomainScores& s) {
  require_open_unit(s.d_smoke_source, "d_smoke_source");
  require_open_unit(s.d_bg_source, "d_bg_source");
  require_open_unit(s.d_smoke_target, "d_smoke_target");
  require_open_unit(s.d_bg_target, "d_bg_target");
  return 0.25 * (-std::log1p(-s.d_smoke_source) - std::log1p(-s.d_bg_source) -
                 std::log(s.d_smoke_target) - std::log(s.d_bg_target));
}

DomainScores domain_adaptation_loss_backward(const DomainScores& s, double upstream) {
  require_open_unit(s.d_smoke_source, "d_smoke_source");
  require_open_unit(s.d_bg_source, "d_bg_source");
  require_open_unit(s.d_smoke_target, "d_smoke_target");
  require_open_unit(s.d_bg_target, "d_bg_target");
  DomainScores g;
  g.d_smoke_source = upstream * 0.25 / (1.0 - s.d_smoke_source);
  g.d_bg_source = upstream * 0.25 / (1.0 - s.d_bg_source);
  g.d_smoke_target = upstream * -0.25 / s.d_smoke_target;
  g.d_bg_target = upstream * -0.25 / s.d_bg_target;
  return g;
}

double total_loss(double l_gen_source, double l_gen_target, double l_cont, double l_da,
                  const LossWeights& w) {
  return (l_gen_source + w.lambda_p * l_gen_target) + w.lambda_cont * l_cont +
         w.lambda_da * l_da;
}

GradCheckResult grad_check(const std::function<double(const Eigen::VectorXd&)>& loss_fn,
                           const Eigen::VectorXd& input, const Eigen::VectorXd& analytic_grad,
                           double epsilon) {
  if (analytic_grad.size() != input.size()) {
    throw std::invalid_argument("grad_check: gradient length does not match input");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");

  GradCheckResult result;
  Eigen::VectorXd x = input;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x(i);
    x(i) = saved + epsilon;
    const double f_plus = loss_fn(x);
    x(i) = saved - epsilon;
    const double f_minus = loss_fn(x);
    x(i) = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw std::runtime_error("grad_check: non-finite loss at perturbed point, coordinate " +
                               std::to_string(i));
    }
    const double g_fd = (f_plus - f_minus) / (2.0 * epsilon);
    const double g_a = analytic_grad(i);
    const double rel = std::abs(g_a - g_fd) / std::max(1e-8, std::abs(g_a) + std::abs(g_fd));
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace smokelab
