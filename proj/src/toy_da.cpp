#include "smokelab/toy_da.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace smokelab {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Mean binary cross-entropy of logits against {0,1} labels.
double bce_with_logits(const Eigen::VectorXd& logits, const Eigen::VectorXd& labels) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    sum += softplus(logits(i)) - labels(i) * logits(i);
  }
  return sum / static_cast<double>(logits.size());
}

void validate_spec(const SyntheticDomainSpec& spec) {
  if (spec.feature_dim < 1) throw std::invalid_argument("synth_dataset: feature_dim must be >= 1");
  if (spec.pixels_per_image < 1 || spec.images_per_domain < 1) {
    throw std::invalid_argument("synth_dataset: counts must be >= 1");
  }
  for (const DomainClassSpec* cell :
       {&spec.source_bg, &spec.source_smoke, &spec.target_bg, &spec.target_smoke}) {
    if (cell->mean.size() != spec.feature_dim) {
      throw std::invalid_argument("synth_dataset: mean dimension does not match feature_dim");
    }
    if (!(cell->stddev >= 0.0)) {
      throw std::invalid_argument("synth_dataset: stddev must be non-negative");
    }
  }
}

}  // namespace

SyntheticDomainSpec SyntheticDomainSpec::shifted(double domain_offset, std::uint64_t seed) {
  SyntheticDomainSpec spec;
  spec.feature_dim = 4;
  spec.seed = seed;
  Eigen::VectorXd bg = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd smoke = Eigen::VectorXd::Zero(4);
  smoke(1) = 2.0;  // class separation axis
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(4);
  shift(0) = domain_offset;  // domain axis
  spec.source_bg = {bg, 1.0};
  spec.source_smoke = {smoke, 1.0};
  spec.target_bg = {bg + shift, 1.0};
  spec.target_smoke = {smoke + shift, 1.0};
  return spec;
}

SyntheticDataset synth_dataset(const SyntheticDomainSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);
  SyntheticDataset data;

  const auto make_domain = [&](const DomainClassSpec& bg, const DomainClassSpec& smoke,
                               int domain) {
    std::vector<PixelBatch> images;
    images.reserve(static_cast<std::size_t>(spec.images_per_domain));
    for (int img = 0; img < spec.images_per_domain; ++img) {
      PixelBatch batch;
      batch.domain = domain;
      batch.features.resize(spec.pixels_per_image, spec.feature_dim);
      batch.labels.resize(spec.pixels_per_image);
      for (int p = 0; p < spec.pixels_per_image; ++p) {
        const bool is_smoke = rng.uniform() < 0.5;
        batch.labels(p) = is_smoke ? 1.0 : 0.0;
        const DomainClassSpec& cell = is_smoke ? smoke : bg;
        for (int d = 0; d < spec.feature_dim; ++d) {
          batch.features(p, d) = cell.mean(d) + cell.stddev * rng.gaussian();
        }
      }
      images.push_back(std::move(batch));
    }
    return images;
  };

  data.source = make_domain(spec.source_bg, spec.source_smoke, 0);
  data.target = make_domain(spec.target_bg, spec.target_smoke, 1);
  return data;
}

Eigen::MatrixXd ToyGenerator::features(const Eigen::MatrixXd& pixels) const {
  return (weight * pixels.transpose()).colwise() + bias;
}

Eigen::VectorXd ToyGenerator::seg_logits(const Eigen::MatrixXd& feature_cols) const {
  return (feature_cols.transpose() * seg_weight).array() + seg_bias;
}

double ToyDiscriminator::score(const Eigen::VectorXd& pooled) const {
  return clamp_score(sigmoid(logit(pooled)));
}

ToyGenerator make_generator(int channels, int feature_dim, double init_scale, Rng& rng) {
  ToyGenerator gen;
  gen.weight.resize(channels, feature_dim);
  for (int r = 0; r < channels; ++r) {
    for (int c = 0; c < feature_dim; ++c) gen.weight(r, c) = init_scale * rng.gaussian();
  }
  gen.bias = Eigen::VectorXd::Zero(channels);
  gen.seg_weight.resize(channels);
  for (int r = 0; r < channels; ++r) gen.seg_weight(r) = init_scale * rng.gaussian();
  gen.seg_bias = 0.0;
  return gen;
}

ToyDiscriminator make_discriminator(int channels, double init_scale, Rng& rng) {
  ToyDiscriminator disc;
  disc.weight.resize(channels);
  for (int r = 0; r < channels; ++r) disc.weight(r) = init_scale * rng.gaussian();
  disc.bias = 0.0;
  return disc;
}

double lambda_grl_at(const TrainSchedule& sched, int epoch) {
  const double progress =
      sched.epochs > 1 ? static_cast<double>(epoch) / static_cast<double>(sched.epochs - 1) : 1.0;
  return sched.lambda_grl_start + (sched.lambda_grl_end - sched.lambda_grl_start) * progress;
}

StepGradients compute_step(const ToyGenerator& gen, const ToyDiscriminator& disc_smoke,
                           const ToyDiscriminator& disc_bg, const PixelBatch& source,
                           const PixelBatch& target, const LossWeights& weights,
                           double lambda_grl, bool use_grl) {
  const Eigen::Index channels = gen.channels();
  StepGradients g;
  g.weight_seg = Eigen::MatrixXd::Zero(gen.weight.rows(), gen.weight.cols());
  g.bias_seg = Eigen::VectorXd::Zero(channels);
  g.seg_weight_seg = Eigen::VectorXd::Zero(channels);
  g.weight_dom = Eigen::MatrixXd::Zero(gen.weight.rows(), gen.weight.cols());
  g.bias_dom = Eigen::VectorXd::Zero(channels);
  g.disc_smoke_weight = Eigen::VectorXd::Zero(channels);
  g.disc_bg_weight = Eigen::VectorXd::Zero(channels);

  struct DomainPass {
    const PixelBatch* batch;
    double seg_scale;   // 1 for source, lambda_p for target
    double domain_lbl;  // 0 source, 1 target
    Eigen::MatrixXd feat;
    Eigen::VectorXd logits;
    Eigen::MatrixXd feat_grad_da;  // pre-reversal dL_DA/dF
  };

  DomainPass passes[2] = {{&source, 1.0, 0.0, {}, {}, {}},
                          {&target, weights.lambda_p, 1.0, {}, {}, {}}};

  for (DomainPass& pass : passes) {
    const PixelBatch& batch = *pass.batch;
    const Eigen::Index n = batch.features.rows();
    pass.feat = gen.features(batch.features);
    pass.logits = gen.seg_logits(pass.feat);
    pass.feat_grad_da = Eigen::MatrixXd::Zero(channels, n);

    // Segmentation loss and its backward pass.
    g.seg_loss += pass.seg_scale * bce_with_logits(pass.logits, batch.labels);
    Eigen::VectorXd dlogit(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      dlogit(i) = pass.seg_scale * (sigmoid(pass.logits(i)) - batch.labels(i)) /
                  static_cast<double>(n);
    }
    g.seg_weight_seg += pass.feat * dlogit;
    g.seg_bias_seg += dlogit.sum();
    // dF = seg_weight * dlogit^T, chained into W and b.
    g.weight_seg += gen.seg_weight * (batch.features.transpose() * dlogit).transpose();
    g.bias_seg += gen.seg_weight * dlogit.sum();

    // Domain terms: class masks and attention from the seg logits, detached.
    for (int cls = 0; cls < 2; ++cls) {
      const bool is_smoke = cls == 0;
      Eigen::VectorXd pool_w(n);
      Eigen::Index support = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const bool in_mask = is_smoke ? (pass.logits(i) > 0.0) : (pass.logits(i) <= 0.0);
        const double attn = is_smoke ? sigmoid(pass.logits(i)) : 1.0 - sigmoid(pass.logits(i));
        pool_w(i) = in_mask ? attn : 0.0;
        if (in_mask) ++support;
      }
      if (support == 0 || !(pool_w.sum() > 0.0)) continue;  // class absent in this batch

      const ToyDiscriminator& disc = is_smoke ? disc_smoke : disc_bg;
      const Eigen::VectorXd pooled = attention_pool(pass.feat, pool_w);
      const double score = disc.score(pooled);
      g.da_loss +=
          0.25 * (pass.domain_lbl == 0.0 ? -std::log1p(-score) : -std::log(score));

      // d(term)/d(logit) collapses to score - label; scale by the loss weight.
      const double dzeta = weights.lambda_da * 0.25 * (score - pass.domain_lbl);
      Eigen::VectorXd& disc_w_grad = is_smoke ? g.disc_smoke_weight : g.disc_bg_weight;
      double& disc_b_grad = is_smoke ? g.disc_smoke_bias : g.disc_bg_bias;
      disc_w_grad += dzeta * pooled;
      disc_b_grad += dzeta;

      const Eigen::VectorXd dpooled = dzeta * disc.weight;
      Eigen::VectorXd unused_weight_grad = Eigen::VectorXd::Zero(n);
      attention_pool_backward(pass.feat, pool_w, dpooled, pass.feat_grad_da,
                              unused_weight_grad);
    }

    const Eigen::MatrixXd reversed =
        use_grl ? grl_backward(pass.feat_grad_da, lambda_grl) : pass.feat_grad_da;
    g.weight_dom += reversed * batch.features;
    g.bias_dom += reversed.rowwise().sum();
  }

  return g;
}

TrainResult train(const SyntheticDomainSpec& spec, const TrainSchedule& sched) {
  if (sched.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(sched.learning_rate > 0.0)) {
    throw std::invalid_argument("train: learning_rate must be positive");
  }
  for (double v : {sched.lambda_grl_start, sched.lambda_grl_end}) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("train: lambda_grl ramp endpoints must lie in [0,1]");
    }
  }
  if (sched.feature_channels < 1) {
    throw std::invalid_argument("train: feature_channels must be >= 1");
  }

  const SyntheticDataset data = synth_dataset(spec);

  Rng init_rng(sched.seed);
  TrainResult result;
  result.generator = make_generator(sched.feature_channels, spec.feature_dim, sched.init_scale,
                                    init_rng);
  result.disc_smoke = make_discriminator(sched.feature_channels, sched.init_scale, init_rng);
  result.disc_bg = make_discriminator(sched.feature_channels, sched.init_scale, init_rng);
  result.initial_generator = result.generator;

  const double lr = sched.learning_rate;
  const std::size_t pairs = data.source.size();
  result.history.reserve(static_cast<std::size_t>(sched.epochs));

  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    const double lambda = lambda_grl_at(sched, epoch);
    double seg_sum = 0.0;
    double da_sum = 0.0;

    for (std::size_t i = 0; i < pairs; ++i) {
      const StepGradients grads =
          compute_step(result.generator, result.disc_smoke, result.disc_bg, data.source[i],
                       data.target[i], sched.weights, lambda);
      if (!std::isfinite(grads.seg_loss) || !std::isfinite(grads.da_loss)) {
        throw std::runtime_error("train: training diverged at epoch " + std::to_string(epoch));
      }
      seg_sum += grads.seg_loss;
      da_sum += grads.da_loss;

      result.generator.weight -= lr * (grads.weight_seg + grads.weight_dom);
      result.generator.bias -= lr * (grads.bias_seg + grads.bias_dom);
      result.generator.seg_weight -= lr * grads.seg_weight_seg;
      result.generator.seg_bias -= lr * grads.seg_bias_seg;
      result.disc_smoke.weight -= lr * grads.disc_smoke_weight;
      result.disc_smoke.bias -= lr * grads.disc_smoke_bias;
      result.disc_bg.weight -= lr * grads.disc_bg_weight;
      result.disc_bg.bias -= lr * grads.disc_bg_bias;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.seg_loss = seg_sum / static_cast<double>(pairs);
    stats.da_loss = da_sum / static_cast<double>(pairs);
    stats.lambda_grl = lambda;
    if (sched.probe_every > 0 &&
        (epoch % sched.probe_every == 0 || epoch == sched.epochs - 1)) {
      std::vector<int> tags;
      const Eigen::MatrixXd feats = pooled_image_features(result.generator, data, &tags);
      stats.probe_accuracy =
          probe_accuracy(feats, tags, derive_seed(sched.seed, "probe:" + std::to_string(epoch)));
      stats.probe_evaluated = true;
    }
    result.history.push_back(stats);
  }

  return result;
}

Eigen::MatrixXd pooled_image_features(const ToyGenerator& gen, const SyntheticDataset& data,
                                      std::vector<int>* tags) {
  const Eigen::Index n =
      static_cast<Eigen::Index>(data.source.size() + data.target.size());
  Eigen::MatrixXd feats(n, gen.channels());
  if (tags) tags->clear();
  Eigen::Index row = 0;
  for (const std::vector<PixelBatch>* domain : {&data.source, &data.target}) {
    for (const PixelBatch& batch : *domain) {
      feats.row(row++) = gen.features(batch.features).rowwise().mean().transpose();
      if (tags) tags->push_back(batch.domain);
    }
  }
  return feats;
}

Eigen::MatrixXd mean_pixel_features(const SyntheticDataset& data, std::vector<int>* tags) {
  const Eigen::Index n =
      static_cast<Eigen::Index>(data.source.size() + data.target.size());
  const Eigen::Index dim = data.source.empty() ? 0 : data.source.front().features.cols();
  Eigen::MatrixXd feats(n, dim);
  if (tags) tags->clear();
  Eigen::Index row = 0;
  for (const std::vector<PixelBatch>* domain : {&data.source, &data.target}) {
    for (const PixelBatch& batch : *domain) {
      feats.row(row++) = batch.features.colwise().mean();
      if (tags) tags->push_back(batch.domain);
    }
  }
  return feats;
}

double probe_accuracy(const Eigen::MatrixXd& features, const std::vector<int>& domain_tags,
                      std::uint64_t seed) {
  const Eigen::Index n = features.rows();
  if (static_cast<Eigen::Index>(domain_tags.size()) != n) {
    throw std::invalid_argument("probe_accuracy: tag count does not match feature rows");
  }
  Eigen::Index per_domain[2] = {0, 0};
  for (int t : domain_tags) {
    if (t != 0 && t != 1) throw std::invalid_argument("probe_accuracy: tags must be 0 or 1");
    ++per_domain[t];
  }
  if (per_domain[0] < 2 || per_domain[1] < 2) {
    throw std::invalid_argument("probe_accuracy: need at least 2 images per domain");
  }

  // Seeded 70/30 shuffle split.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, static_cast<int>(i));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  const Eigen::Index train_n = std::max<Eigen::Index>(1, (7 * n) / 10);
  const Eigen::Index test_n = n - train_n;
  if (test_n < 1) throw std::invalid_argument("probe_accuracy: insufficient data for a split");

  // Standardize with training statistics.
  const Eigen::Index dim = features.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < train_n; ++i) mean += features.row(order[i]).transpose();
  mean /= static_cast<double>(train_n);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < train_n; ++i) {
    var += (features.row(order[i]).transpose() - mean).array().square().matrix();
  }
  var /= static_cast<double>(train_n);
  const Eigen::VectorXd scale = (var.array() + 1e-12).sqrt().inverse().matrix();

  const auto standardized = [&](Eigen::Index row) {
    return ((features.row(row).transpose() - mean).array() * scale.array()).matrix().eval();
  };

  // Full-batch logistic regression.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim);
  double b = 0.0;
  constexpr int kIterations = 500;
  constexpr double kLr = 0.5;
  for (int it = 0; it < kIterations; ++it) {
    Eigen::VectorXd grad_w = Eigen::VectorXd::Zero(dim);
    double grad_b = 0.0;
    for (Eigen::Index i = 0; i < train_n; ++i) {
      const Eigen::VectorXd x = standardized(order[i]);
      const double p = sigmoid(w.dot(x) + b);
      const double d = p - static_cast<double>(domain_tags[static_cast<std::size_t>(order[i])]);
      grad_w += d * x;
      grad_b += d;
    }
    w -= kLr * grad_w / static_cast<double>(train_n);
    b -= kLr * grad_b / static_cast<double>(train_n);
  }

  Eigen::Index correct = 0;
  for (Eigen::Index i = train_n; i < n; ++i) {
    const Eigen::VectorXd x = standardized(order[i]);
    const int pred = (sigmoid(w.dot(x) + b) > 0.5) ? 1 : 0;
    if (pred == domain_tags[static_cast<std::size_t>(order[i])]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_n);
}

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& os) {
  os << "epoch,seg_loss,da_loss,lambda_grl,probe_accuracy\n";
  os << std::setprecision(17);
  for (const EpochStats& s : history) {
    os << s.epoch << ',' << s.seg_loss << ',' << s.da_loss << ',' << s.lambda_grl << ',';
    if (s.probe_evaluated) os << s.probe_accuracy;
    os << '\n';
  }
}

}  // namespace smokelab
