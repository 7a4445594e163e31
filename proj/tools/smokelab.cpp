#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "smokelab/adaptation.hpp"
#include "smokelab/pipeline.hpp"
#include "smokelab/rng.hpp"
#include "smokelab/toy_da.hpp"

namespace {

using namespace smokelab;

// SMOKELAB_SEED wins over config files and --seed flags.
std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("SMOKELAB_SEED");
  if (raw == nullptr) return std::nullopt;
  std::uint64_t value = 0;
  const std::string s(raw);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error("SMOKELAB_SEED is not an unsigned integer: " + s);
  }
  return value;
}

int cmd_pseudolabel(const std::string& config_path, std::optional<std::uint64_t> seed,
                    std::optional<int> jobs) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.seed = *seed;
  if (const auto env = env_seed()) cfg.seed = *env;
  if (jobs) cfg.parallelism = *jobs;

  const PseudolabelRunResult result = run_pseudolabel(cfg);
  int processed = 0;
  int skipped = 0;
  int errored = 0;
  for (const VideoResult& v : result.videos) {
    if (v.status == "processed") ++processed;
    if (v.status == "skipped") ++skipped;
    if (v.status == "error") {
      ++errored;
      std::cerr << "error: " << v.video_id << ": " << v.reason << '\n';
    }
  }
  std::cout << "videos: " << result.videos.size() << " processed: " << processed
            << " skipped: " << skipped << " errored: " << errored << '\n'
            << "manifest: " << result.manifest_path.string() << '\n';
  return errored == 0 ? 0 : 1;
}

int cmd_evaluate(const EvaluateConfig& cfg) {
  const AggregateReport report = run_evaluate(cfg);
  std::cout << "evaluated " << report.rows.size() << " image(s); report written to "
            << (cfg.out_dir / "report.json").string() << '\n';
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    if (report.stats[m].mean) {
      std::cout << "  " << kMetricNames[m] << ": " << *report.stats[m].mean;
      if (report.stats[m].skipped > 0) {
        std::cout << " (skipped " << report.stats[m].skipped << ")";
      }
      std::cout << '\n';
    }
  }
  return 0;
}

int cmd_toy_da(int epochs, std::uint64_t seed, const std::string& out_dir, int probe_every) {
  SyntheticDomainSpec spec = SyntheticDomainSpec::shifted(2.0, seed);
  TrainSchedule sched;
  sched.epochs = epochs;
  sched.seed = seed;
  sched.probe_every = probe_every;
  if (const auto env = env_seed()) {
    spec.seed = *env;
    sched.seed = *env;
  }

  const TrainResult result = train(spec, sched);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path csv_path = std::filesystem::path(out_dir) / "history.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
  write_history_csv(result.history, csv);

  const SyntheticDataset data = synth_dataset(spec);
  std::vector<int> tags;
  const Eigen::MatrixXd trained = pooled_image_features(result.generator, data, &tags);
  const double trained_acc = probe_accuracy(trained, tags, derive_seed(sched.seed, "probe"));
  const Eigen::MatrixXd frozen = pooled_image_features(result.initial_generator, data, &tags);
  const double frozen_acc = probe_accuracy(frozen, tags, derive_seed(sched.seed, "probe"));

  std::cout << "epochs: " << epochs << '\n'
            << "seg loss: " << result.history.front().seg_loss << " -> "
            << result.history.back().seg_loss << '\n'
            << "domain probe accuracy (trained generator): " << trained_acc << '\n'
            << "domain probe accuracy (frozen init generator): " << frozen_acc << '\n'
            << "history: " << csv_path.string() << '\n';
  return 0;
}

// One gradient-check line per operation; exits nonzero past the tolerance.
int cmd_check_grads(int trials, double eps) {
  constexpr double kTolerance = 1e-5;
  Rng rng(20240915);
  const auto random_vec = [&rng](int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.gaussian();
    return v;
  };

  struct Check {
    const char* name;
    double worst = 0.0;
  };
  std::vector<Check> checks;

  // cosine_similarity wrt both arguments.
  {
    Check c{"cosine_similarity"};
    for (int t = 0; t < trials; ++t) {
      const int dim = 2 + rng.uniform_int(0, 4);
      const Eigen::VectorXd a = random_vec(dim);
      const Eigen::VectorXd b = random_vec(dim);
      Eigen::VectorXd ga = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd gb = Eigen::VectorXd::Zero(dim);
      cosine_similarity_backward(a, b, 1.0, ga, gb);
      c.worst = std::max(
          c.worst,
          grad_check([&](const Eigen::VectorXd& x) { return cosine_similarity(x, b); }, a, ga,
                     eps)
              .max_rel_error);
      c.worst = std::max(
          c.worst,
          grad_check([&](const Eigen::VectorXd& x) { return cosine_similarity(a, x); }, b, gb,
                     eps)
              .max_rel_error);
    }
    checks.push_back(c);
  }

  // class_center via random scalar projection.
  {
    Check c{"class_center"};
    for (int t = 0; t < trials; ++t) {
      const int n = 3 + rng.uniform_int(0, 4);
      const int dim = 2 + rng.uniform_int(0, 3);
      Eigen::MatrixXd z(n, dim);
      for (int i = 0; i < n; ++i) z.row(i) = random_vec(dim).transpose();
      MaskVec mask(n);
      for (int i = 0; i < n; ++i) mask(i) = rng.uniform() < 0.6;
      mask(rng.uniform_int(0, n - 1)) = true;  // keep the class nonempty
      const Eigen::VectorXd probe = random_vec(dim);
      Eigen::MatrixXd gz = Eigen::MatrixXd::Zero(n, dim);
      class_center_backward(mask, probe, gz);
      const Eigen::VectorXd flat_grad =
          Eigen::Map<const Eigen::VectorXd>(gz.data(), gz.size());
      const Eigen::VectorXd flat_z = Eigen::Map<const Eigen::VectorXd>(z.data(), z.size());
      const auto loss = [&](const Eigen::VectorXd& x) {
        const Eigen::MatrixXd zz = Eigen::Map<const Eigen::MatrixXd>(x.data(), n, dim);
        return probe.dot(class_center(zz, mask));
      };
      c.worst = std::max(c.worst, grad_check(loss, flat_z, flat_grad, eps).max_rel_error);
    }
    checks.push_back(c);
  }

  // pixel_contrastive wrt the pixel embedding and both centers.
  {
    Check c{"pixel_contrastive"};
    ContrastiveConfig cfg{1.0};  // unsaturated regime for FD checks
    for (int t = 0; t < trials; ++t) {
      const int dim = 2 + rng.uniform_int(0, 3);
      const Eigen::VectorXd zi = random_vec(dim);
      const Eigen::VectorXd cs = random_vec(dim);
      const Eigen::VectorXd cb = random_vec(dim);
      Eigen::VectorXd gzi = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd gcs = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd gcb = Eigen::VectorXd::Zero(dim);
      pixel_contrastive_backward(zi, cs, cb, cfg, 1.0, gzi, gcs, gcb);
      c.worst = std::max(c.worst,
                         grad_check(
                             [&](const Eigen::VectorXd& x) {
                               return pixel_contrastive(x, cs, cb, cfg);
                             },
                             zi, gzi, eps)
                             .max_rel_error);
      c.worst = std::max(c.worst,
                         grad_check(
                             [&](const Eigen::VectorXd& x) {
                               return pixel_contrastive(zi, x, cb, cfg);
                             },
                             cs, gcs, eps)
                             .max_rel_error);
      c.worst = std::max(c.worst,
                         grad_check(
                             [&](const Eigen::VectorXd& x) {
                               return pixel_contrastive(zi, cs, x, cfg);
                             },
                             cb, gcb, eps)
                             .max_rel_error);
    }
    checks.push_back(c);
  }

  // contrastive_loss wrt both embedding matrices.
  {
    Check c{"contrastive_loss"};
    ContrastiveConfig cfg{1.0};  // unsaturated regime for FD checks
    for (int t = 0; t < trials; ++t) {
      const int n = 4 + rng.uniform_int(0, 3);
      const int dim = 2 + rng.uniform_int(0, 3);
      Eigen::MatrixXd zx(n, dim);
      Eigen::MatrixXd zr(n, dim);
      for (int i = 0; i < n; ++i) {
        zx.row(i) = random_vec(dim).transpose();
        zr.row(i) = random_vec(dim).transpose();
      }
      MaskVec yx(n);
      MaskVec yr(n);
      for (int i = 0; i < n; ++i) {
        yx(i) = rng.uniform() < 0.5;
        yr(i) = rng.uniform() < 0.5;
      }
      yx(0) = true;
      yr(0) = true;
      yr(n - 1) = false;
      Eigen::MatrixXd gzx = Eigen::MatrixXd::Zero(n, dim);
      Eigen::MatrixXd gzr = Eigen::MatrixXd::Zero(n, dim);
      contrastive_loss_backward(zx, yx, zr, yr, cfg, 1.0, gzx, gzr);
      const auto check_matrix = [&](const Eigen::MatrixXd& base, const Eigen::MatrixXd& grad,
                                    bool vary_x) {
        const Eigen::VectorXd flat =
            Eigen::Map<const Eigen::VectorXd>(base.data(), base.size());
        const Eigen::VectorXd flat_grad =
            Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size());
        const auto loss = [&](const Eigen::VectorXd& v) {
          const Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(v.data(), n, dim);
          return vary_x ? contrastive_loss(m, yx, zr, yr, cfg)
                        : contrastive_loss(zx, yx, m, yr, cfg);
        };
        return grad_check(loss, flat, flat_grad, eps).max_rel_error;
      };
      c.worst = std::max(c.worst, check_matrix(zx, gzx, true));
      c.worst = std::max(c.worst, check_matrix(zr, gzr, false));
    }
    checks.push_back(c);
  }

  // attention_pool wrt features and weights, via scalar projection.
  {
    Check c{"attention_pool"};
    for (int t = 0; t < trials; ++t) {
      const int channels = 2 + rng.uniform_int(0, 3);
      const int pixels = 3 + rng.uniform_int(0, 4);
      Eigen::MatrixXd f(channels, pixels);
      for (int i = 0; i < channels; ++i) f.row(i) = random_vec(pixels).transpose();
      Eigen::VectorXd w(pixels);
      for (int i = 0; i < pixels; ++i) w(i) = 0.1 + rng.uniform();  // strictly positive
      const Eigen::VectorXd probe = random_vec(channels);
      Eigen::MatrixXd gf = Eigen::MatrixXd::Zero(channels, pixels);
      Eigen::VectorXd gw = Eigen::VectorXd::Zero(pixels);
      attention_pool_backward(f, w, probe, gf, gw);
      const Eigen::VectorXd flat_f = Eigen::Map<const Eigen::VectorXd>(f.data(), f.size());
      const Eigen::VectorXd flat_gf = Eigen::Map<const Eigen::VectorXd>(gf.data(), gf.size());
      c.worst = std::max(c.worst, grad_check(
                                      [&](const Eigen::VectorXd& v) {
                                        const Eigen::MatrixXd m =
                                            Eigen::Map<const Eigen::MatrixXd>(v.data(), channels,
                                                                              pixels);
                                        return probe.dot(attention_pool(m, w));
                                      },
                                      flat_f, flat_gf, eps)
                                      .max_rel_error);
      c.worst = std::max(c.worst, grad_check(
                                      [&](const Eigen::VectorXd& v) {
                                        return probe.dot(attention_pool(f, v));
                                      },
                                      w, gw, eps)
                                      .max_rel_error);
    }
    checks.push_back(c);
  }

  // domain_adaptation_loss wrt the four scores.
  {
    Check c{"domain_adaptation_loss"};
    for (int t = 0; t < trials; ++t) {
      Eigen::VectorXd s(4);
      for (int i = 0; i < 4; ++i) s(i) = 0.05 + 0.9 * rng.uniform();
      const DomainScores scores{s(0), s(1), s(2), s(3)};
      const DomainScores g = domain_adaptation_loss_backward(scores, 1.0);
      Eigen::VectorXd grad(4);
      grad << g.d_smoke_source, g.d_bg_source, g.d_smoke_target, g.d_bg_target;
      const auto loss = [](const Eigen::VectorXd& v) {
        return domain_adaptation_loss(DomainScores{v(0), v(1), v(2), v(3)});
      };
      c.worst = std::max(c.worst, grad_check(loss, s, grad, eps).max_rel_error);
    }
    checks.push_back(c);
  }

  bool ok = true;
  for (const Check& c : checks) {
    const bool pass = c.worst <= kTolerance;
    ok = ok && pass;
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << c.name << " max relative error " << c.worst
              << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weak-label pseudo-labeling, domain-adaptation math and segmentation evaluation"};
  app.require_subcommand(1);

  // pseudolabel
  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> jobs_flag;
  auto* pseudo = app.add_subcommand("pseudolabel", "Generate pseudo-label masks for a dataset");
  pseudo->add_option("--config", config_path, "Run config JSON")->required();
  std::uint64_t seed_value = 0;
  int jobs_value = 1;
  auto* seed_opt = pseudo->add_option("--seed", seed_value, "Run seed (overridden by SMOKELAB_SEED)");
  auto* jobs_opt = pseudo->add_option("--jobs", jobs_value, "Worker threads");

  // evaluate
  EvaluateConfig eval_cfg;
  std::string eval_pred, eval_gt, eval_out, eval_opacity, mmse_mode = "binary";
  auto* eval = app.add_subcommand("evaluate", "Evaluate prediction masks against ground truth");
  eval->add_option("--pred", eval_pred, "Prediction mask directory")->required();
  eval->add_option("--gt", eval_gt, "Ground-truth mask directory")->required();
  eval->add_option("--opacity-gt", eval_opacity, "Opacity ground-truth directory (0/128/255)");
  eval->add_option("--out", eval_out, "Output directory for report.json / report.csv")
      ->required();
  eval->add_flag("--micro", eval_cfg.micro, "Pool pixel counts instead of per-image means");
  eval->add_option("--mmse-mode", mmse_mode, "binary|prob|region")
      ->check(CLI::IsMember({"binary", "prob", "region"}));

  // crop
  CropConfig crop_cfg;
  std::string crop_images, crop_masks, crop_out;
  std::uint64_t crop_seed = 0;
  auto* crop = app.add_subcommand("crop", "Multi-patch cropping around mask components");
  crop->add_option("--images", crop_images, "Image directory")->required();
  crop->add_option("--masks", crop_masks, "Mask directory")->required();
  crop->add_option("--size", crop_cfg.spec.size, "Patch size in pixels");
  crop->add_option("--offset-radius", crop_cfg.spec.offset_radius, "Max centroid jitter");
  crop->add_option("--seed", crop_seed, "Seed (overridden by SMOKELAB_SEED)");
  crop->add_option("--out", crop_out, "Output directory")->required();

  // toy-da
  int toy_epochs = 500;
  std::uint64_t toy_seed = 0;
  std::string toy_out = "toy_da_out";
  int toy_probe_every = 25;
  auto* toy = app.add_subcommand("toy-da", "Desk-scale adversarial domain adaptation run");
  toy->add_option("--epochs", toy_epochs, "Training epochs");
  toy->add_option("--seed", toy_seed, "Seed (overridden by SMOKELAB_SEED)");
  toy->add_option("--out", toy_out, "Output directory for history.csv");
  toy->add_option("--probe-every", toy_probe_every, "Probe cadence in epochs (0 = off)");

  // check-grads
  int trials = 20;
  double eps = 1e-6;
  auto* grads = app.add_subcommand("check-grads", "Finite-difference checks of analytic gradients");
  grads->add_option("--trials", trials, "Random instances per operation");
  grads->add_option("--eps", eps, "Central-difference step");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pseudo->parsed()) {
      if (*seed_opt) seed_flag = seed_value;
      if (*jobs_opt) jobs_flag = jobs_value;
      return cmd_pseudolabel(config_path, seed_flag, jobs_flag);
    }
    if (eval->parsed()) {
      eval_cfg.pred_dir = eval_pred;
      eval_cfg.gt_dir = eval_gt;
      eval_cfg.out_dir = eval_out;
      if (!eval_opacity.empty()) eval_cfg.opacity_dir = eval_opacity;
      if (mmse_mode == "prob") eval_cfg.mmse_mode = MmseMode::kProb;
      if (mmse_mode == "region") eval_cfg.mmse_mode = MmseMode::kRegion;
      return cmd_evaluate(eval_cfg);
    }
    if (crop->parsed()) {
      crop_cfg.images_dir = crop_images;
      crop_cfg.masks_dir = crop_masks;
      crop_cfg.out_dir = crop_out;
      crop_cfg.spec.seed = crop_seed;
      if (const auto env = env_seed()) crop_cfg.spec.seed = *env;
      const int patches = run_crop(crop_cfg);
      std::cout << "wrote " << patches << " patch(es) under " << crop_out << '\n';
      return 0;
    }
    if (toy->parsed()) return cmd_toy_da(toy_epochs, toy_seed, toy_out, toy_probe_every);
    if (grads->parsed()) return cmd_check_grads(trials, eps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
