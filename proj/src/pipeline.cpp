#include "smokelab/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "smokelab/png_io.hpp"
#include "smokelab/rng.hpp"

namespace fs = std::filesystem;

namespace smokelab {

namespace {

using ordered_json = nlohmann::ordered_json;

int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

// *.png regular files under dir, as sorted generic relative paths.
std::vector<std::string> collect_png_relpaths(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("not a directory: " + dir.string());
  }
  std::vector<std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      out.push_back(fs::relative(entry.path(), dir).generic_string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Frame files sorted numerically by stem where possible, then by name.
std::vector<std::string> list_frame_files(const fs::path& video_dir) {
  struct Key {
    bool numeric;
    long long value;
    std::string name;
  };
  std::vector<Key> keys;
  for (const auto& entry : fs::directory_iterator(video_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), value);
    const bool numeric = ec == std::errc() && ptr == stem.data() + stem.size();
    keys.push_back({numeric, value, entry.path().filename().string()});
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.numeric != b.numeric) return a.numeric;  // numeric stems first
    if (a.numeric && a.value != b.value) return a.value < b.value;
    return a.name < b.name;
  });
  std::vector<std::string> names;
  names.reserve(keys.size());
  for (const Key& k : keys) names.push_back(k.name);
  return names;
}

ordered_json selection_to_json(const SelectionConfig& s) {
  return ordered_json{{"alpha", s.alpha},         {"tau", s.tau},
                      {"top_k", s.top_k},         {"neighbor_radius", s.neighbor_radius},
                      {"beta", s.beta},           {"gamma", s.gamma}};
}

ordered_json fusion_to_json(const FusionConfig& f) {
  return ordered_json{{"lambda_positive", f.lambda_positive},
                      {"lambda_negative", f.lambda_negative}};
}

}  // namespace

std::vector<Component> connected_components(const BinMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
  }
  const int rows = static_cast<int>(mask.rows());
  const int cols = static_cast<int>(mask.cols());
  std::vector<char> visited(static_cast<std::size_t>(mask.size()), 0);
  const auto idx = [cols](int r, int c) { return static_cast<std::size_t>(r) * cols + c; };

  static constexpr int kOffsets8[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1},
                                          {-1, -1}, {-1, 1}, {1, -1}, {1, 1}};
  const int neighbor_count = connectivity == 4 ? 4 : 8;

  std::vector<Component> components;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!mask(r, c) || visited[idx(r, c)]) continue;
      Component comp;
      stack.clear();
      stack.emplace_back(r, c);
      visited[idx(r, c)] = 1;
      while (!stack.empty()) {
        const auto [cr, cc] = stack.back();
        stack.pop_back();
        comp.pixels.emplace_back(cr, cc);
        for (int n = 0; n < neighbor_count; ++n) {
          const int nr = cr + kOffsets8[n][0];
          const int nc = cc + kOffsets8[n][1];
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
          if (!mask(nr, nc) || visited[idx(nr, nc)]) continue;
          visited[idx(nr, nc)] = 1;
          stack.emplace_back(nr, nc);
        }
      }
      double sum_r = 0.0;
      double sum_c = 0.0;
      for (const auto& [pr, pc] : comp.pixels) {
        sum_r += pr;
        sum_c += pc;
      }
      const double n = static_cast<double>(comp.pixels.size());
      comp.centroid_row = static_cast<int>(std::llround(sum_r / n));
      comp.centroid_col = static_cast<int>(std::llround(sum_c / n));
      components.push_back(std::move(comp));
    }
  }
  return components;
}

std::vector<PatchRect> crop_patches(int height, int width, const BinMask& gt,
                                    const PatchSpec& spec, int connectivity) {
  if (spec.size < 1) throw std::invalid_argument("crop_patches: size must be >= 1");
  if (spec.offset_radius < 0) {
    throw std::invalid_argument("crop_patches: offset_radius must be >= 0");
  }
  if (height < spec.size || width < spec.size) {
    throw std::invalid_argument("crop_patches: image " + std::to_string(width) + "x" +
                                std::to_string(height) + " smaller than patch size " +
                                std::to_string(spec.size));
  }
  if (gt.rows() != height || gt.cols() != width) {
    throw std::invalid_argument("crop_patches: mask shape does not match image dimensions");
  }

  const int max_row = height - spec.size;
  const int max_col = width - spec.size;
  Rng rng(spec.seed);
  std::vector<PatchRect> rects;

  const std::vector<Component> components = connected_components(gt, connectivity);
  for (std::size_t k = 0; k < components.size(); ++k) {
    const Component& comp = components[k];
    for (int rep = 0; rep < 2; ++rep) {
      const int dr = rng.uniform_int(-spec.offset_radius, spec.offset_radius);
      const int dc = rng.uniform_int(-spec.offset_radius, spec.offset_radius);
      PatchRect rect;
      rect.row = clamp_int(comp.centroid_row - spec.size / 2 + dr, 0, max_row);
      rect.col = clamp_int(comp.centroid_col - spec.size / 2 + dc, 0, max_col);
      rect.size = spec.size;
      rect.component_index = static_cast<int>(k);
      rects.push_back(rect);
    }
  }

  PatchRect random_rect;
  random_rect.row = rng.uniform_int(0, max_row);
  random_rect.col = rng.uniform_int(0, max_col);
  random_rect.size = spec.size;
  random_rect.component_index = -1;
  rects.push_back(random_rect);
  return rects;
}

std::map<std::string, WeakLabel> load_labels(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open labels CSV: " + csv_path.string());

  std::map<std::string, WeakLabel> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "video_id,label") {
        throw std::runtime_error(csv_path.string() + ":1: expected header `video_id,label`");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 ||
        line.find(',', comma + 1) != std::string::npos) {
      throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) +
                               ": malformed row `" + line + "`");
    }
    const std::string id = line.substr(0, comma);
    const std::string value_str = line.substr(comma + 1);
    int value = 0;
    const auto [ptr, ec] =
        std::from_chars(value_str.data(), value_str.data() + value_str.size(), value);
    if (ec != std::errc() || ptr != value_str.data() + value_str.size()) {
      throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) +
                               ": label is not an integer: `" + value_str + "`");
    }
    if (labels.count(id) != 0) {
      throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) +
                               ": duplicate video_id `" + id + "`");
    }
    try {
      labels.emplace(id, decode_label(value));
    } catch (const std::exception& e) {
      throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return labels;
}

RunConfig load_run_config(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open config: " + json_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw std::runtime_error("invalid config JSON " + json_path.string() + ": " + e.what());
  }

  RunConfig cfg;
  for (const char* key : {"dataset_root", "labels_csv", "output_dir"}) {
    if (!doc.contains(key) || !doc[key].is_string()) {
      throw std::runtime_error("config missing required string field `" + std::string(key) +
                               "`: " + json_path.string());
    }
  }
  cfg.dataset_root = doc["dataset_root"].get<std::string>();
  cfg.labels_csv = doc["labels_csv"].get<std::string>();
  cfg.output_dir = doc["output_dir"].get<std::string>();
  cfg.seed = doc.value("seed", std::uint64_t{0});
  cfg.parallelism = doc.value("parallelism", 1);
  if (doc.contains("selection")) {
    const auto& s = doc["selection"];
    cfg.selection.alpha = s.value("alpha", cfg.selection.alpha);
    cfg.selection.tau = s.value("tau", cfg.selection.tau);
    cfg.selection.top_k = s.value("top_k", cfg.selection.top_k);
    cfg.selection.neighbor_radius = s.value("neighbor_radius", cfg.selection.neighbor_radius);
    cfg.selection.beta = s.value("beta", cfg.selection.beta);
    cfg.selection.gamma = s.value("gamma", cfg.selection.gamma);
  }
  if (doc.contains("fusion")) {
    const auto& f = doc["fusion"];
    cfg.fusion.lambda_positive = f.value("lambda_positive", cfg.fusion.lambda_positive);
    cfg.fusion.lambda_negative = f.value("lambda_negative", cfg.fusion.lambda_negative);
  }
  return cfg;
}

namespace {

VideoResult process_video(const RunConfig& cfg, const std::string& video_id,
                          const std::map<std::string, WeakLabel>& labels) {
  VideoResult result;
  result.video_id = video_id;
  try {
    const auto label_it = labels.find(video_id);
    if (label_it == labels.end()) {
      result.status = "error";
      result.reason = "no label for video";
      return result;
    }
    result.label_raw = label_it->second.raw_value;
    result.label_known = true;

    const ConstraintDecision decision = label_to_constraint(label_it->second);
    if (decision.kind == ConstraintKind::kSkipVideo) {
      result.status = "skipped";
      result.reason = "negative label " + std::to_string(result.label_raw);
      return result;
    }

    const fs::path video_dir = cfg.dataset_root / video_id;
    result.frame_files = list_frame_files(video_dir);
    if (result.frame_files.empty()) {
      result.status = "error";
      result.reason = "no frame probability maps found";
      return result;
    }

    std::vector<ProbMap> fused;
    fused.reserve(result.frame_files.size());
    for (const std::string& name : result.frame_files) {
      fused.push_back(fuse_probability(load_probmap(video_dir / name), decision, cfg.fusion));
    }

    result.selected_frames = select_frames(fused, cfg.selection);

    const fs::path mask_dir = cfg.output_dir / video_id;
    fs::create_directories(mask_dir);
    for (int idx : result.selected_frames) {
      const BinMask mask = binarize(fused[static_cast<std::size_t>(idx)], cfg.selection.tau);
      const std::string rel = video_id + "/" + std::to_string(idx) + ".png";
      save_mask(mask, cfg.output_dir / rel);
      result.output_mask_paths.push_back(rel);
    }
    result.status = "processed";
  } catch (const std::exception& e) {
    result.status = "error";
    result.reason = e.what();
    result.selected_frames.clear();
    result.output_mask_paths.clear();
  }
  return result;
}

}  // namespace

PseudolabelRunResult run_pseudolabel(const RunConfig& cfg) {
  if (cfg.parallelism < 1) throw std::invalid_argument("run_pseudolabel: parallelism must be >= 1");
  if (!fs::is_directory(cfg.dataset_root)) {
    throw std::runtime_error("dataset root is not a directory: " + cfg.dataset_root.string());
  }
  const std::map<std::string, WeakLabel> labels = load_labels(cfg.labels_csv);

  std::vector<std::string> video_ids;
  for (const auto& entry : fs::directory_iterator(cfg.dataset_root)) {
    if (entry.is_directory()) video_ids.push_back(entry.path().filename().string());
  }
  std::sort(video_ids.begin(), video_ids.end());
  if (video_ids.empty()) {
    throw std::runtime_error("no videos found under " + cfg.dataset_root.string());
  }

  fs::create_directories(cfg.output_dir);

  std::vector<VideoResult> results(video_ids.size());
  std::atomic<std::size_t> next{0};
  const unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(static_cast<std::size_t>(cfg.parallelism), video_ids.size()));
  const auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= video_ids.size()) return;
      results[i] = process_video(cfg, video_ids[i], labels);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  // Manifest: one entry per input video, in sorted id order. The job count is
  // an execution detail and is deliberately not recorded, so reruns at any
  // parallelism are byte-identical.
  ordered_json manifest;
  manifest["config"] = ordered_json{{"dataset_root", cfg.dataset_root.generic_string()},
                                    {"labels_csv", cfg.labels_csv.generic_string()},
                                    {"output_dir", cfg.output_dir.generic_string()},
                                    {"seed", cfg.seed},
                                    {"selection", selection_to_json(cfg.selection)},
                                    {"fusion", fusion_to_json(cfg.fusion)}};
  int processed = 0;
  int skipped = 0;
  int errored = 0;
  ordered_json videos = ordered_json::array();
  for (const VideoResult& r : results) {
    ordered_json entry;
    entry["video_id"] = r.video_id;
    if (r.label_known) {
      entry["label"] = r.label_raw;
    } else {
      entry["label"] = nullptr;
    }
    entry["status"] = r.status;
    if (!r.reason.empty()) entry["reason"] = r.reason;
    entry["selected_frames"] = r.selected_frames;
    entry["masks"] = r.output_mask_paths;
    videos.push_back(std::move(entry));
    if (r.status == "processed") ++processed;
    if (r.status == "skipped") ++skipped;
    if (r.status == "error") ++errored;
  }
  manifest["summary"] =
      ordered_json{{"processed", processed}, {"skipped", skipped}, {"errored", errored}};
  manifest["videos"] = std::move(videos);

  PseudolabelRunResult run;
  run.videos = std::move(results);
  run.manifest_path = cfg.output_dir / "manifest.json";
  std::ofstream out(run.manifest_path);
  if (!out) throw std::runtime_error("cannot write manifest: " + run.manifest_path.string());
  out << manifest.dump(2) << '\n';
  return run;
}

namespace {

const char* mmse_mode_name(MmseMode mode) {
  switch (mode) {
    case MmseMode::kBinary: return "binary";
    case MmseMode::kProb: return "prob";
    case MmseMode::kRegion: return "region";
  }
  return "binary";
}

void append_metrics(ordered_json& obj, const ImageRow& row) {
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    if (const auto v = metric_value(row, m)) obj[kMetricNames[m]] = *v;
  }
}

}  // namespace

AggregateReport run_evaluate(const EvaluateConfig& cfg) {
  const std::vector<std::string> pred_files = collect_png_relpaths(cfg.pred_dir);
  const std::vector<std::string> gt_files = collect_png_relpaths(cfg.gt_dir);

  std::vector<std::string> missing_gt;
  std::vector<std::string> missing_pred;
  std::set_difference(pred_files.begin(), pred_files.end(), gt_files.begin(), gt_files.end(),
                      std::back_inserter(missing_gt));
  std::set_difference(gt_files.begin(), gt_files.end(), pred_files.begin(), pred_files.end(),
                      std::back_inserter(missing_pred));
  if (!missing_gt.empty() || !missing_pred.empty()) {
    std::string msg = "unpaired files:";
    for (const std::string& f : missing_gt) msg += " missing ground truth for " + f + ";";
    for (const std::string& f : missing_pred) msg += " missing prediction for " + f + ";";
    throw std::runtime_error(msg);
  }
  if (pred_files.empty()) {
    throw std::runtime_error("no prediction PNGs found under " + cfg.pred_dir.string());
  }
  if (cfg.opacity_dir) {
    const std::vector<std::string> opacity_files = collect_png_relpaths(*cfg.opacity_dir);
    std::vector<std::string> missing;
    std::set_difference(pred_files.begin(), pred_files.end(), opacity_files.begin(),
                        opacity_files.end(), std::back_inserter(missing));
    std::vector<std::string> extra;
    std::set_difference(opacity_files.begin(), opacity_files.end(), pred_files.begin(),
                        pred_files.end(), std::back_inserter(extra));
    if (!missing.empty() || !extra.empty()) {
      std::string msg = "unpaired opacity files:";
      for (const std::string& f : missing) msg += " missing opacity truth for " + f + ";";
      for (const std::string& f : extra) msg += " orphan opacity file " + f + ";";
      throw std::runtime_error(msg);
    }
  }

  std::vector<ImageRow> rows;
  rows.reserve(pred_files.size());
  MicroAccumulator micro;
  for (const std::string& rel : pred_files) {
    ImageRow row;
    row.name = rel;
    const BinMask gt = load_mask(cfg.gt_dir / rel);

    BinMask pred;
    std::optional<ProbMap> pred_prob;
    if (cfg.mmse_mode == MmseMode::kProb) {
      // In prob mode predictions are probability maps, binarized at 0.5 for
      // the overlap metrics.
      pred_prob = load_probmap(cfg.pred_dir / rel);
      pred = binarize(*pred_prob, 0.5);
    } else {
      pred = load_mask(cfg.pred_dir / rel);
    }
    const ProbMap* prob_ptr = pred_prob ? &*pred_prob : nullptr;
    row.overall = overall_metrics(pred, gt, cfg.mmse_mode, prob_ptr);
    micro.add(pred, gt, cfg.mmse_mode, prob_ptr);

    if (cfg.opacity_dir) {
      const OpacityTruth truth = load_opacity(*cfg.opacity_dir / rel);
      row.opacity = opacity_metrics(pred, truth);
      micro.add_opacity(pred, truth);
    }
    rows.push_back(std::move(row));
  }

  AggregateReport report = aggregate(std::move(rows));

  // Means actually reported: macro by default, pooled counts with --micro.
  ImageRow means_row;
  if (cfg.micro) {
    means_row.overall = micro.overall(cfg.mmse_mode);
    means_row.opacity = micro.opacity();
  }

  ordered_json doc;
  doc["aggregation"] = cfg.micro ? "micro" : "macro";
  doc["mmse_mode"] = mmse_mode_name(cfg.mmse_mode);
  doc["image_count"] = report.rows.size();
  ordered_json images = ordered_json::array();
  for (const ImageRow& row : report.rows) {
    ordered_json entry;
    entry["name"] = row.name;
    append_metrics(entry, row);
    images.push_back(std::move(entry));
  }
  doc["images"] = std::move(images);

  ordered_json means;
  ordered_json skipped;
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    if (cfg.micro) {
      if (const auto v = metric_value(means_row, m)) means[kMetricNames[m]] = *v;
    } else if (report.stats[m].mean) {
      means[kMetricNames[m]] = *report.stats[m].mean;
    }
    skipped[kMetricNames[m]] = report.stats[m].skipped;
  }
  doc["means"] = std::move(means);
  doc["skipped"] = std::move(skipped);

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(cfg.out_dir / "report.json");
    if (!out) throw std::runtime_error("cannot write report.json under " + cfg.out_dir.string());
    out << doc.dump(2) << '\n';
  }
  {
    std::ofstream out(cfg.out_dir / "report.csv");
    if (!out) throw std::runtime_error("cannot write report.csv under " + cfg.out_dir.string());
    out << std::setprecision(17);
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      out << kMetricNames[m] << (m + 1 < kMetricNames.size() ? ',' : '\n');
    }
    for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
      std::optional<double> v;
      if (cfg.micro) {
        v = metric_value(means_row, m);
      } else {
        v = report.stats[m].mean;
      }
      if (v) out << *v;
      out << (m + 1 < kMetricNames.size() ? ',' : '\n');
    }
  }
  return report;
}

int run_crop(const CropConfig& cfg) {
  const std::vector<std::string> mask_files = collect_png_relpaths(cfg.masks_dir);
  if (mask_files.empty()) {
    throw std::runtime_error("no mask PNGs found under " + cfg.masks_dir.string());
  }

  fs::create_directories(cfg.out_dir);
  ordered_json rects_doc;
  rects_doc["size"] = cfg.spec.size;
  rects_doc["offset_radius"] = cfg.spec.offset_radius;
  rects_doc["seed"] = cfg.spec.seed;
  ordered_json files = ordered_json::array();

  int total_patches = 0;
  for (const std::string& rel : mask_files) {
    const BinMask mask = load_mask(cfg.masks_dir / rel);
    const fs::path image_path = cfg.images_dir / rel;
    if (!fs::exists(image_path)) {
      throw std::runtime_error("no image paired with mask " + rel + " under " +
                               cfg.images_dir.string());
    }
    const GrayImage image = load_gray(image_path);
    if (image.values.rows() != mask.rows() || image.values.cols() != mask.cols()) {
      throw std::runtime_error("image/mask shape mismatch for " + rel);
    }

    PatchSpec spec = cfg.spec;
    spec.seed = derive_seed(cfg.spec.seed, rel);
    const std::vector<PatchRect> rects = crop_patches(
        static_cast<int>(mask.rows()), static_cast<int>(mask.cols()), mask, spec);

    const fs::path rel_path(rel);
    const std::string stem = (rel_path.parent_path() / rel_path.stem()).generic_string();
    ordered_json file_entry;
    file_entry["file"] = rel;
    ordered_json rect_list = ordered_json::array();
    for (std::size_t k = 0; k < rects.size(); ++k) {
      const PatchRect& r = rects[k];
      const std::string suffix = stem + "_p" + std::to_string(k) + ".png";

      GrayImage patch;
      patch.bit_depth = image.bit_depth;
      patch.values = image.values.block(r.row, r.col, r.size, r.size);
      const fs::path image_out = cfg.out_dir / "images" / suffix;
      fs::create_directories(image_out.parent_path());
      save_gray(patch, image_out);

      const BinMask mask_patch = mask.block(r.row, r.col, r.size, r.size);
      const fs::path mask_out = cfg.out_dir / "masks" / suffix;
      fs::create_directories(mask_out.parent_path());
      save_mask(mask_patch, mask_out);

      rect_list.push_back(ordered_json{{"row", r.row},
                                       {"col", r.col},
                                       {"size", r.size},
                                       {"component_index", r.component_index}});
      ++total_patches;
    }
    file_entry["rects"] = std::move(rect_list);
    files.push_back(std::move(file_entry));
  }
  rects_doc["files"] = std::move(files);

  std::ofstream out(cfg.out_dir / "rects.json");
  if (!out) throw std::runtime_error("cannot write rects.json under " + cfg.out_dir.string());
  out << rects_doc.dump(2) << '\n';
  return total_patches;
}

}  // namespace smokelab
