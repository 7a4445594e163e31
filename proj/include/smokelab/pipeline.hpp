#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smokelab/constraints.hpp"
#include "smokelab/core.hpp"
#include "smokelab/metrics.hpp"
#include "smokelab/selection.hpp"

namespace smokelab {

// --- connected components -----------------------------------------------------

struct Component {
  std::vector<std::pair<int, int>> pixels;  // (row, col), scan order
  int centroid_row = 0;                     // integer-rounded pixel centroid
  int centroid_col = 0;
};

// Foreground components in row-major discovery order; connectivity 4 or 8.
std::vector<Component> connected_components(const BinMask& mask, int connectivity = 4);

// --- multi-patch cropping -------------------------------------------------------

struct PatchSpec {
  int size = 600;
  int offset_radius = 100;
  std::uint64_t seed = 0;
};

struct PatchRect {
  int row = 0;  // top-left corner
  int col = 0;
  int size = 0;
  int component_index = -1;  // -1 for the image-level random patch
};

// Two jittered patches per component centroid plus one uniformly random patch
// per image, all clipped inside the image. Deterministic given spec.seed.
std::vector<PatchRect> crop_patches(int height, int width, const BinMask& gt,
                                    const PatchSpec& spec, int connectivity = 4);

// --- label table ---------------------------------------------------------------

// CSV with header `video_id,label`; errors carry the offending line number.
std::map<std::string, WeakLabel> load_labels(const std::filesystem::path& csv_path);

// --- pseudo-label run -----------------------------------------------------------

struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path labels_csv;
  std::filesystem::path output_dir;
  SelectionConfig selection;
  FusionConfig fusion;
  int parallelism = 1;
  std::uint64_t seed = 0;
};

// JSON file mirroring RunConfig; the three paths are required.
RunConfig load_run_config(const std::filesystem::path& json_path);

struct VideoResult {
  std::string video_id;
  int label_raw = 0;
  bool label_known = false;
  std::string status;  // "processed" | "skipped" | "error"
  std::string reason;  // for skipped / error entries
  std::vector<std::string> frame_files;
  std::vector<int> selected_frames;
  std::vector<std::string> output_mask_paths;  // relative to output_dir
};

struct PseudolabelRunResult {
  std::vector<VideoResult> videos;
  std::filesystem::path manifest_path;
};

// Runs selection + binarization over every video directory under
// dataset_root, writes masks under output_dir/<video_id>/<frame_index>.png
// and a manifest JSON accounting for every video. Per-video failures are
// recorded and do not abort the run.
PseudolabelRunResult run_pseudolabel(const RunConfig& cfg);

// --- evaluation run --------------------------------------------------------------

struct EvaluateConfig {
  std::filesystem::path pred_dir;
  std::filesystem::path gt_dir;
  std::optional<std::filesystem::path> opacity_dir;
  std::filesystem::path out_dir;
  bool micro = false;
  MmseMode mmse_mode = MmseMode::kBinary;
};

// Pairs prediction and ground-truth PNGs by relative path, evaluates the
// metric suite and writes report.json / report.csv under out_dir. Returns the
// macro report.
AggregateReport run_evaluate(const EvaluateConfig& cfg);

// --- crop run ---------------------------------------------------------------------

struct CropConfig {
  std::filesystem::path images_dir;
  std::filesystem::path masks_dir;
  std::filesystem::path out_dir;
  PatchSpec spec;
};

// Computes patch rectangles from each mask's components, writes the cropped
// image / mask patches and a rectangles JSON. Returns the number of patches.
int run_crop(const CropConfig& cfg);

}  // namespace smokelab
