#pragma once

// Shared test fixtures: independent brute-force oracles (set-based metrics,
// plain-loop frame selection) and the bundled mini-dataset builder. The
// oracles deliberately avoid the library's computation paths.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smokelab/constraints.hpp"
#include "smokelab/core.hpp"
#include "smokelab/png_io.hpp"
#include "smokelab/rng.hpp"
#include "smokelab/selection.hpp"

namespace smokelab::testsupport {

namespace fs = std::filesystem;

// --- small constructors -------------------------------------------------------

inline ProbMap probmap_from(std::initializer_list<std::initializer_list<double>> rows) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = static_cast<Eigen::Index>(rows.begin()->size());
  ProbMap map(r, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (double v : row) map(i, j++) = v;
    ++i;
  }
  return map;
}

inline BinMask mask_from(std::initializer_list<std::initializer_list<int>> rows) {
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = static_cast<Eigen::Index>(rows.begin()->size());
  BinMask mask(r, c);
  Eigen::Index i = 0;
  for (const auto& row : rows) {
    Eigen::Index j = 0;
    for (int v : row) mask(i, j++) = v != 0;
    ++i;
  }
  return mask;
}

inline ProbMap random_probmap(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  ProbMap map(rows, cols);
  for (Eigen::Index i = 0; i < map.size(); ++i) map(i) = rng.uniform();
  return map;
}

inline BinMask random_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                           double p_true = 0.5) {
  BinMask mask(rows, cols);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = rng.uniform() < p_true;
  return mask;
}

inline OpacityTruth random_opacity(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  OpacityTruth truth(rows, cols);
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    const double u = rng.uniform();
    truth(i) = u < 0.5 ? kOpacityBackground : (u < 0.75 ? kOpacityLow : kOpacityHigh);
  }
  return truth;
}

// --- temp directories ------------------------------------------------------------

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("smokelab_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// --- set-based metrics oracle -----------------------------------------------------

struct OracleOverall {
  std::optional<double> recall, precision, f1, iou_smoke, iou_background, miou, mmse;
};

struct OracleOpacity {
  std::optional<double> recall_high, recall_low, iou_high, iou_low, precision_high,
      precision_low, f1_high, f1_low, miou_smoke;
};

inline std::set<int> pixel_set(const BinMask& mask) {
  std::set<int> s;
  int index = 0;
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c, ++index) {
      if (mask(r, c)) s.insert(index);
    }
  }
  return s;
}

inline int set_intersection_size(const std::set<int>& a, const std::set<int>& b) {
  int n = 0;
  for (int v : a) {
    if (b.count(v)) ++n;
  }
  return n;
}

inline OracleOverall oracle_overall(const BinMask& pred, const BinMask& gt) {
  const std::set<int> p = pixel_set(pred);
  const std::set<int> g = pixel_set(gt);
  const int total = static_cast<int>(pred.size());
  const int tp = set_intersection_size(p, g);
  const int fp = static_cast<int>(p.size()) - tp;
  const int fn = static_cast<int>(g.size()) - tp;
  const int tn = total - tp - fp - fn;

  OracleOverall m;
  if (!g.empty()) m.recall = static_cast<double>(tp) / static_cast<double>(g.size());
  if (!p.empty()) m.precision = static_cast<double>(tp) / static_cast<double>(p.size());
  if (m.recall && m.precision && (*m.recall + *m.precision) > 0.0) {
    m.f1 = 2.0 * (*m.precision) * (*m.recall) / (*m.precision + *m.recall);
  }
  const int union_smoke = tp + fp + fn;
  if (union_smoke > 0) m.iou_smoke = static_cast<double>(tp) / union_smoke;
  const int union_bg = tn + fp + fn;
  if (union_bg > 0) m.iou_background = static_cast<double>(tn) / union_bg;
  if (m.iou_smoke && m.iou_background) {
    m.miou = 0.5 * (*m.iou_smoke + *m.iou_background);
  } else if (m.iou_smoke) {
    m.miou = m.iou_smoke;
  } else if (m.iou_background) {
    m.miou = m.iou_background;
  }
  if (total > 0) m.mmse = static_cast<double>(fp + fn) / static_cast<double>(total);
  return m;
}

inline OracleOpacity oracle_opacity(const BinMask& pred, const OpacityTruth& truth) {
  const std::set<int> p = pixel_set(pred);
  std::set<int> g_high;
  std::set<int> g_low;
  int index = 0;
  for (Eigen::Index r = 0; r < truth.rows(); ++r) {
    for (Eigen::Index c = 0; c < truth.cols(); ++c, ++index) {
      if (truth(r, c) == kOpacityHigh) g_high.insert(index);
      if (truth(r, c) == kOpacityLow) g_low.insert(index);
    }
  }
  const int hi = set_intersection_size(p, g_high);
  const int li = set_intersection_size(p, g_low);

  // A class with no ground-truth pixels yields no metrics (skip rule).
  OracleOpacity m;
  if (!g_high.empty()) {
    m.recall_high = static_cast<double>(hi) / g_high.size();
    const int union_high = static_cast<int>(p.size() + g_high.size()) - hi;
    if (union_high > 0) m.iou_high = static_cast<double>(hi) / union_high;
    if (!p.empty()) m.precision_high = static_cast<double>(hi) / p.size();
  }
  if (!g_low.empty()) {
    m.recall_low = static_cast<double>(li) / g_low.size();
    const int union_low = static_cast<int>(p.size() + g_low.size()) - li;
    if (union_low > 0) m.iou_low = static_cast<double>(li) / union_low;
    if (!p.empty()) m.precision_low = static_cast<double>(li) / p.size();
  }
  const auto harmonic = [](std::optional<double> a, std::optional<double> b)
      -> std::optional<double> {
    if (!a || !b || (*a + *b) == 0.0) return std::nullopt;
    return 2.0 * (*a) * (*b) / (*a + *b);
  };
  m.f1_high = harmonic(m.precision_high, m.recall_high);
  m.f1_low = harmonic(m.precision_low, m.recall_low);
  if (m.iou_high && m.iou_low) {
    m.miou_smoke = 0.5 * (*m.iou_high + *m.iou_low);
  } else if (m.iou_high) {
    m.miou_smoke = m.iou_high;
  } else if (m.iou_low) {
    m.miou_smoke = m.iou_low;
  }
  return m;
}

// --- plain-loop frame-selection oracle ---------------------------------------------

inline double oracle_mean(const ProbMap& p) {
  double sum = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) sum += p(r, c);
  }
  return sum / static_cast<double>(p.size());
}

inline double oracle_fg_ratio(const ProbMap& p, double tau) {
  int count = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      if (p(r, c) > tau) ++count;
    }
  }
  return static_cast<double>(count) / static_cast<double>(p.size());
}

inline double oracle_confidence(const ProbMap& p, const SelectionConfig& cfg) {
  return cfg.alpha * oracle_mean(p) + (1.0 - cfg.alpha) * oracle_fg_ratio(p, cfg.tau);
}

inline double oracle_pearson(const ProbMap& a, const ProbMap& b) {
  const double ma = oracle_mean(a);
  const double mb = oracle_mean(b);
  double max_dev_a = 0.0;
  double max_dev_b = 0.0;
  double max_diff = 0.0;
  double spq = 0.0;
  double spp = 0.0;
  double sqq = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      max_dev_a = std::max(max_dev_a, std::abs(a(r, c) - ma));
      max_dev_b = std::max(max_dev_b, std::abs(b(r, c) - mb));
      max_diff = std::max(max_diff, std::abs(a(r, c) - b(r, c)));
      spq += (a(r, c) - ma) * (b(r, c) - mb);
      spp += (a(r, c) - ma) * (a(r, c) - ma);
      sqq += (b(r, c) - mb) * (b(r, c) - mb);
    }
  }
  if (max_dev_a <= 1e-12 || max_dev_b <= 1e-12) return max_diff <= 1e-12 ? 1.0 : 0.0;
  return spq / std::sqrt(spp * sqq);
}

inline double oracle_pair_sim(const ProbMap& u, const ProbMap& v, const SelectionConfig& cfg) {
  int inter = 0;
  int uni = 0;
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
      const bool bu = u(r, c) > cfg.tau;
      const bool bv = v(r, c) > cfg.tau;
      if (bu && bv) ++inter;
      if (bu || bv) ++uni;
    }
  }
  const double mask_iou = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
  return cfg.beta * mask_iou + (1.0 - cfg.beta) * oracle_pearson(u, v);
}

// Exhaustive reference for select_frames: every candidate center and group is
// enumerated with plain loops.
inline std::vector<int> oracle_select(const std::vector<ProbMap>& frames,
                                      const SelectionConfig& cfg) {
  const int n = static_cast<int>(frames.size());
  std::vector<double> conf(frames.size());
  for (int i = 0; i < n; ++i) conf[static_cast<std::size_t>(i)] = oracle_confidence(frames[i], cfg);

  bool any_fg = false;
  for (const ProbMap& f : frames) {
    if (oracle_fg_ratio(f, cfg.tau) > 0.0) any_fg = true;
  }

  const auto window = [n](int center, int radius) {
    std::vector<int> w;
    for (int i = std::max(0, center - radius); i <= std::min(n - 1, center + radius); ++i) {
      w.push_back(i);
    }
    return w;
  };

  if (n < 2 || !any_fg) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
      if (conf[static_cast<std::size_t>(i)] > conf[static_cast<std::size_t>(best)]) best = i;
    }
    return window(best, 1);
  }

  std::vector<int> order(frames.size());
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (conf[static_cast<std::size_t>(a)] != conf[static_cast<std::size_t>(b)]) {
      return conf[static_cast<std::size_t>(a)] > conf[static_cast<std::size_t>(b)];
    }
    return a < b;
  });
  const int k = std::min(cfg.top_k, n);

  double best_score = 0.0;
  int best_center = -1;
  std::vector<int> best_members;
  for (int c = 0; c < k; ++c) {
    const int center = order[static_cast<std::size_t>(c)];
    const std::vector<int> members = window(center, cfg.neighbor_radius);
    double coherence = 1.0;
    if (members.size() >= 2) {
      double sum = 0.0;
      int pairs = 0;
      for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = i + 1; j < members.size(); ++j) {
          sum += oracle_pair_sim(frames[static_cast<std::size_t>(members[i])],
                                 frames[static_cast<std::size_t>(members[j])], cfg);
          ++pairs;
        }
      }
      coherence = sum / pairs;
    }
    const double score =
        cfg.gamma * conf[static_cast<std::size_t>(center)] + (1.0 - cfg.gamma) * coherence;
    if (best_center < 0 || score > best_score ||
        (score == best_score && center < best_center)) {
      best_score = score;
      best_center = center;
      best_members = members;
    }
  }
  return best_members;
}

// --- bundled mini-dataset ------------------------------------------------------------

// Three labeled videos (gold positive, strong negative, disagreement) of
// 9 frames at 64x64, plus a 2-frame all-zero video exercising the fallback.
struct MiniDataset {
  fs::path frames_root;
  fs::path labels_csv;
};

inline ProbMap blob_map(Eigen::Index rows, Eigen::Index cols, int cr, int cc, int radius,
                        double inside, double outside) {
  ProbMap map(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r - cr);
      const double dc = static_cast<double>(c - cc);
      map(r, c) = (dr * dr + dc * dc <= radius * radius) ? inside : outside;
    }
  }
  return map;
}

inline MiniDataset build_mini_dataset(const fs::path& dir) {
  MiniDataset ds;
  ds.frames_root = dir / "frames";
  ds.labels_csv = dir / "labels.csv";

  Rng rng(417);
  const auto noise_frame = [&rng]() {
    ProbMap map(64, 64);
    for (Eigen::Index i = 0; i < map.size(); ++i) map(i) = 0.05 * rng.uniform();
    return map;
  };

  // vid_a: gold positive, stable blob on frames 3..7.
  {
    const fs::path vdir = ds.frames_root / "vid_a";
    fs::create_directories(vdir);
    const ProbMap blob = blob_map(64, 64, 32, 32, 12, 0.9, 0.05);
    for (int f = 0; f < 9; ++f) {
      const ProbMap frame = (f >= 3 && f <= 7) ? blob : noise_frame();
      save_probmap(frame, vdir / (std::to_string(f) + ".png"));
    }
  }
  // vid_b: strong negative, content irrelevant (must be skipped).
  {
    const fs::path vdir = ds.frames_root / "vid_b";
    fs::create_directories(vdir);
    for (int f = 0; f < 9; ++f) {
      save_probmap(noise_frame(), vdir / (std::to_string(f) + ".png"));
    }
  }
  // vid_c: disagreement, moving blob (model prediction drives everything).
  {
    const fs::path vdir = ds.frames_root / "vid_c";
    fs::create_directories(vdir);
    for (int f = 0; f < 9; ++f) {
      save_probmap(blob_map(64, 64, 20 + 3 * f, 28, 9, 0.8, 0.1),
                   vdir / (std::to_string(f) + ".png"));
    }
  }
  // vid_zero: disagreement, all-zero probabilities (fallback path).
  {
    const fs::path vdir = ds.frames_root / "vid_zero";
    fs::create_directories(vdir);
    const ProbMap zero = ProbMap::Zero(64, 64);
    for (int f = 0; f < 2; ++f) save_probmap(zero, vdir / (std::to_string(f) + ".png"));
  }

  std::ofstream csv(ds.labels_csv);
  csv << "video_id,label\n"
      << "vid_a,47\n"
      << "vid_b,16\n"
      << "vid_c,3\n"
      << "vid_zero,3\n";
  return ds;
}

}  // namespace smokelab::testsupport
