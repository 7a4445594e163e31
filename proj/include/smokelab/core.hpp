#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace smokelab {

// Dense row-major 2-D image plane, templated on scalar.
template <typename Scalar>
using Image = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-pixel smoke probability in [0,1].
using ProbMap = Image<double>;
// Binarized prediction mask.
using BinMask = Image<bool>;
// Non-negative spatial weights for attention pooling.
using AttnMap = Image<double>;

// Three-way opacity ground truth.
using OpacityTruth = Image<std::uint8_t>;
inline constexpr std::uint8_t kOpacityBackground = 0;
inline constexpr std::uint8_t kOpacityLow = 1;
inline constexpr std::uint8_t kOpacityHigh = 2;

// C feature channels over an H x W grid, stored channels x (H*W) with
// row-major spatial flattening.
struct FeatureMap {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Eigen::MatrixXd values;

  Eigen::Index channels() const { return values.rows(); }
  Eigen::Index pixels() const { return height * width; }
};

namespace detail {

template <typename A, typename B>
void require_same_shape(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b,
                        const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

}  // namespace detail

// Thresholds a probability map with strict `>`.
template <typename Derived>
BinMask binarize(const Eigen::ArrayBase<Derived>& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("binarize: threshold must lie in (0,1), got " +
                                std::to_string(threshold));
  }
  return (p.derived() > threshold).eval();
}

// Fraction of pixels strictly above tau.
template <typename Derived>
double foreground_ratio(const Eigen::ArrayBase<Derived>& p, double tau) {
  if (p.size() == 0) return 0.0;
  return static_cast<double>((p.derived() > tau).count()) / static_cast<double>(p.size());
}

// |a n b| / |a u b|. Two empty masks count as a perfect match (1.0).
template <typename A, typename B>
double iou(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
  static_assert(std::is_same_v<typename A::Scalar, bool> &&
                    std::is_same_v<typename B::Scalar, bool>,
                "iou expects boolean masks");
  detail::require_same_shape(a, b, "iou");
  const auto inter = (a.derived() && b.derived()).count();
  const auto uni = (a.derived() || b.derived()).count();
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Sample Pearson correlation of the flattened values. Constant inputs
// (max deviation from the mean <= 1e-12) fall back to 1.0 when the maps are
// elementwise equal within 1e-12 and 0.0 otherwise.
template <typename A, typename B>
double pearson_corr(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b) {
  detail::require_same_shape(a, b, "pearson_corr");
  const auto& p = a.derived();
  const auto& q = b.derived();
  const double mp = p.mean();
  const double mq = q.mean();
  const bool p_const = (p - mp).abs().maxCoeff() <= 1e-12;
  const bool q_const = (q - mq).abs().maxCoeff() <= 1e-12;
  if (p_const || q_const) {
    return ((p - q).abs().maxCoeff() <= 1e-12) ? 1.0 : 0.0;
  }
  const double spq = ((p - mp) * (q - mq)).sum();
  const double spp = (p - mp).square().sum();
  const double sqq = (q - mq).square().sum();
  return spq / std::sqrt(spp * sqq);
}

}  // namespace smokelab
