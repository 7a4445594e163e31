#pragma once

#include <cstdint>
#include <filesystem>

#include "smokelab/core.hpp"

namespace smokelab {

// Probability maps travel as 16-bit single-channel PNGs, value / 65535.
ProbMap load_probmap(const std::filesystem::path& path);
void save_probmap(const ProbMap& map, const std::filesystem::path& path);

// Masks travel as 8-bit single-channel PNGs with values {0, 255}.
BinMask load_mask(const std::filesystem::path& path);
void save_mask(const BinMask& mask, const std::filesystem::path& path);

// Opacity ground truth travels as 8-bit single-channel PNGs with values
// {0, 128, 255} for {background, low, high}.
OpacityTruth load_opacity(const std::filesystem::path& path);
void save_opacity(const OpacityTruth& truth, const std::filesystem::path& path);

// Any single-channel grayscale PNG, depth preserved (used by the crop tool).
struct GrayImage {
  int bit_depth = 8;  // 8 or 16
  Image<std::uint16_t> values;
};
GrayImage load_gray(const std::filesystem::path& path);
void save_gray(const GrayImage& img, const std::filesystem::path& path);

}  // namespace smokelab
