#include "smokelab/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace smokelab {

namespace {

struct FileCloser {
  std::FILE* fp = nullptr;
  ~FileCloser() {
    if (fp) std::fclose(fp);
  }
};

// Raw grayscale plane as stored in the file.
struct RawGray {
  int bit_depth = 8;
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<std::uint16_t> pixels;  // row-major
};

RawGray read_gray_png(const std::filesystem::path& path) {
  FileCloser file;
  file.fp = std::fopen(path.string().c_str(), "rb");
  if (!file.fp) throw std::runtime_error("cannot open PNG for reading: " + path.string());

  png_byte header[8];
  if (std::fread(header, 1, 8, file.fp) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path.string());
  }

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  RawGray out;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("malformed PNG file: " + path.string());
  }

  png_init_io(png, file.fp);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  if (color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("expected single channel (grayscale) PNG: " + path.string());
  }
  if (bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    bit_depth = 8;
  }
  const int passes = png_set_interlace_handling(png);
  png_read_update_info(png, info);

  out.bit_depth = bit_depth;
  out.height = static_cast<Eigen::Index>(height);
  out.width = static_cast<Eigen::Index>(width);
  out.pixels.assign(static_cast<std::size_t>(out.height * out.width), 0);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  row.assign(rowbytes, 0);

  std::vector<std::vector<png_byte>> all_rows;
  if (passes > 1) {
    all_rows.assign(static_cast<std::size_t>(height), std::vector<png_byte>(rowbytes, 0));
    for (int p = 0; p < passes; ++p) {
      for (png_uint_32 y = 0; y < height; ++y) png_read_row(png, all_rows[y].data(), nullptr);
    }
  }

  for (png_uint_32 y = 0; y < height; ++y) {
    png_byte* src;
    if (passes > 1) {
      src = all_rows[y].data();
    } else {
      png_read_row(png, row.data(), nullptr);
      src = row.data();
    }
    for (png_uint_32 x = 0; x < width; ++x) {
      std::uint16_t v;
      if (bit_depth == 16) {
        v = static_cast<std::uint16_t>((src[2 * x] << 8) | src[2 * x + 1]);  // network order
      } else {
        v = src[x];
      }
      out.pixels[static_cast<std::size_t>(y) * width + x] = v;
    }
  }

  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_gray_png(const std::filesystem::path& path, int bit_depth, Eigen::Index height,
                    Eigen::Index width, const std::vector<std::uint16_t>& pixels) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("cannot write empty PNG: " + path.string());
  }
  FileCloser file;
  file.fp = std::fopen(path.string().c_str(), "wb");
  if (!file.fp) throw std::runtime_error("cannot open PNG for writing: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  std::vector<png_byte> row(static_cast<std::size_t>(width) * (bit_depth == 16 ? 2 : 1));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to write PNG file: " + path.string());
  }

  png_init_io(png, file.fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  for (Eigen::Index y = 0; y < height; ++y) {
    for (Eigen::Index x = 0; x < width; ++x) {
      const std::uint16_t v = pixels[static_cast<std::size_t>(y * width + x)];
      if (bit_depth == 16) {
        row[static_cast<std::size_t>(2 * x)] = static_cast<png_byte>(v >> 8);
        row[static_cast<std::size_t>(2 * x + 1)] = static_cast<png_byte>(v & 0xFF);
      } else {
        row[static_cast<std::size_t>(x)] = static_cast<png_byte>(v & 0xFF);
      }
    }
    png_write_row(png, row.data());
  }

  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

ProbMap load_probmap(const std::filesystem::path& path) {
  const RawGray raw = read_gray_png(path);
  if (raw.bit_depth != 16) {
    throw std::runtime_error("expected 16-bit probability map PNG: " + path.string());
  }
  ProbMap map(raw.height, raw.width);
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    map(i) = static_cast<double>(raw.pixels[static_cast<std::size_t>(i)]) / 65535.0;
  }
  return map;
}

void save_probmap(const ProbMap& map, const std::filesystem::path& path) {
  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(map.size()));
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    const double v = map(i);
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("probability value outside [0,1] at pixel " +
                                  std::to_string(i) + ": " + std::to_string(v));
    }
    pixels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  write_gray_png(path, 16, map.rows(), map.cols(), pixels);
}

BinMask load_mask(const std::filesystem::path& path) {
  const RawGray raw = read_gray_png(path);
  if (raw.bit_depth != 8) {
    throw std::runtime_error("expected 8-bit mask PNG: " + path.string());
  }
  BinMask mask(raw.height, raw.width);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const std::uint16_t v = raw.pixels[static_cast<std::size_t>(i)];
    if (v != 0 && v != 255) {
      throw std::runtime_error("mask pixel value " + std::to_string(v) +
                               " not in {0,255}: " + path.string());
    }
    mask(i) = v == 255;
  }
  return mask;
}

void save_mask(const BinMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    pixels[static_cast<std::size_t>(i)] = mask(i) ? 255 : 0;
  }
  write_gray_png(path, 8, mask.rows(), mask.cols(), pixels);
}

OpacityTruth load_opacity(const std::filesystem::path& path) {
  const RawGray raw = read_gray_png(path);
  if (raw.bit_depth != 8) {
    throw std::runtime_error("expected 8-bit opacity PNG: " + path.string());
  }
  OpacityTruth truth(raw.height, raw.width);
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    switch (raw.pixels[static_cast<std::size_t>(i)]) {
      case 0: truth(i) = kOpacityBackground; break;
      case 128: truth(i) = kOpacityLow; break;
      case 255: truth(i) = kOpacityHigh; break;
      default:
        throw std::runtime_error("opacity pixel value " +
                                 std::to_string(raw.pixels[static_cast<std::size_t>(i)]) +
                                 " not in {0,128,255}: " + path.string());
    }
  }
  return truth;
}

void save_opacity(const OpacityTruth& truth, const std::filesystem::path& path) {
  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(truth.size()));
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    switch (truth(i)) {
      case kOpacityBackground: pixels[static_cast<std::size_t>(i)] = 0; break;
      case kOpacityLow: pixels[static_cast<std::size_t>(i)] = 128; break;
      case kOpacityHigh: pixels[static_cast<std::size_t>(i)] = 255; break;
      default:
        throw std::invalid_argument("invalid opacity label " +
                                    std::to_string(static_cast<int>(truth(i))));
    }
  }
  write_gray_png(path, 8, truth.rows(), truth.cols(), pixels);
}

GrayImage load_gray(const std::filesystem::path& path) {
  const RawGray raw = read_gray_png(path);
  GrayImage img;
  img.bit_depth = raw.bit_depth;
  img.values.resize(raw.height, raw.width);
  for (Eigen::Index i = 0; i < img.values.size(); ++i) {
    img.values(i) = raw.pixels[static_cast<std::size_t>(i)];
  }
  return img;
}

void save_gray(const GrayImage& img, const std::filesystem::path& path) {
  if (img.bit_depth != 8 && img.bit_depth != 16) {
    throw std::invalid_argument("save_gray: bit depth must be 8 or 16");
  }
  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(img.values.size()));
  for (Eigen::Index i = 0; i < img.values.size(); ++i) {
    pixels[static_cast<std::size_t>(i)] = img.values(i);
  }
  write_gray_png(path, img.bit_depth, img.values.rows(), img.values.cols(), pixels);
}

}  // namespace smokelab
