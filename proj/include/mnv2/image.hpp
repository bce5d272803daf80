#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "mnv2/tensor.hpp"

namespace mnv2 {

/// Interleaved 8-bit RGB, row-major.
struct ImageRGB8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  ImageRGB8() = default;
  ImageRGB8(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(3 * w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool empty() const { return width == 0 || height == 0; }
  bool operator==(const ImageRGB8&) const = default;
};

// ImageNet channel statistics (R, G, B).
inline constexpr std::array<float, 3> kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd{0.229f, 0.224f, 0.225f};

struct PreprocConfig {
  std::size_t size = 224;
  std::array<float, 3> mean = kImageNetMean;
  std::array<float, 3> std = kImageNetStd;

  // Throws ConfigError unless size >= 32 and every std component > 0.
  void validate() const;
};

struct Range {
  double lo = 1.0;
  double hi = 1.0;
};

/// Training-time randomization. Defaults: rotation +-15 deg, flip 0.5,
/// brightness/contrast/saturation factors in [0.8, 1.2], erase 0.25 of the
/// time covering 2-10% of the area.
struct AugmentConfig {
  double rotation_degrees = 15.0;
  double flip_probability = 0.5;
  Range brightness{0.8, 1.2};
  Range contrast{0.8, 1.2};
  Range saturation{0.8, 1.2};
  double erase_probability = 0.25;
  Range erase_area{0.02, 0.10};

  static AugmentConfig none();
  void validate() const;
};

/// Stretches to size x size with half-pixel-centred bilinear sampling
/// (align_corners = false). Aspect ratio is not preserved.
ImageRGB8 resize_bilinear(const ImageRGB8& img, std::size_t size);

/// (pixel / 255 - mean[c]) / std[c] into a [1, 3, S, S] tensor, RGB -> c = 0, 1, 2.
Tensor to_tensor_normalize(const ImageRGB8& img, const PreprocConfig& cfg);

// Same arithmetic, written into a caller-provided CHW slot.
void normalize_into(const ImageRGB8& img, const PreprocConfig& cfg, std::span<float> chw);

/// Resize then normalize.
Tensor main_transform(const ImageRGB8& img, const PreprocConfig& cfg);

/// Rotation (zero fill), horizontal flip, colour jitter, random erase, in
/// that order. Output depends only on the image, the config and the rng state.
ImageRGB8 augment(const ImageRGB8& img, const AugmentConfig& cfg, std::mt19937_64& rng);

ImageRGB8 flip_horizontal(const ImageRGB8& img);

// Uniform double in [0, 1) built from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);

/// Seed for an independent stream keyed by (run seed, item, salt).
std::uint64_t stream_seed(std::uint64_t run_seed, std::uint64_t index, std::uint64_t salt = 0);

// Codecs. PNG and baseline/progressive JPEG, detected by signature.
ImageRGB8 decode_image(const std::filesystem::path& path);
// Header-only check that a file is a decodable PNG or JPEG.
bool probe_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageRGB8& img);
void write_jpeg(const std::filesystem::path& path, const ImageRGB8& img, int quality = 90);

} // namespace mnv2
