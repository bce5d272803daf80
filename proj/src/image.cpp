#include "mnv2/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mnv2/error.hpp"

namespace mnv2 {
namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

double uniform_in(std::mt19937_64& rng, const Range& r) {
  return r.lo + (r.hi - r.lo) * uniform01(rng);
}

bool is_unit(const Range& r) { return r.lo == 1.0 && r.hi == 1.0; }

void check_range(const Range& r, double lo, double hi, const char* what) {
  if (!(r.lo <= r.hi) || r.lo < lo || r.hi > hi) {
    throw ConfigError(std::string("augment ") + what + " range [" + std::to_string(r.lo) + ", " +
                      std::to_string(r.hi) + "] outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
}

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(what) + " must be in [0, 1], got " + std::to_string(p));
  }
}

// Bilinear sample at continuous source coordinates; zero outside the image.
double sample_zero_fill(const ImageRGB8& img, double sx, double sy, std::size_t c) {
  const double fx = std::floor(sx);
  const double fy = std::floor(sy);
  const long x0 = static_cast<long>(fx);
  const long y0 = static_cast<long>(fy);
  const double ax = sx - fx;
  const double ay = sy - fy;
  auto px = [&](long x, long y) -> double {
    if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) {
      return 0.0;
    }
    return img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  };
  return (1 - ay) * ((1 - ax) * px(x0, y0) + ax * px(x0 + 1, y0)) +
         ay * ((1 - ax) * px(x0, y0 + 1) + ax * px(x0 + 1, y0 + 1));
}

ImageRGB8 rotate(const ImageRGB8& img, double degrees) {
  ImageRGB8 out(img.width, img.height);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad);
  const double sn = std::sin(rad);
  const double cx = (static_cast<double>(img.width) - 1) / 2;
  const double cy = (static_cast<double>(img.height) - 1) / 2;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      // inverse map output -> source
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      if (sx <= -1 || sy <= -1 || sx >= static_cast<double>(img.width) ||
          sy >= static_cast<double>(img.height)) {
        continue;
      }
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = to_u8(sample_zero_fill(img, sx, sy, c));
    }
  }
  return out;
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void jitter(ImageRGB8& img, double brightness, double contrast, double saturation) {
  std::vector<double> v(img.pixels.begin(), img.pixels.end());
  for (double& x : v) x = std::clamp(x * brightness, 0.0, 255.0);

  double mean = 0.0;
  const std::size_t n = img.width * img.height;
  for (std::size_t i = 0; i < n; ++i) mean += luma(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  mean /= static_cast<double>(n);
  for (double& x : v) x = std::clamp((x - mean) * contrast + mean, 0.0, 255.0);

  for (std::size_t i = 0; i < n; ++i) {
    const double g = luma(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
    for (std::size_t c = 0; c < 3; ++c) {
      v[3 * i + c] = std::clamp((v[3 * i + c] - g) * saturation + g, 0.0, 255.0);
    }
  }
  for (std::size_t i = 0; i < v.size(); ++i) img.pixels[i] = to_u8(v[i]);
}

void erase(ImageRGB8& img, double area_fraction, std::mt19937_64& rng) {
  const double area = area_fraction * static_cast<double>(img.width * img.height);
  // log-uniform aspect ratio in [0.3, 3.3]
  const double log_ratio = std::log(0.3) + (std::log(3.3) - std::log(0.3)) * uniform01(rng);
  const double ratio = std::exp(log_ratio);
  auto eh = static_cast<std::size_t>(std::lround(std::sqrt(area * ratio)));
  auto ew = static_cast<std::size_t>(std::lround(std::sqrt(area / ratio)));
  eh = std::clamp<std::size_t>(eh, 1, img.height);
  ew = std::clamp<std::size_t>(ew, 1, img.width);
  const auto y0 = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(img.height - eh + 1));
  const auto x0 = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(img.width - ew + 1));
  for (std::size_t y = y0; y < y0 + eh; ++y) {
    std::fill_n(img.pixels.begin() + static_cast<long>((y * img.width + x0) * 3),
                static_cast<long>(ew * 3), std::uint8_t{0});
  }
}

} // namespace

void PreprocConfig::validate() const {
  if (size < 32) throw ConfigError("preprocessing size must be >= 32, got " + std::to_string(size));
  for (float s : std) {
    if (!(s > 0.0f)) throw ConfigError("normalization std components must be > 0");
  }
}

AugmentConfig AugmentConfig::none() {
  AugmentConfig c;
  c.rotation_degrees = 0.0;
  c.flip_probability = 0.0;
  c.brightness = c.contrast = c.saturation = Range{1.0, 1.0};
  c.erase_probability = 0.0;
  return c;
}

void AugmentConfig::validate() const {
  if (!(rotation_degrees >= 0.0 && rotation_degrees <= 180.0)) {
    throw ConfigError("rotation_degrees must be in [0, 180]");
  }
  check_probability(flip_probability, "flip_probability");
  check_probability(erase_probability, "erase_probability");
  check_range(brightness, 0.0, 10.0, "brightness");
  check_range(contrast, 0.0, 10.0, "contrast");
  check_range(saturation, 0.0, 10.0, "saturation");
  check_range(erase_area, 0.0, 1.0, "erase_area");
}

ImageRGB8 resize_bilinear(const ImageRGB8& img, std::size_t size) {
  if (img.empty()) throw ShapeError("resize_bilinear: empty image");
  if (size == 0) throw ShapeError("resize_bilinear: size must be >= 1");
  if (img.width == size && img.height == size) return img;

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(src);
      t[o] = Tap{i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto xs = taps(img.width, size);
  const auto ys = taps(img.height, size);
  ImageRGB8 out(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < size; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1 - tx.frac) * img.at(tx.i0, ty.i0, c) + tx.frac * img.at(tx.i1, ty.i0, c);
        const double bot = (1 - tx.frac) * img.at(tx.i0, ty.i1, c) + tx.frac * img.at(tx.i1, ty.i1, c);
        out.at(x, y, c) = to_u8((1 - ty.frac) * top + ty.frac * bot);
      }
    }
  }
  return out;
}

void normalize_into(const ImageRGB8& img, const PreprocConfig& cfg, std::span<float> chw) {
  const std::size_t plane = img.width * img.height;
  if (chw.size() != 3 * plane) throw ShapeError("normalize_into: destination size mismatch");
  for (std::size_t c = 0; c < 3; ++c) {
    float* dst = chw.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = (static_cast<float>(img.pixels[3 * i + c]) / 255.0f - cfg.mean[c]) / cfg.std[c];
    }
  }
}

Tensor to_tensor_normalize(const ImageRGB8& img, const PreprocConfig& cfg) {
  if (img.width != cfg.size || img.height != cfg.size) {
    throw ShapeError("to_tensor_normalize: image is " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + ", expected " + std::to_string(cfg.size) +
                     " square");
  }
  Tensor t(Shape{1, 3, cfg.size, cfg.size});
  normalize_into(img, cfg, t.data());
  return t;
}

Tensor main_transform(const ImageRGB8& img, const PreprocConfig& cfg) {
  return to_tensor_normalize(resize_bilinear(img, cfg.size), cfg);
}

ImageRGB8 flip_horizontal(const ImageRGB8& img) {
  ImageRGB8 out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

ImageRGB8 augment(const ImageRGB8& img, const AugmentConfig& cfg, std::mt19937_64& rng) {
  ImageRGB8 out = img;
  if (out.empty()) return out;
  if (cfg.rotation_degrees > 0.0) {
    const double angle = cfg.rotation_degrees * (2.0 * uniform01(rng) - 1.0);
    out = rotate(out, angle);
  }
  if (uniform01(rng) < cfg.flip_probability) out = flip_horizontal(out);
  const double b = uniform_in(rng, cfg.brightness);
  const double c = uniform_in(rng, cfg.contrast);
  const double s = uniform_in(rng, cfg.saturation);
  if (!(is_unit(cfg.brightness) && is_unit(cfg.contrast) && is_unit(cfg.saturation))) {
    jitter(out, b, c, s);
  }
  if (uniform01(rng) < cfg.erase_probability) erase(out, uniform_in(rng, cfg.erase_area), rng);
  return out;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t stream_seed(std::uint64_t run_seed, std::uint64_t index, std::uint64_t salt) {
  // splitmix64 finalizer over a mixed key
  std::uint64_t z = run_seed * 0x9e3779b97f4a7c15ULL ^ (index + 0x632be59bd9b4e019ULL) ^
                    (salt * 0xbf58476d1ce4e5b9ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace mnv2
