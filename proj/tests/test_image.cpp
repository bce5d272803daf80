#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "mnv2/error.hpp"
#include "mnv2/image.hpp"
#include "oracles.hpp"

using namespace mnv2;

namespace {

ImageRGB8 random_image(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  ImageRGB8 img(w, h);
  for (auto& p : img.pixels) p = std::uint8_t(rng() & 0xff);
  return img;
}

// Bilinear sample of one output pixel written straight from the definition.
double bilinear_at(const ImageRGB8& img, std::size_t S, std::size_t ox, std::size_t oy,
                   std::size_t c) {
  auto coord = [](std::size_t o, std::size_t in, std::size_t out) {
    const double s = (o + 0.5) * double(in) / double(out) - 0.5;
    return std::min(std::max(s, 0.0), double(in - 1));
  };
  const double sx = coord(ox, img.width, S), sy = coord(oy, img.height, S);
  const std::size_t x0 = std::size_t(std::floor(sx)), y0 = std::size_t(std::floor(sy));
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = sx - x0, fy = sy - y0;
  return (1 - fy) * ((1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c)) +
         fy * ((1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c));
}

} // namespace

TEST_CASE("2x2 {10,20,30,40} resized to 1x1 averages to 25") {
  ImageRGB8 img(2, 2);
  const std::uint8_t v[4] = {10, 20, 30, 40};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[3 * i + c] = v[i];
  const ImageRGB8 r = resize_bilinear(img, 1);
  CHECK(r.at(0, 0, 0) == 25);
  CHECK(r.at(0, 0, 2) == 25);
}

TEST_CASE("resize matches the sampling definition on random sizes") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const ImageRGB8 img = random_image(1 + rng() % 90, 1 + rng() % 90, rng);
    const std::size_t S = 1 + rng() % 70;
    const ImageRGB8 r = resize_bilinear(img, S);
    REQUIRE(r.width == S);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          CHECK(std::abs(double(r.at(x, y, c)) - bilinear_at(img, S, x, y, c)) <= 0.5 + 1e-9);
        }
  }
}

TEST_CASE("resize of a constant image is constant and same-size resize is identity") {
  std::mt19937_64 rng(2);
  ImageRGB8 flat(37, 53, 77);
  for (std::uint8_t v : resize_bilinear(flat, 32).pixels) CHECK(v == 77);
  const ImageRGB8 img = random_image(40, 40, rng);
  CHECK(resize_bilinear(img, 40) == img);
  CHECK_THROWS_AS(resize_bilinear(ImageRGB8{}, 32), ShapeError);
}

TEST_CASE("normalization arithmetic") {
  ImageRGB8 img(32, 32, 255);
  img.at(0, 0, 0) = 0;
  PreprocConfig cfg;
  cfg.size = 32;
  const Tensor t = to_tensor_normalize(img, cfg);
  CHECK(t.at(0, 0, 0, 1) == doctest::Approx((1.0 - 0.485) / 0.229));
  CHECK(t.at(0, 0, 0, 0) == doctest::Approx(-0.485 / 0.229));
  CHECK(t.at(0, 2, 5, 5) == doctest::Approx((1.0 - 0.406) / 0.225));
  CHECK_THROWS_AS(to_tensor_normalize(ImageRGB8(33, 32), cfg), ShapeError);
}

TEST_CASE("main transform composes resize and normalize bit-exactly") {
  std::mt19937_64 rng(3);
  PreprocConfig cfg;
  cfg.size = 32;
  for (int trial = 0; trial < 10; ++trial) {
    const ImageRGB8 img = random_image(20 + rng() % 200, 20 + rng() % 200, rng);
    CHECK(main_transform(img, cfg) == to_tensor_normalize(resize_bilinear(img, 32), cfg));
  }
}

TEST_CASE("preprocessing config validation") {
  PreprocConfig cfg;
  cfg.size = 31;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.size = 32;
  cfg.std[1] = 0.0f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  AugmentConfig a;
  a.flip_probability = 1.5;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  a = AugmentConfig{};
  a.brightness = Range{1.2, 0.8};
  CHECK_THROWS_AS(a.validate(), ConfigError);
}

TEST_CASE("augmentation with the no-op config is the identity") {
  std::mt19937_64 rng(4);
  const ImageRGB8 img = random_image(48, 48, rng);
  std::mt19937_64 arng(9);
  CHECK(augment(img, AugmentConfig::none(), arng) == img);
}

TEST_CASE("augmentation is a function of image, config and rng state") {
  std::mt19937_64 rng(5);
  const ImageRGB8 img = random_image(64, 64, rng);
  const AugmentConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 a(seed), b(seed);
    CHECK(augment(img, cfg, a) == augment(img, cfg, b));
  }
}

TEST_CASE("flip probability 0.5 flips about half of 1000 draws") {
  std::mt19937_64 rng(6);
  const ImageRGB8 img = random_image(16, 16, rng);
  const ImageRGB8 flipped = flip_horizontal(img);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.flip_probability = 0.5;
  std::mt19937_64 arng(7);
  int flips = 0;
  for (int i = 0; i < 1000; ++i) {
    const ImageRGB8 out = augment(img, cfg, arng);
    if (out == flipped) ++flips;
    else CHECK(out == img);
  }
  // three standard deviations of a fair binomial(1000)
  CHECK(std::abs(flips - 500) <= 48);
}

TEST_CASE("flip is an involution; p=1 always flips") {
  std::mt19937_64 rng(8);
  const ImageRGB8 img = random_image(7, 5, rng);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.flip_probability = 1.0;
  CHECK(augment(img, cfg, rng) == flip_horizontal(img));
}

TEST_CASE("erase with p=1 zeroes a block covering the requested share") {
  ImageRGB8 img(50, 50, 200);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.erase_probability = 1.0;
  cfg.erase_area = Range{0.1, 0.1};
  std::mt19937_64 rng(10);
  for (int i = 0; i < 20; ++i) {
    const ImageRGB8 out = augment(img, cfg, rng);
    std::size_t zero = 0;
    for (std::size_t p = 0; p < 2500; ++p) zero += out.pixels[3 * p] == 0;
    CHECK(zero > 150);
    CHECK(zero < 350);
  }
}

TEST_CASE("brightness jitter scales pixel values") {
  ImageRGB8 img(32, 32, 100);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.brightness = Range{1.2, 1.2};
  std::mt19937_64 rng(11);
  for (std::uint8_t v : augment(img, cfg, rng).pixels) CHECK(v == 120);
}

TEST_CASE("small rotation keeps the centre, large rotation fills corners with zeros") {
  ImageRGB8 img(33, 33, 90);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.rotation_degrees = 45.0;
  std::mt19937_64 rng(12);
  bool saw_zero_corner = false;
  for (int i = 0; i < 20; ++i) {
    const ImageRGB8 out = augment(img, cfg, rng);
    CHECK(out.at(16, 16, 0) == 90);
    saw_zero_corner |= out.at(0, 0, 0) == 0;
  }
  CHECK(saw_zero_corner);
}

TEST_CASE("stream seeds separate runs, items and salts") {
  CHECK(stream_seed(1, 2, 3) == stream_seed(1, 2, 3));
  CHECK(stream_seed(1, 2, 3) != stream_seed(2, 2, 3));
  CHECK(stream_seed(1, 2, 3) != stream_seed(1, 3, 3));
  CHECK(stream_seed(1, 2, 3) != stream_seed(1, 2, 4));
  std::mt19937_64 rng(0);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(rng);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("codecs: PNG round trip is exact, JPEG is close, garbage is rejected") {
  const auto dir = oracle::temp_dir("image");
  std::mt19937_64 rng(13);
  ImageRGB8 img(40, 30);
  for (std::size_t y = 0; y < 30; ++y)
    for (std::size_t x = 0; x < 40; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = std::uint8_t(x * 3 + y * 2 + c * 40);
  write_png(dir / "a.png", img);
  CHECK(decode_image(dir / "a.png") == img);
  CHECK(probe_image(dir / "a.png"));

  write_jpeg(dir / "a.jpg", img, 95);
  const ImageRGB8 j = decode_image(dir / "a.jpg");
  REQUIRE(j.width == 40);
  REQUIRE(j.height == 30);
  double err = 0.0;
  for (std::size_t i = 0; i < j.pixels.size(); ++i) err += std::abs(int(j.pixels[i]) - int(img.pixels[i]));
  CHECK(err / double(j.pixels.size()) < 4.0);
  CHECK(probe_image(dir / "a.jpg"));

  std::ofstream(dir / "bad.jpg") << "not an image";
  CHECK_FALSE(probe_image(dir / "bad.jpg"));
  CHECK_THROWS_AS(decode_image(dir / "bad.jpg"), FormatError);
  std::ofstream(dir / "trunc.png", std::ios::binary) << "\x89PNG\r\n\x1a\n";
  CHECK_THROWS_AS(decode_image(dir / "trunc.png"), FormatError);
}
