#include <doctest.h>

#include <cstring>
#include <random>

#include "mnv2/error.hpp"
#include "mnv2/weights.hpp"
#include "oracles.hpp"

using namespace mnv2;

namespace {

const std::filesystem::path kFixtures = MNV2_FIXTURES;

TensorMap two_tensors() {
  TensorMap m;
  m["a"] = ArchiveTensor{{2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}};
  m["b"] = ArchiveTensor{{3}, {0.5f, -1.0f, 2.0f}};
  return m;
}

void put_u64(std::vector<std::uint8_t>& b, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[at + i] = std::uint8_t(v >> (8 * i));
}

} // namespace

TEST_CASE("writer reproduces the hand-encoded golden archive byte for byte") {
  const auto golden = read_file_bytes(kFixtures / "two_tensors.mnv2");
  CHECK(write_archive(two_tensors()) == golden);
  const WeightArchive a = read_archive(golden);
  CHECK(a.tensors == two_tensors());
}

TEST_CASE("a 2x2 tensor payload is its little-endian values in row-major order") {
  TensorMap m;
  m["t"] = ArchiveTensor{{2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}};
  const auto bytes = write_archive(m);
  const std::vector<std::uint8_t> want{0, 0, 0x80, 0x3f, 0, 0, 0, 0x40, 0, 0, 0x40, 0x40, 0, 0, 0x80, 0x40};
  REQUIRE(bytes.size() >= 16);
  CHECK(std::vector<std::uint8_t>(bytes.end() - 16, bytes.end()) == want);
}

TEST_CASE("empty map gives a header-only archive") {
  const auto bytes = write_archive({});
  CHECK(bytes == read_file_bytes(kFixtures / "empty.mnv2"));
  CHECK(bytes.size() == 12);
  CHECK(read_archive(bytes).tensors.empty());
}

TEST_CASE("structural errors") {
  CHECK_THROWS_AS(read_archive(read_file_bytes(kFixtures / "overlap.mnv2")), FormatError);

  auto bytes = write_archive(two_tensors());
  auto bad = bytes;
  std::memcpy(bad.data(), "XXXX", 4);
  CHECK_THROWS_WITH_AS(read_archive(bad), doctest::Contains("magic"), FormatError);

  bad = bytes;
  bad.resize(bytes.size() - 1);
  CHECK_THROWS_WITH_AS(read_archive(bad), doctest::Contains("truncated"), FormatError);

  bad = bytes;
  bad.resize(20);
  CHECK_THROWS_AS(read_archive(bad), FormatError);

  bad = bytes;
  bad[4] = 2; // version
  CHECK_THROWS_AS(read_archive(bad), FormatError);

  bad = bytes;
  bad[34] = 'a'; // second record name "b" -> "a"
  CHECK_THROWS_WITH_AS(read_archive(bad), doctest::Contains("duplicate"), FormatError);

  bad = bytes;
  put_u64(bad, 24, 4); // first payload inside the header
  CHECK_THROWS_AS(read_archive(bad), FormatError);

  // dims 0xffffffff x 0xffffffff overflows the element count
  bad = bytes;
  for (std::size_t i = 16; i < 24; ++i) bad[i] = 0xff;
  CHECK_THROWS_WITH_AS(read_archive(bad), doctest::Contains("overflow"), FormatError);
}

TEST_CASE("round trip is bit-exact and canonical for random maps") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    TensorMap m;
    const std::size_t count = rng() % 6;
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<std::uint32_t> dims(rng() % 4);
      std::size_t n = 1;
      for (auto& d : dims) n *= (d = 1 + rng() % 5);
      ArchiveTensor t{dims, {}};
      for (std::size_t k = 0; k < n; ++k) {
        const std::uint32_t bits = std::uint32_t(rng()) & 0x7f7fffffu;
        float f;
        std::memcpy(&f, &bits, 4);
        t.values.push_back(f);
      }
      m["t" + std::to_string(rng() % 1000)] = t;
    }
    const auto bytes = write_archive(m);
    CHECK(bytes == write_archive(m));
    CHECK(read_archive(bytes).tensors == m);
    CHECK(write_archive(read_archive(bytes).tensors) == bytes);
  }
}

TEST_CASE("topology: expected names and closed-world validation") {
  const auto expected = expected_backbone_tensors();
  CHECK(expected.size() == 260);
  CHECK(expected.front().name == "stem.conv.w");
  CHECK(expected.front().dims == std::vector<std::uint32_t>{32, 3, 3, 3});

  TensorMap full = synthetic_archive(11, 1);
  CHECK(full.size() == 263);
  const ArchiveReport r = validate_topology(WeightArchive{kArchiveVersion, full});
  CHECK(r.backbone_tensors == 260);
  CHECK(r.head_classes == 11);
  CHECK(r.bn_eps == 1e-5f);

  TensorMap extra = full;
  extra["block3.mystery"] = ArchiveTensor{{1}, {0.0f}};
  CHECK_THROWS_AS(validate_topology(WeightArchive{kArchiveVersion, extra}), FormatError);

  TensorMap half_head = full;
  half_head.erase(kClassifierBias);
  CHECK_THROWS_AS(validate_topology(WeightArchive{kArchiveVersion, half_head}), MissingTensorError);

  TensorMap wrong_shape = full;
  wrong_shape["block5.dw.w"].dims = {144, 1, 3, 3};
  CHECK_THROWS_WITH_AS(validate_topology(WeightArchive{kArchiveVersion, wrong_shape}),
                       doctest::Contains("block5.dw.w"), ShapeError);
}

TEST_CASE("missing depthwise weight is reported by name") {
  TensorMap m = synthetic_archive(11, 1);
  m.erase("block4.dw.w");
  try {
    load_model(WeightArchive{kArchiveVersion, m}, 11, 0);
    FAIL("expected MissingTensorError");
  } catch (const MissingTensorError& e) {
    CHECK(e.name() == "block4.dw.w");
  }
}

TEST_CASE("1000-class archive loaded for 11 classes replaces the head") {
  const WeightArchive a{kArchiveVersion, synthetic_archive(1000, 2)};
  const Model m = load_model(a, 11, 42);
  CHECK(m.num_classes() == 11);
  CHECK(parameter_count(m) == 2237963);
  CHECK(m.classifier.weight == init_classifier(11, 42).weight);
  const Model m1000 = load_model(a, 1000, 42);
  CHECK(m1000.classifier.weight.data == a.at(kClassifierWeight).values);
}

TEST_CASE("load_model is deterministic and bn_eps defaults when absent") {
  TensorMap t = synthetic_archive(11, 3);
  const Model a = load_model(WeightArchive{kArchiveVersion, t}, 11, 5);
  const Model b = load_model(WeightArchive{kArchiveVersion, t}, 11, 5);
  CHECK(a.stem.weight == b.stem.weight);
  CHECK(a.head.bias == b.head.bias);
  t.erase(kBnEpsName);
  const Model c = load_model(WeightArchive{kArchiveVersion, t}, 11, 5);
  CHECK(c.stem.weight == a.stem.weight);
}

TEST_CASE("file round trip and classifier tensors") {
  const auto dir = oracle::temp_dir("weights");
  const Classifier head = init_classifier(11, 9);
  save_archive_file(dir / "head.mnv2", classifier_tensors(head));
  const Classifier back = read_classifier(load_archive_file(dir / "head.mnv2"));
  CHECK(back.weight == head.weight);
  CHECK(back.bias == head.bias);
  CHECK_THROWS_AS(load_archive_file(dir / "absent.mnv2"), Error);
}
