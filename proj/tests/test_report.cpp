#include <doctest.h>

#include <fstream>
#include <sstream>

#include "mnv2/bench.hpp"
#include "mnv2/error.hpp"
#include "mnv2/weights.hpp"
#include "oracles.hpp"
#include "published.hpp"

using namespace mnv2;

namespace {

SweepResult published_sweep() {
  SweepResult r;
  r.threads = 2;
  r.hardware = "test cpu";
  r.config_hash = "0123456789abcdef";
  std::uint64_t seed = 1;
  for (const auto& row : published::kResolutionRuns) {
    SweepCell c;
    c.size = row.size;
    c.summary = summarize_runs(row.accuracies, row.speeds);
    c.metrics = Metrics(11);
    for (int t = 0; t < 11; ++t) {
      c.metrics.add(t, t);
      c.metrics.add(t, (t + 1) % 11);
      c.metrics.add(t, t);
    }
    for (std::size_t run = 0; run < 2; ++run) {
      std::vector<EpochRecord> curve;
      for (std::size_t e = 0; e <= 3; ++e) {
        curve.push_back(EpochRecord{e, e ? 1e-3 : 0.0, 0.1 * double(e) + 0.01 * double(run), 1.0 / (e + 1)});
      }
      c.curves.push_back(curve);
      c.seeds.push_back(seed++);
      c.epoch0_eval_accuracy.push_back(0.09);
    }
    c.bench.size = row.size;
    c.bench.batch = 128;
    c.bench.threads = 2;
    c.bench.forward_only = row.mean_speed * 1.1;
    c.bench.end_to_end = row.mean_speed;
    c.bench.forward_rates = {1.0, 2.0, 3.0};
    c.bench.end_to_end_rates = {1.0, 2.0, 3.0};
    r.cells.push_back(c);
  }
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

} // namespace

TEST_CASE("markdown renders the published inputs with their printed precision") {
  const std::string md = sweep_markdown(published_sweep());
  CHECK(md.find("| 256 |") != std::string::npos);
  CHECK(md.find("| 92.97 |") != std::string::npos);
  CHECK(md.find("| 291.1 |") != std::string::npos);
  CHECK(md.find("| 60.17 |") != std::string::npos);
  CHECK(md.find("| 702.4 |") != std::string::npos);
  CHECK(md.find("| 0.58 |") != std::string::npos);
  CHECK(md.find("59.81 - 61.06 - 59.71 - 60.11 - 60.18") != std::string::npos);
}

TEST_CASE("sweep JSON round trip re-renders identically") {
  const SweepResult r = published_sweep();
  const nlohmann::json j = to_json(r);
  const SweepResult back = sweep_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back) == j);
  const ReportFiles a = render_report(r), b = render_report(back);
  CHECK(a.sweep_md == b.sweep_md);
  CHECK(a.sweep_csv == b.sweep_csv);
  CHECK(a.curves_csv == b.curves_csv);
  CHECK(a.confusion_pgm == b.confusion_pgm);
  CHECK_THROWS_AS(sweep_from_json(nlohmann::json{{"cells", 1}}), FormatError);
}

TEST_CASE("curves CSV has one column per size, mean accuracy in percent") {
  const std::string csv = curves_csv(published_sweep());
  std::istringstream in(csv);
  std::string header, row0, row2;
  std::getline(in, header);
  std::getline(in, row0);
  std::getline(in, row2);
  std::getline(in, row2);
  CHECK(header == "epoch,lr,size_32,size_64,size_128,size_256");
  CHECK(row0.rfind("0,0,0.5000,", 0) == 0);
  CHECK(row2.rfind("2,0.001,20.5000,", 0) == 0);
}

TEST_CASE("sweep CSV has one row per run") {
  const std::string csv = sweep_csv(published_sweep());
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 5);
  CHECK(csv.find("256,1,92.9800,293.10,") != std::string::npos);
}

TEST_CASE("confusion outputs") {
  Metrics m(11);
  m.add(0, 0);
  m.add(0, 1);
  m.add(3, 3);
  const std::string norm = confusion_norm_csv(m);
  CHECK(norm.find("Bread,0.500000,0.500000,") != std::string::npos);
  CHECK(norm.find("Dairy Product,NA,NA") != std::string::npos);
  CHECK(confusion_raw_csv(m).find("Egg,0,0,0,1,") != std::string::npos);
  const std::string pc = per_class_csv(m);
  CHECK(pc.find("Bread,2,66.67,50.00") != std::string::npos);
  CHECK(pc.find("Rice,0,0.00,NA") != std::string::npos);

  const auto pgm = confusion_pgm(m, 16);
  const std::string header = "P5\n176 176\n255\n";
  REQUIRE(pgm.size() == header.size() + 176 * 176);
  CHECK(std::string(pgm.begin(), pgm.begin() + long(header.size())) == header);
  const auto px = [&](std::size_t x, std::size_t y) { return pgm[header.size() + y * 176 + x]; };
  CHECK(px(0, 0) == 128);
  CHECK(px(20, 5) == 128);
  CHECK(px(3 * 16 + 7, 3 * 16 + 7) == 255);
  CHECK(px(40, 40) == 0);
}

TEST_CASE("write_report produces every file and a flat sorted manifest") {
  const auto dir = oracle::temp_dir("report");
  write_report(published_sweep(), {{"zeta", "1"}, {"alpha", "2"}}, dir);
  for (const char* f : {"sweep.csv", "sweep.md", "curves.csv", "confusion_raw.csv",
                        "confusion_norm.csv", "confusion.pgm", "per_class.csv", "manifest.json"}) {
    CHECK(std::filesystem::exists(dir / f));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["alpha"] == "2");
  CHECK(manifest["hardware"] == "test cpu");
  CHECK(manifest["run_seeds"] == "1,2,3,4,5,6,7,8");
  for (const auto& [k, v] : manifest.items()) CHECK(v.is_string());
  CHECK(manifest_json({{"b", "1"}, {"a", "2"}}) == "{\n  \"a\": \"2\",\n  \"b\": \"1\"\n}\n");
  CHECK_THROWS_AS(render_report(SweepResult{}), ConfigError);
}

TEST_CASE("throughput harness argument checks and medians") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(images_per_second(10, 2.0) == 5.0);
  CHECK_THROWS_AS(images_per_second(10, 0.0), ConfigError);
  const Model m = load_model(WeightArchive{kArchiveVersion, synthetic_archive(11, 1)}, 11, 0);
  const std::vector<ImageRGB8> src{ImageRGB8(50, 40, 90)};
  PreprocConfig p;
  p.size = 32;
  CHECK_THROWS_AS(throughput(m, src, p, 2, 0, 3), ConfigError);
  CHECK_THROWS_AS(throughput(m, src, p, 2, 1, 2), ConfigError);
  const ThroughputResult r = throughput(m, src, p, 2, 1, 3);
  CHECK(r.forward_rates.size() == 3);
  CHECK(r.forward_only > 0.0);
  CHECK(r.end_to_end > 0.0);
  CHECK_FALSE(hardware_descriptor().empty());
}

TEST_CASE("sweep validates sizes") {
  const Model m = build_mobilenetv2(11);
  SweepSpec spec;
  spec.sizes = {64, 32};
  CHECK_THROWS_AS(resolution_sweep(m, DatasetIndex{}, spec), ConfigError);
  spec.sizes = {16};
  CHECK_THROWS_AS(resolution_sweep(m, DatasetIndex{}, spec), ConfigError);
}
