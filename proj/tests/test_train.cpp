#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "mnv2/error.hpp"
#include "mnv2/train.hpp"
#include "mnv2/weights.hpp"
#include "oracles.hpp"
#include "published.hpp"

using namespace mnv2;

namespace {

TrainConfig plain(double momentum, bool nesterov) {
  TrainConfig c;
  c.momentum = momentum;
  c.nesterov = nesterov;
  c.weight_decay = 0.0;
  return c;
}

struct Toy {
  Model model;
  DatasetIndex index;
};

// Two populated classes, 20 training images each, backbone with random weights.
const Toy& toy() {
  static const Toy t = [] {
    const auto root = oracle::temp_dir("train_toy");
    auto counts = oracle::uniform_counts(0, 0, 0);
    counts[2] = {20, 6, 6};
    counts[9] = {20, 6, 6};
    oracle::write_synthetic_tree(root, counts, 36);
    return Toy{load_model(WeightArchive{kArchiveVersion, synthetic_archive(11, 21)}, 11, 0),
               scan(root)};
  }();
  return t;
}

PreprocConfig size32() {
  PreprocConfig p;
  p.size = 32;
  return p;
}

} // namespace

TEST_CASE("lr schedule") {
  const TrainConfig cfg;
  CHECK(lr_at(0, cfg) == doctest::Approx(1e-3));
  CHECK(lr_at(9, cfg) == doctest::Approx(1e-3));
  CHECK(lr_at(10, cfg) == doctest::Approx(1e-4));
  CHECK(lr_at(19, cfg) == doctest::Approx(1e-4));
  CHECK(lr_at(20, cfg) == doctest::Approx(1e-5));
  CHECK(lr_at(29, cfg) == doctest::Approx(1e-5));
  for (std::size_t e = 1; e < 100; ++e) CHECK(lr_at(e, cfg) <= lr_at(e - 1, cfg));
}

TEST_CASE("scalar SGD examples") {
  std::vector<float> p{1.0f};
  const std::vector<float> g{1.0f};
  SgdState s;
  sgd_step(p, g, s, 0.1, plain(0.9, true));
  CHECK(s.velocity[0] == 1.0f);
  CHECK(p[0] == doctest::Approx(0.81).epsilon(1e-7));
  CHECK(p[0] == float(1.0 - 0.1 * 1.9));

  p = {1.0f};
  s = {};
  sgd_step(p, g, s, 0.1, plain(0.9, false));
  CHECK(p[0] == float(0.9));

  p = {1.0f};
  s = {};
  sgd_step(p, std::vector<float>{0.0f}, s, 0.1, plain(0.9, true));
  CHECK(p[0] == 1.0f);
}

TEST_CASE("weight decay alone shrinks every parameter") {
  std::mt19937_64 rng(1);
  auto p = oracle::random_vector(100, rng, -3, 3);
  const auto before = p;
  TrainConfig cfg;
  cfg.weight_decay = 0.01;
  SgdState s;
  sgd_step(p, std::vector<float>(100, 0.0f), s, 0.5, cfg);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i]) < std::abs(before[i]));
}

TEST_CASE("SGD argument errors") {
  std::vector<float> p(3, 1.0f);
  SgdState s;
  TrainConfig cfg;
  CHECK_THROWS_AS(sgd_step(p, std::vector<float>(2), s, 0.1, cfg), ShapeError);
  CHECK_THROWS_AS(sgd_step(p, std::vector<float>{1.0f, NAN, 0.0f}, s, 0.1, cfg), NonFiniteError);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.lr_gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_train = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr0 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("head gradient matches central finite differences") {
  std::mt19937_64 rng(2);
  for (int instance = 0; instance < 50; ++instance) {
    const std::size_t k = 2 + rng() % 10, d = 3 + rng() % 20, n = 1 + rng() % 6;
    Classifier head{Matrix(k, d, oracle::random_vector(k * d, rng)), oracle::random_vector(k, rng)};
    const Matrix x(n, d, oracle::random_vector(n * d, rng, 0.0f, 6.0f));
    std::vector<int> labels(n);
    for (int& l : labels) l = int(rng() % k);
    const HeadGradient g = head_gradient(head, x, labels);
    CHECK(g.loss == doctest::Approx(oracle::head_loss(head.weight, head.bias, x, labels)).epsilon(1e-5));

    std::vector<float> fd, an;
    const float h = 1e-3f;
    for (std::size_t i = 0; i < head.weight.data.size(); ++i) {
      Matrix wp = head.weight, wm = head.weight;
      wp.data[i] += h;
      wm.data[i] -= h;
      const double step = double(wp.data[i]) - wm.data[i];
      fd.push_back(float((oracle::head_loss(wp, head.bias, x, labels) -
                          oracle::head_loss(wm, head.bias, x, labels)) / step));
      an.push_back(g.weight.data[i]);
    }
    for (std::size_t i = 0; i < k; ++i) {
      auto bp = head.bias, bm = head.bias;
      bp[i] += h;
      bm[i] -= h;
      const double step = double(bp[i]) - bm[i];
      fd.push_back(float((oracle::head_loss(head.weight, bp, x, labels) -
                          oracle::head_loss(head.weight, bm, x, labels)) / step));
      an.push_back(g.bias[i]);
    }
    CHECK(oracle::rel_error(an, fd) <= 1e-4);
  }
}

TEST_CASE("repeated runs reproduce the published summary rows") {
  for (const auto& row : published::kResolutionRuns) {
    const RunSummary s = repeated_runs(5, 0, [&](std::size_t i, std::uint64_t) {
      return RunOutcome{row.accuracies[i], row.speeds[i]};
    });
    CHECK(std::abs(s.mean_accuracy - row.mean_accuracy) <= 0.005);
    CHECK(std::abs(s.disparity - row.disparity) <= 0.005);
    CHECK(std::abs(s.mean_throughput - row.mean_speed) <= 0.1);
  }
}

TEST_CASE("repeated runs seeding") {
  std::vector<std::uint64_t> seeds;
  const RunSummary distinct = repeated_runs(4, 9, [&](std::size_t, std::uint64_t seed) {
    seeds.push_back(seed);
    return RunOutcome{double(seed % 1000), 1.0};
  });
  CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == 4);
  for (double a : distinct.accuracies) {
    CHECK(a >= distinct.min_accuracy);
    CHECK(a <= distinct.max_accuracy);
  }
  const RunSummary same = repeated_runs(4, 9, [](std::size_t, std::uint64_t seed) {
    return RunOutcome{double(seed % 1000), 1.0};
  }, true);
  CHECK(same.disparity == 0.0);
  const RunSummary one = repeated_runs(1, 0, [](std::size_t, std::uint64_t) { return RunOutcome{42.5, 3.0}; });
  CHECK(one.mean_accuracy == 42.5);
  CHECK(one.disparity == 0.0);
  CHECK_THROWS_AS(repeated_runs(0, 0, [](std::size_t, std::uint64_t) { return RunOutcome{}; }), ConfigError);
}

TEST_CASE("lr0 = 0 leaves the head untouched and the curve flat") {
  TrainConfig cfg;
  cfg.lr0 = 0.0;
  cfg.epochs = 3;
  const RunResult r = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig{});
  const Classifier fresh = train_head(toy().model, toy().index, [] {
    TrainConfig c;
    c.lr0 = 0.0;
    c.epochs = 1;
    return c;
  }(), size32(), AugmentConfig{}).head;
  CHECK(r.head.weight == fresh.weight);
  REQUIRE(r.curve.size() == 4);
  for (const auto& e : r.curve) CHECK(e.val_accuracy == r.curve[0].val_accuracy);
  CHECK(r.curve[0].epoch == 0);
  CHECK(r.curve[0].lr == 0.0);
}

TEST_CASE("training loss does not increase across learning-rate segments on a two-class toy") {
  TrainConfig cfg;
  cfg.lr0 = 0.05;
  cfg.epochs = 6;
  cfg.lr_step = 2;
  cfg.lr_gamma = 0.5;
  cfg.batch_train = 8;
  const RunResult r = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig::none());
  REQUIRE(r.curve.size() == 7);
  std::vector<double> segment;
  for (std::size_t s = 0; s < 3; ++s) {
    segment.push_back((r.curve[1 + 2 * s].train_loss + r.curve[2 + 2 * s].train_loss) / 2.0);
  }
  CHECK(segment[1] <= segment[0]);
  CHECK(segment[2] <= segment[1]);
  CHECK(r.curve.back().val_accuracy > 0.5);
  CHECK(r.curve[3].lr == doctest::Approx(0.025));
}

TEST_CASE("feature caching is invisible") {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.augment_variants = 2;
  cfg.seed = 5;
  const auto dir = oracle::temp_dir("train_cache");
  FeatureCache cache(dir);
  TrainOptions with;
  with.cache = &cache;
  const RunResult a = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig{});
  const RunResult b = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig{}, with);
  const RunResult c = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig{}, with);
  CHECK(cache.hits() > 0);
  CHECK(a.head.weight == b.head.weight);
  CHECK(a.head.weight == c.head.weight);
  CHECK(a.head.bias == c.head.bias);
  for (std::size_t e = 0; e < a.curve.size(); ++e) {
    CHECK(a.curve[e].val_accuracy == c.curve[e].val_accuracy);
    CHECK(a.curve[e].train_loss == c.curve[e].train_loss);
  }

  // a fresh cache object reading the same directory
  FeatureCache disk(dir);
  const auto eval = toy().index.samples(Split::evaluation);
  const EvalResult plain_eval = evaluate(toy().model, a.head, eval, size32(), 4);
  const EvalResult cached_eval = evaluate(toy().model, a.head, eval, size32(), 4, &disk);
  CHECK(plain_eval.metrics == cached_eval.metrics);
  CHECK(plain_eval.images_per_second > 0.0);
}

TEST_CASE("same seed, same run; different seed, different head") {
  TrainConfig cfg;
  cfg.epochs = 2;
  const RunResult a = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig{});
  const RunResult b = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig{});
  cfg.seed = 1;
  const RunResult c = train_head(toy().model, toy().index, cfg, size32(), AugmentConfig{});
  CHECK(a.head.weight == b.head.weight);
  CHECK_FALSE(a.head.weight == c.head.weight);
}

TEST_CASE("evaluate with degenerate predictors") {
  const auto eval = toy().index.samples(Split::evaluation);
  Classifier constant{Matrix(11, kFeatureChannels, 0.0f), std::vector<float>(11, 0.0f)};
  constant.bias[9] = 1.0f;
  const EvalResult r = evaluate(toy().model, constant, eval, size32(), 5);
  CHECK(r.metrics.total() == 12);
  CHECK(r.metrics.accuracy() == doctest::Approx(0.5));
  for (std::size_t t = 0; t < 11; ++t)
    for (std::size_t p = 0; p < 11; ++p)
      if (p != 9) CHECK(r.metrics.count(t, p) == 0);
  // all-zero logits tie; the lowest index wins
  const Classifier zero{Matrix(11, kFeatureChannels, 0.0f), std::vector<float>(11, 0.0f)};
  CHECK(evaluate(toy().model, zero, eval, size32(), 5).metrics.count(2, 0) == 6);
}

TEST_CASE("empty splits are rejected") {
  DatasetIndex empty;
  CHECK_THROWS_AS(train_head(toy().model, empty, TrainConfig{}, size32(), AugmentConfig{}), DatasetError);
}
