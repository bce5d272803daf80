#include "mnv2/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <thread>

#include "mnv2/error.hpp"
#include "mnv2/parallel.hpp"

namespace mnv2 {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

} // namespace

double images_per_second(std::size_t images, double seconds) {
  if (!(seconds > 0.0)) throw ConfigError("elapsed time must be positive");
  return static_cast<double>(images) / seconds;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(" \t", colon + 1));
      break;
    }
  }
  std::string compiler;
#if defined(__clang__)
  compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  compiler = "gcc " __VERSION__;
#endif
  return cpu + "; " + std::to_string(std::thread::hardware_concurrency()) + " logical cores; " +
         compiler;
}

ThroughputResult throughput(const Model& model, std::span<const ImageRGB8> sources,
                            const PreprocConfig& preproc, std::size_t batch, std::size_t warmup,
                            std::size_t timed) {
  if (warmup < 1) throw ConfigError("throughput needs warmup >= 1");
  if (timed < 3) throw ConfigError("throughput needs timed >= 3");
  if (batch == 0) throw ConfigError("throughput batch must be >= 1");
  if (sources.empty()) throw ConfigError("throughput needs at least one source image");
  preproc.validate();

  ThroughputResult r;
  r.size = preproc.size;
  r.batch = batch;
  r.threads = thread_count();
  const std::size_t S = preproc.size;
  const std::size_t item = 3 * S * S;

  // forward only
  Tensor prepared(Shape{batch, 3, S, S});
  for (std::size_t i = 0; i < batch; ++i) {
    normalize_into(resize_bilinear(sources[i % sources.size()], S), preproc, prepared.item(i));
  }
  for (std::size_t it = 0; it < warmup + timed; ++it) {
    const auto t0 = Clock::now();
    const Matrix logits = forward(model, prepared);
    const double dt = seconds_since(t0);
    if (it >= warmup) r.forward_rates.push_back(images_per_second(logits.rows, dt));
  }

  // end to end from decoded pixels
  for (std::size_t it = 0; it < warmup + timed; ++it) {
    const auto t0 = Clock::now();
    Tensor x(Shape{batch, 3, S, S});
    parallel_for(batch, [&](std::size_t i) {
      normalize_into(resize_bilinear(sources[i % sources.size()], S), preproc,
                     std::span<float>(x.values()).subspan(i * item, item));
    });
    const Matrix logits = forward(model, x);
    const double dt = seconds_since(t0);
    if (it >= warmup) r.end_to_end_rates.push_back(images_per_second(logits.rows, dt));
  }
  r.forward_only = median(r.forward_rates);
  r.end_to_end = median(r.end_to_end_rates);
  return r;
}

SweepResult resolution_sweep(const Model& model, const DatasetIndex& index, const SweepSpec& spec) {
  if (spec.sizes.empty()) throw ConfigError("sweep needs at least one size");
  for (std::size_t i = 0; i < spec.sizes.size(); ++i) {
    if (spec.sizes[i] < kMinInputSize) {
      throw ConfigError("sweep size " + std::to_string(spec.sizes[i]) + " below 32");
    }
    if (i > 0 && spec.sizes[i] <= spec.sizes[i - 1]) {
      throw ConfigError("sweep sizes must be strictly increasing");
    }
  }
  if (spec.runs_per_size == 0) throw ConfigError("runs_per_size must be >= 1");
  const std::vector<Sample> eval = index.samples(Split::evaluation);
  if (eval.empty()) throw DatasetError("evaluation split is empty");

  auto log = [&spec](const std::string& msg) {
    if (spec.log) spec.log(msg);
  };

  SweepResult result;
  result.threads = thread_count();
  result.hardware = hardware_descriptor();
  result.config_hash = spec.config_hash;

  std::vector<ImageRGB8> bench_sources;
  for (std::size_t i = 0; i < std::min(eval.size(), spec.bench_batch); ++i) {
    bench_sources.push_back(decode_image(eval[i].path));
  }

  for (std::size_t size : spec.sizes) {
    SweepCell cell;
    cell.size = size;
    PreprocConfig preproc = spec.preproc;
    preproc.size = size;
    bool first = true;
    cell.summary = repeated_runs(
        spec.runs_per_size, stream_seed(spec.train.seed, size, 0x53495a45ULL),
        [&](std::size_t run, std::uint64_t seed) {
          TrainConfig cfg = spec.train;
          cfg.seed = seed;
          cell.seeds.push_back(seed);
          TrainOptions options;
          options.cache = spec.cache;
          options.record_epoch0_eval = true;
          log("size " + std::to_string(size) + " run " + std::to_string(run + 1) + "/" +
              std::to_string(spec.runs_per_size) + ": training");
          RunResult trained = train_head(model, index, cfg, preproc, spec.augment, options);
          EvalResult ev = evaluate(model, trained.head, eval, preproc, cfg.batch_eval, nullptr);
          cell.curves.push_back(trained.curve);
          cell.epoch0_eval_accuracy.push_back(trained.epoch0_eval_accuracy.value_or(0.0));
          if (first) {
            cell.metrics = ev.metrics;
            first = false;
          }
          log("size " + std::to_string(size) + " run " + std::to_string(run + 1) +
              ": accuracy " + std::to_string(100.0 * ev.metrics.accuracy()) + "%, " +
              std::to_string(ev.images_per_second) + " img/s");
          return RunOutcome{100.0 * ev.metrics.accuracy(), ev.images_per_second};
        });
    log("size " + std::to_string(size) + ": throughput");
    cell.bench = throughput(model, bench_sources, preproc, spec.bench_batch, spec.bench_warmup,
                            spec.bench_timed);
    result.cells.push_back(std::move(cell));
  }
  return result;
}

} // namespace mnv2
