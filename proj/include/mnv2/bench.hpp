#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mnv2/dataset.hpp"
#include "mnv2/image.hpp"
#include "mnv2/metrics.hpp"
#include "mnv2/model.hpp"
#include "mnv2/train.hpp"

namespace mnv2 {

double images_per_second(std::size_t images, double seconds);
double median(std::vector<double> values);

// CPU model, logical core count and compiler, one line.
std::string hardware_descriptor();

struct ThroughputResult {
  std::size_t size = 0;
  std::size_t batch = 0;
  std::size_t threads = 1;
  double forward_only = 0.0; // median img/s, tensor already prepared
  double end_to_end = 0.0;   // median img/s from decoded RGB8 (resize + normalize + forward)
  std::vector<double> forward_rates;
  std::vector<double> end_to_end_rates;
};

/// Times `timed` iterations after `warmup` discarded ones, each processing a
/// batch built by cycling through `sources`. Reports medians of the
/// per-iteration rates.
ThroughputResult throughput(const Model& model, std::span<const ImageRGB8> sources,
                            const PreprocConfig& preproc, std::size_t batch, std::size_t warmup,
                            std::size_t timed);

struct SweepCell {
  std::size_t size = 0;
  RunSummary summary; // accuracies in percent, throughputs in img/s
  Metrics metrics;    // evaluation confusion of the first run
  std::vector<std::vector<EpochRecord>> curves; // one per run
  std::vector<double> epoch0_eval_accuracy;     // one per run, fraction
  std::vector<std::uint64_t> seeds;
  ThroughputResult bench;
};

struct SweepResult {
  std::vector<SweepCell> cells; // strictly increasing size
  std::size_t threads = 1;
  std::string hardware;
  std::string config_hash;
};

struct SweepSpec {
  std::vector<std::size_t> sizes;
  std::size_t runs_per_size = 5;
  TrainConfig train;
  PreprocConfig preproc;
  AugmentConfig augment;
  std::size_t bench_batch = 128;
  std::size_t bench_warmup = 1;
  std::size_t bench_timed = 3;
  FeatureCache* cache = nullptr;
  std::string config_hash;
  std::function<void(const std::string&)> log;
};

/// For each size: runs_per_size independent head trainings (fresh seeds) each
/// followed by evaluation, then one throughput measurement. Sizes run
/// sequentially.
SweepResult resolution_sweep(const Model& model, const DatasetIndex& index, const SweepSpec& spec);

nlohmann::json to_json(const SweepResult& r);
SweepResult sweep_from_json(const nlohmann::json& j);

struct ReportFiles {
  std::string sweep_csv;
  std::string sweep_md;
  std::string curves_csv;
  std::string confusion_raw_csv;
  std::string confusion_norm_csv;
  std::vector<std::uint8_t> confusion_pgm;
  std::string per_class_csv;
};

std::string sweep_markdown(const SweepResult& r);
std::string sweep_csv(const SweepResult& r);
// Mean validation accuracy (percent) per epoch, one column per size.
std::string curves_csv(const SweepResult& r);
std::string confusion_raw_csv(const Metrics& m);
std::string confusion_norm_csv(const Metrics& m);
// Binary PGM, `cell` pixels per matrix entry, 255 * normalized value.
std::vector<std::uint8_t> confusion_pgm(const Metrics& m, std::size_t cell = 16);
std::string per_class_csv(const Metrics& m);

/// Renders every report file in memory. The confusion files come from the
/// largest size in the sweep.
ReportFiles render_report(const SweepResult& r);

/// Writes sweep.csv, sweep.md, curves.csv, confusion_raw.csv,
/// confusion_norm.csv, confusion.pgm, per_class.csv and manifest.json.
void write_report(const SweepResult& r, const std::map<std::string, std::string>& manifest,
                  const std::filesystem::path& out_dir);

/// Flat key-value JSON object with sorted keys.
std::string manifest_json(const std::map<std::string, std::string>& entries);

} // namespace mnv2
