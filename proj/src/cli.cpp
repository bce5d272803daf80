#include "mnv2/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mnv2/bench.hpp"
#include "mnv2/config.hpp"
#include "mnv2/dataset.hpp"
#include "mnv2/error.hpp"
#include "mnv2/kernels.hpp"
#include "mnv2/parallel.hpp"
#include "mnv2/weights.hpp"

namespace mnv2 {
namespace {

// Flags shared by the config-driven subcommands. Unset flags leave the
// config file or default value alone.
struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::string> data;
  std::optional<std::string> weights;
  std::optional<std::string> out;
  std::optional<std::string> cache_dir;
  std::optional<double> fraction;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> size;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> runs;
  std::optional<std::vector<std::size_t>> sizes;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Flat JSON config file");
    cmd->add_option("--data", data, "Food11 root directory");
    cmd->add_option("--weights,--model", weights, ".mnv2 backbone archive");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_option("--cache-dir", cache_dir, "Directory for cached feature vectors");
    cmd->add_option("--fraction", fraction, "Stratified subset fraction in (0, 1]");
    cmd->add_option("--seed", seed, "Base seed");
    cmd->add_option("--threads", threads, "Worker threads (default: MNV2_THREADS or 1)");
    cmd->add_option("--size", size, "Input resolution S");
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--runs", runs, "Runs per resolution");
    cmd->add_option("--sizes", sizes, "Comma-separated resolutions")->delimiter(',');
  }

  nlohmann::json overlay() const {
    nlohmann::json j = nlohmann::json::object();
    if (data) j["dataset_root"] = *data;
    if (weights) j["weights"] = *weights;
    if (out) j["out"] = *out;
    if (cache_dir) j["cache_dir"] = *cache_dir;
    if (fraction) j["fraction"] = *fraction;
    if (seed) j["seed"] = *seed;
    if (threads) j["threads"] = *threads;
    if (size) j["size"] = *size;
    if (epochs) j["epochs"] = *epochs;
    if (runs) j["runs"] = *runs;
    if (sizes) j["sizes"] = *sizes;
    return j;
  }

  RunConfig resolve() const {
    std::optional<std::filesystem::path> file;
    if (config) file = *config;
    RunConfig cfg = layered_config(file, overlay());
    set_thread_count(resolve_threads(cfg));
    return cfg;
  }
};

void require_path(const std::filesystem::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + " is not set");
  if (!std::filesystem::exists(p)) throw ConfigError(what + " does not exist: " + p.string());
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

std::map<std::string, std::string> manifest_entries(const std::string& command,
                                                    const RunConfig& cfg) {
  return {
      {"command", command},
      {"config", to_json(cfg).dump()},
      {"config_hash", config_hash(cfg)},
      {"hardware", hardware_descriptor()},
      {"threads", std::to_string(thread_count())},
      {"seed", std::to_string(cfg.train.seed)},
      {"normalization_mean", nlohmann::json(cfg.preproc.mean).dump()},
      {"normalization_std", nlohmann::json(cfg.preproc.std).dump()},
  };
}

// Written before any heavy work so an interrupted run leaves a record.
void start_run(const std::string& command, const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out);
  write_text(cfg.out / "manifest.json", manifest_json(manifest_entries(command, cfg)));
}

Model load_backbone(const RunConfig& cfg) {
  require_path(cfg.weights, "weights archive");
  return load_model(load_archive_file(cfg.weights), kFoodClasses,
                    stream_seed(cfg.train.seed, 0, 0x48454144));
}

DatasetIndex load_dataset(const RunConfig& cfg) {
  require_path(cfg.dataset_root, "dataset root");
  DatasetIndex index = scan(cfg.dataset_root);
  if (cfg.fraction < 1.0) index = stratified_subset(index, cfg.fraction, cfg.train.seed);
  return index;
}

std::unique_ptr<FeatureCache> make_cache(const RunConfig& cfg) {
  if (cfg.cache_dir.empty()) return std::make_unique<FeatureCache>();
  std::filesystem::create_directories(cfg.cache_dir);
  return std::make_unique<FeatureCache>(cfg.cache_dir);
}

std::string curve_csv(const std::vector<EpochRecord>& curve) {
  std::ostringstream s;
  s << "epoch,lr,val_accuracy,train_loss\n";
  for (const EpochRecord& e : curve) {
    s << e.epoch << ',' << e.lr << ',' << e.val_accuracy << ',' << e.train_loss << '\n';
  }
  return s.str();
}

void write_metrics(const Metrics& m, double ips, const std::filesystem::path& dir) {
  write_text(dir / "confusion_raw.csv", confusion_raw_csv(m));
  write_text(dir / "confusion_norm.csv", confusion_norm_csv(m));
  const auto pgm = confusion_pgm(m);
  write_text(dir / "confusion.pgm", std::string(pgm.begin(), pgm.end()));
  write_text(dir / "per_class.csv", per_class_csv(m));
  nlohmann::json j = {{"accuracy", m.accuracy()},
                      {"images_per_second", ips},
                      {"total", m.total()},
                      {"correct", m.correct()}};
  write_text(dir / "metrics.json", j.dump(2) + "\n");
}

std::string class_name(std::size_t i, std::size_t k) {
  return k == kFoodClasses ? std::string(kClassNames[i]) : "class_" + std::to_string(i);
}

int cmd_stats(const std::string& root, const std::optional<std::string>& out_dir,
              std::ostream& out) {
  const DatasetIndex index = scan(root);
  const DatasetStats s = stats(index);
  const std::string csv = stats_csv(s);
  out << csv << '\n';
  for (const std::string& line : compare_with_published(s)) out << line << '\n';
  if (index.skipped.size()) out << "skipped undecodable files: " << index.skipped.size() << '\n';
  const auto leaks = find_leakage(index);
  if (!leaks.empty()) out << "files present in more than one split: " << leaks.size() << '\n';
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(std::filesystem::path(*out_dir) / "stats.csv", csv);
  }
  return 0;
}

int cmd_validate_weights(const std::string& file, std::ostream& out) {
  const ArchiveReport r = validate_topology(load_archive_file(file));
  out << "ok: " << r.tensor_count << " tensors, " << r.backbone_tensors << " backbone, bn_eps "
      << r.bn_eps;
  if (r.head_classes) out << ", classifier with " << r.head_classes << " classes";
  out << '\n';
  return 0;
}

int cmd_init_weights(const std::string& file, std::size_t classes, std::uint64_t seed,
                     std::ostream& out) {
  save_archive_file(file, synthetic_archive(classes, seed));
  out << "wrote synthetic archive " << file << '\n';
  return 0;
}

int cmd_classify(const std::string& image, const std::string& model_file, std::size_t size,
                 const std::optional<std::string>& head_file, std::ostream& out) {
  const WeightArchive archive = load_archive_file(model_file);
  Model model;
  if (head_file) {
    const Classifier head = read_classifier(load_archive_file(*head_file));
    model = load_model(archive, head.num_classes(), 0);
    model.classifier = head;
  } else {
    const ArchiveReport r = validate_topology(archive);
    model = load_model(archive, r.head_classes ? r.head_classes : kFoodClasses, 0);
  }
  PreprocConfig preproc;
  preproc.size = size;
  preproc.validate();
  const Matrix logits = forward(model, main_transform(decode_image(image), preproc));
  const Matrix probs = softmax(logits);
  const std::size_t k = probs.cols;
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probs(0, a) > probs(0, b); });
  for (std::size_t i = 0; i < std::min<std::size_t>(3, k); ++i) {
    out << i + 1 << ". " << class_name(order[i], k) << ' ' << std::fixed << std::setprecision(4)
        << probs(0, order[i]) << '\n';
  }
  return 0;
}

int cmd_train_head(const CommonFlags& flags, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  start_run("train-head", cfg);
  const Model model = load_backbone(cfg);
  const DatasetIndex index = load_dataset(cfg);
  auto cache = make_cache(cfg);
  TrainOptions options;
  options.cache = cache.get();
  options.on_epoch = [&out](const EpochRecord& e) {
    out << "epoch " << e.epoch << " lr " << e.lr << " val_accuracy " << e.val_accuracy
        << " loss " << e.train_loss << std::endl;
  };
  const RunResult r = train_head(model, index, cfg.train, cfg.preproc, cfg.augment, options);
  write_text(cfg.out / "curve.csv", curve_csv(r.curve));
  save_archive_file(cfg.out / "head.mnv2", classifier_tensors(r.head));
  out << "head written to " << (cfg.out / "head.mnv2").string() << '\n';
  return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& head_file, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  start_run("evaluate", cfg);
  const Model model = load_backbone(cfg);
  const Classifier head = read_classifier(load_archive_file(head_file));
  const DatasetIndex index = load_dataset(cfg);
  const std::vector<Sample> eval = index.samples(Split::evaluation);
  if (eval.empty()) throw DatasetError("evaluation split is empty");
  const EvalResult r = evaluate(model, head, eval, cfg.preproc, cfg.train.batch_eval);
  write_metrics(r.metrics, r.images_per_second, cfg.out);
  out << "accuracy " << std::fixed << std::setprecision(4) << 100.0 * r.metrics.accuracy()
      << "% over " << r.metrics.total() << " images, " << std::setprecision(1)
      << r.images_per_second << " img/s\n";
  return 0;
}

std::vector<ImageRGB8> random_images(std::size_t n, std::uint64_t seed) {
  std::vector<ImageRGB8> imgs;
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(stream_seed(seed, i, 0x494d47));
    ImageRGB8 img(512, 512);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
    imgs.push_back(std::move(img));
  }
  return imgs;
}

int cmd_bench(const CommonFlags& flags, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  start_run("bench", cfg);
  Model model;
  if (cfg.weights.empty()) {
    out << "no weights archive given; timing a synthetic backbone\n";
    model = load_model(WeightArchive{kArchiveVersion, synthetic_archive(kFoodClasses, cfg.train.seed)},
                       kFoodClasses, 0);
  } else {
    model = load_backbone(cfg);
  }
  std::vector<ImageRGB8> sources;
  if (cfg.dataset_root.empty()) {
    out << "no dataset root given; timing random 512x512 images\n";
    sources = random_images(std::min<std::size_t>(cfg.bench_batch, 16), cfg.train.seed);
  } else {
    const auto eval = load_dataset(cfg).samples(Split::evaluation);
    for (std::size_t i = 0; i < std::min(eval.size(), cfg.bench_batch); ++i) {
      sources.push_back(decode_image(eval[i].path));
    }
    if (sources.empty()) throw DatasetError("evaluation split is empty");
  }
  std::ostringstream csv;
  csv << "size,batch,threads,forward_only_ips,end_to_end_ips\n";
  for (std::size_t s : cfg.sizes) {
    PreprocConfig preproc = cfg.preproc;
    preproc.size = s;
    const ThroughputResult r =
        throughput(model, sources, preproc, cfg.bench_batch, cfg.bench_warmup, cfg.bench_timed);
    csv << r.size << ',' << r.batch << ',' << r.threads << ',' << r.forward_only << ','
        << r.end_to_end << '\n';
    out << "S=" << s << " forward " << std::fixed << std::setprecision(1) << r.forward_only
        << " img/s, end-to-end " << r.end_to_end << " img/s" << std::endl;
  }
  write_text(cfg.out / "bench.csv", csv.str());
  return 0;
}

int cmd_sweep(const CommonFlags& flags, std::ostream& out) {
  const RunConfig cfg = flags.resolve();
  start_run("sweep", cfg);
  const Model model = load_backbone(cfg);
  const DatasetIndex index = load_dataset(cfg);
  auto cache = make_cache(cfg);
  SweepSpec spec;
  spec.sizes = cfg.sizes;
  spec.runs_per_size = cfg.runs;
  spec.train = cfg.train;
  spec.preproc = cfg.preproc;
  spec.augment = cfg.augment;
  spec.bench_batch = cfg.bench_batch;
  spec.bench_warmup = cfg.bench_warmup;
  spec.bench_timed = cfg.bench_timed;
  spec.cache = cache.get();
  spec.config_hash = config_hash(cfg);
  spec.log = [&out](const std::string& msg) { out << msg << std::endl; };
  const SweepResult r = resolution_sweep(model, index, spec);
  write_text(cfg.out / "sweep.json", to_json(r).dump(2) + "\n");
  write_report(r, manifest_entries("sweep", cfg), cfg.out);
  out << sweep_markdown(r);
  return 0;
}

int cmd_report(const std::string& in, const std::string& out_dir, std::ostream& out) {
  const SweepResult r = sweep_from_json(read_json_file(in));
  std::map<std::string, std::string> manifest{{"command", "report"}, {"source", in}};
  write_report(r, manifest, out_dir);
  out << sweep_markdown(r);
  return 0;
}

} // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MobileNetV2 inference engine and Food11 benchmark harness", "mnv2"};
  app.require_subcommand(0, 1);

  std::string stats_root;
  std::optional<std::string> stats_out;
  auto* stats_cmd = app.add_subcommand("stats", "Per-class, per-split counts of a Food11 tree");
  stats_cmd->add_option("root", stats_root, "Dataset root")->required();
  stats_cmd->add_option("--out", stats_out, "Also write stats.csv here");

  std::string weights_file;
  auto* validate_cmd = app.add_subcommand("validate-weights", "Check an .mnv2 archive");
  validate_cmd->add_option("file", weights_file, "Archive")->required();

  std::string init_file;
  std::size_t init_classes = kFoodClasses;
  std::uint64_t init_seed = 0;
  auto* init_cmd = app.add_subcommand("init-weights", "Write a randomly initialized archive");
  init_cmd->add_option("--out", init_file, "Archive to write")->required();
  init_cmd->add_option("--classes", init_classes, "Classifier rows");
  init_cmd->add_option("--seed", init_seed, "Seed");

  std::string image_file;
  std::string model_file;
  std::size_t classify_size = 224;
  std::optional<std::string> head_file;
  auto* classify_cmd = app.add_subcommand("classify", "Top-3 classes for one image");
  classify_cmd->add_option("image", image_file, "PNG or JPEG")->required();
  classify_cmd->add_option("--model", model_file, "Backbone archive")->required();
  classify_cmd->add_option("--size", classify_size, "Input resolution");
  classify_cmd->add_option("--head", head_file, "Classifier archive from train-head");

  CommonFlags train_flags, eval_flags, bench_flags, sweep_flags;
  auto* train_cmd = app.add_subcommand("train-head", "Train the classifier on frozen features");
  train_flags.attach(train_cmd);

  std::string eval_head;
  auto* eval_cmd = app.add_subcommand("evaluate", "Accuracy and confusion on the evaluation split");
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--head", eval_head, "Classifier archive from train-head")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Throughput per resolution");
  bench_flags.attach(bench_cmd);

  auto* sweep_cmd = app.add_subcommand("sweep", "Repeated train/evaluate runs per resolution");
  sweep_flags.attach(sweep_cmd);

  std::string report_in;
  std::string report_out = "report";
  auto* report_cmd = app.add_subcommand("report", "Render report files from sweep.json");
  report_cmd->add_option("--in", report_in, "sweep.json")->required();
  report_cmd->add_option("--out", report_out, "Output directory");

  if (args.empty()) {
    out << app.help();
    return 2;
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "mnv2: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*stats_cmd) return cmd_stats(stats_root, stats_out, out);
    if (*validate_cmd) return cmd_validate_weights(weights_file, out);
    if (*init_cmd) return cmd_init_weights(init_file, init_classes, init_seed, out);
    if (*classify_cmd) return cmd_classify(image_file, model_file, classify_size, head_file, out);
    if (*train_cmd) return cmd_train_head(train_flags, out);
    if (*eval_cmd) return cmd_evaluate(eval_flags, eval_head, out);
    if (*bench_cmd) return cmd_bench(bench_flags, out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, out);
    if (*report_cmd) return cmd_report(report_in, report_out, out);
  } catch (const ConfigError& e) {
    err << "mnv2: invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "mnv2: " << e.what() << '\n';
    return 1;
  }
  out << app.help();
  return 2;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

} // namespace mnv2
