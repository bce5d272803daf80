#include "mnv2/train.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "mnv2/error.hpp"
#include "mnv2/kernels.hpp"
#include "mnv2/parallel.hpp"

namespace mnv2 {
namespace {

constexpr std::uint64_t kHeadSalt = 0x4845414455ULL;
constexpr std::uint64_t kShuffleSalt = 0x5348554646ULL;
constexpr std::uint64_t kAugmentSalt = 0x41554700ULL;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  auto p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_floats(std::uint64_t h, std::span<const float> v) {
  return fnv1a(h, v.data(), v.size_bytes());
}

std::uint64_t hash_layer(std::uint64_t h, const ConvLayer& l) {
  h = hash_floats(h, l.weight.data());
  return hash_floats(h, l.bias);
}

std::vector<float> image_features(const Model& model, const ImageRGB8& square,
                                  const PreprocConfig& preproc) {
  Tensor x = to_tensor_normalize(square, preproc);
  Tensor pooled = global_avg_pool(backbone(model, x));
  return pooled.values();
}

double head_accuracy(const Classifier& head, const Matrix& features, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const Matrix logits = classify_features(head, features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    if (argmax(logits.row(i)) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.label);
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

} // namespace

void TrainConfig::validate() const {
  // lr0 == 0 is allowed: it freezes the head, which tests rely on.
  if (!(lr0 >= 0.0)) throw ConfigError("lr0 must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(lr_gamma > 0.0 && lr_gamma < 1.0)) throw ConfigError("lr_gamma must be in (0, 1)");
  if (lr_step == 0) throw ConfigError("lr_step must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_train == 0 || batch_val == 0 || batch_eval == 0) {
    throw ConfigError("batch sizes must be >= 1");
  }
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.lr_gamma, static_cast<double>(epoch / cfg.lr_step));
}

void sgd_step(std::span<float> param, std::span<const float> grad, SgdState& state, double lr,
              const TrainConfig& cfg) {
  if (param.size() != grad.size()) {
    throw ShapeError("sgd_step: parameter has " + std::to_string(param.size()) +
                     " entries, gradient " + std::to_string(grad.size()));
  }
  check_finite(grad, "gradient");
  if (state.velocity.empty()) state.velocity.assign(param.size(), 0.0f);
  if (state.velocity.size() != param.size()) throw ShapeError("sgd_step: velocity shape mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]) + cfg.weight_decay * param[i];
    const double v = cfg.momentum * state.velocity[i] + g;
    const double update = cfg.nesterov ? g + cfg.momentum * v : v;
    state.velocity[i] = static_cast<float>(v);
    param[i] = static_cast<float>(param[i] - lr * update);
  }
}

HeadGradient head_gradient(const Classifier& head, const Matrix& features,
                           std::span<const int> labels) {
  const Matrix logits = classify_features(head, features);
  XentResult xent = softmax_xent(logits, labels);
  HeadGradient g;
  g.loss = xent.loss;
  g.weight = Matrix(head.weight.rows, head.weight.cols);
  g.bias.assign(head.weight.rows, 0.0f);
  for (std::size_t i = 0; i < features.rows; ++i) {
    auto x = features.row(i);
    for (std::size_t k = 0; k < head.weight.rows; ++k) {
      const float gk = xent.grad(i, k);
      g.bias[k] += gk;
      float* dw = g.weight.row(k).data();
      for (std::size_t d = 0; d < features.cols; ++d) dw[d] += gk * x[d];
    }
  }
  return g;
}

FeatureCache::FeatureCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

std::uint64_t FeatureCache::key(std::uint64_t backbone, const std::filesystem::path& image,
                                std::size_t size, std::optional<std::uint64_t> augment_seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, &backbone, sizeof(backbone));
  const std::string p = image.string();
  h = fnv1a(h, p.data(), p.size());
  const std::uint64_t s = size;
  h = fnv1a(h, &s, sizeof(s));
  const std::uint64_t tag = augment_seed ? 1 : 0;
  h = fnv1a(h, &tag, sizeof(tag));
  if (augment_seed) h = fnv1a(h, &*augment_seed, sizeof(*augment_seed));
  return h;
}

std::optional<std::vector<float>> FeatureCache::get(std::uint64_t key) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = memory_.find(key); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
  }
  if (dir_) {
    std::ifstream in(*dir_ / (hex(key) + ".f32"), std::ios::binary);
    if (in) {
      std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
      if (bytes.size() == kFeatureChannels * 4) {
        std::vector<float> v(kFeatureChannels);
        for (std::size_t i = 0; i < v.size(); ++i) {
          std::uint32_t u = 0;
          for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
          v[i] = std::bit_cast<float>(u);
        }
        std::lock_guard<std::mutex> lock(mutex_);
        memory_.emplace(key, v);
        ++hits_;
        return v;
      }
    }
  }
  std::lock_guard<std::mutex> lock(mutex_);
  ++misses_;
  return std::nullopt;
}

void FeatureCache::put(std::uint64_t key, std::span<const float> features) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    memory_.insert_or_assign(key, std::vector<float>(features.begin(), features.end()));
  }
  if (dir_) {
    std::vector<char> bytes(features.size() * 4);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto u = std::bit_cast<std::uint32_t>(features[i]);
      for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xff);
    }
    const auto final_path = *dir_ / (hex(key) + ".f32");
    const auto tmp = *dir_ / (hex(key) + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, final_path, ec);
  }
}

std::uint64_t backbone_fingerprint(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = hash_layer(h, model.stem);
  for (const InvertedResidual& b : model.blocks) {
    if (b.expand) h = hash_layer(h, *b.expand);
    h = hash_layer(h, b.depthwise);
    h = hash_layer(h, b.project);
  }
  return hash_layer(h, model.head);
}

Matrix compute_features(const FeatureSource& src, std::span<const Sample> samples,
                        const AugmentConfig* augment, std::span<const std::uint64_t> augment_seeds) {
  if (augment && augment_seeds.size() != samples.size()) {
    throw ShapeError("compute_features: one augmentation seed per sample required");
  }
  Matrix out(samples.size(), kFeatureChannels);
  parallel_for(samples.size(), [&](std::size_t i) {
    std::optional<std::uint64_t> aug_seed;
    if (augment) aug_seed = augment_seeds[i];
    std::uint64_t key = 0;
    if (src.cache) {
      key = FeatureCache::key(src.fingerprint, samples[i].path, src.preproc.size, aug_seed);
      if (auto hit = src.cache->get(key)) {
        std::copy(hit->begin(), hit->end(), out.row(i).begin());
        return;
      }
    }
    ImageRGB8 img = resize_bilinear(decode_image(samples[i].path), src.preproc.size);
    if (augment) {
      std::mt19937_64 rng(*aug_seed);
      img = mnv2::augment(img, *augment, rng);
    }
    const std::vector<float> f = image_features(*src.model, img, src.preproc);
    std::copy(f.begin(), f.end(), out.row(i).begin());
    if (src.cache) src.cache->put(key, f);
  });
  return out;
}

RunResult train_head(const Model& model, const DatasetIndex& index, const TrainConfig& cfg,
                     const PreprocConfig& preproc, const AugmentConfig& augment,
                     const TrainOptions& options) {
  cfg.validate();
  preproc.validate();
  augment.validate();
  const std::vector<Sample> train = index.samples(Split::training);
  const std::vector<Sample> val = index.samples(Split::validation);
  if (train.empty()) throw DatasetError("training split is empty");
  if (val.empty()) throw DatasetError("validation split is empty");

  FeatureSource src{&model, backbone_fingerprint(model), preproc, options.cache};
  RunResult result;
  result.head = init_classifier(model.num_classes(), stream_seed(cfg.seed, 0, kHeadSalt));

  const std::vector<int> val_labels = labels_of(val);
  const Matrix val_features = compute_features(src, val);

  auto record = [&](EpochRecord rec) {
    result.curve.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  };
  record(EpochRecord{0, 0.0, head_accuracy(result.head, val_features, val_labels), 0.0});

  if (options.record_epoch0_eval) {
    const std::vector<Sample> eval = index.samples(Split::evaluation);
    if (!eval.empty()) {
      const Matrix f = compute_features(src, eval);
      result.epoch0_eval_accuracy = head_accuracy(result.head, f, labels_of(eval));
    }
  }

  SgdState weight_state;
  SgdState bias_state;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(stream_seed(cfg.seed, epoch, kShuffleSalt));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = std::min(i - 1, static_cast<std::size_t>(uniform01(shuffle_rng) * static_cast<double>(i)));
      std::swap(order[i - 1], order[j]);
    }
    const std::size_t variant = cfg.augment_variants ? epoch % cfg.augment_variants : epoch;

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_train) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_train);
      std::vector<Sample> batch;
      std::vector<std::uint64_t> seeds;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        batch.push_back(train[idx]);
        seeds.push_back(stream_seed(cfg.seed, idx, kAugmentSalt + variant));
        labels.push_back(train[idx].label);
      }
      const Matrix features = compute_features(src, batch, &augment, seeds);
      HeadGradient g = head_gradient(result.head, features, labels);
      sgd_step(result.head.weight.data, g.weight.data, weight_state, lr, cfg);
      sgd_step(result.head.bias, g.bias, bias_state, lr, cfg);
      loss_sum += g.loss * static_cast<double>(end - start);
    }
    record(EpochRecord{epoch + 1, lr, head_accuracy(result.head, val_features, val_labels),
                       loss_sum / static_cast<double>(train.size())});
  }
  return result;
}

EvalResult evaluate(const Model& model, const Classifier& head, std::span<const Sample> samples,
                    const PreprocConfig& preproc, std::size_t batch, FeatureCache* cache) {
  preproc.validate();
  if (batch == 0) throw ConfigError("evaluation batch size must be >= 1");
  EvalResult result{Metrics(head.num_classes()), 0.0};
  FeatureSource src{&model, cache ? backbone_fingerprint(model) : 0, preproc, cache};
  double timed_seconds = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    const std::size_t end = std::min(samples.size(), start + batch);
    const auto chunk = samples.subspan(start, end - start);
    Matrix features;
    if (cache) {
      const auto t0 = std::chrono::steady_clock::now();
      features = compute_features(src, chunk);
      timed_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
      std::vector<ImageRGB8> decoded(chunk.size());
      parallel_for(chunk.size(), [&](std::size_t i) { decoded[i] = decode_image(chunk[i].path); });
      features = Matrix(chunk.size(), kFeatureChannels);
      const auto t0 = std::chrono::steady_clock::now();
      parallel_for(chunk.size(), [&](std::size_t i) {
        const auto f = image_features(model, resize_bilinear(decoded[i], preproc.size), preproc);
        std::copy(f.begin(), f.end(), features.row(i).begin());
      });
      timed_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    const Matrix logits = classify_features(head, features);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      result.metrics.add(chunk[i].label, argmax(logits.row(i)));
    }
  }
  if (timed_seconds > 0.0) {
    result.images_per_second = static_cast<double>(samples.size()) / timed_seconds;
  }
  return result;
}

RunSummary repeated_runs(std::size_t k, std::uint64_t base_seed,
                         const std::function<RunOutcome(std::size_t, std::uint64_t)>& run,
                         bool same_seed) {
  if (k == 0) throw ConfigError("repeated_runs needs k >= 1");
  std::vector<double> acc;
  std::vector<double> speed;
  for (std::size_t i = 0; i < k; ++i) {
    const RunOutcome o = run(i, same_seed ? base_seed : stream_seed(base_seed, i, 0x52554eULL));
    acc.push_back(o.accuracy);
    speed.push_back(o.throughput);
  }
  return summarize_runs(std::move(acc), std::move(speed));
}

} // namespace mnv2
