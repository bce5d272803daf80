#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mnv2/dataset.hpp"
#include "mnv2/image.hpp"
#include "mnv2/metrics.hpp"
#include "mnv2/model.hpp"

namespace mnv2 {

/// SGD recipe for the classifier head. Defaults: lr 1e-3, momentum 0.9 with
/// Nesterov, weight decay 1e-4, 30 epochs, lr x0.1 every 10 epochs, batch
/// sizes 64 / 128 / 128.
struct TrainConfig {
  double lr0 = 1e-3;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
  std::size_t epochs = 30;
  std::size_t lr_step = 10;
  double lr_gamma = 0.1;
  std::size_t batch_train = 64;
  std::size_t batch_val = 128;
  std::size_t batch_eval = 128;
  std::uint64_t seed = 0;
  // Distinct augmentation draws per training image; 0 draws fresh ones every
  // epoch. A small value lets the feature cache serve later epochs.
  std::size_t augment_variants = 0;

  void validate() const;
};

/// lr0 * gamma^floor(epoch / step).
double lr_at(std::size_t epoch, const TrainConfig& cfg);

struct SgdState {
  std::vector<float> velocity; // zero-initialized on first use
};

/// g = grad + wd * param; v = momentum * v + g;
/// param -= lr * (nesterov ? g + momentum * v : v).
void sgd_step(std::span<float> param, std::span<const float> grad, SgdState& state, double lr,
              const TrainConfig& cfg);

struct HeadGradient {
  double loss = 0.0;
  Matrix weight; // d loss / d W, [k, 1280]
  std::vector<float> bias;
};

/// Mean cross-entropy of the linear head on fixed features, with gradients.
HeadGradient head_gradient(const Classifier& head, const Matrix& features,
                           std::span<const int> labels);

/// Per-image 1280-d features keyed by (backbone, path, size, augmentation
/// seed). In memory, optionally mirrored to a directory of raw f32 files.
/// Thread-safe.
class FeatureCache {
public:
  explicit FeatureCache(std::optional<std::filesystem::path> dir = std::nullopt);

  static std::uint64_t key(std::uint64_t backbone, const std::filesystem::path& image,
                           std::size_t size, std::optional<std::uint64_t> augment_seed);

  std::optional<std::vector<float>> get(std::uint64_t key);
  void put(std::uint64_t key, std::span<const float> features);

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

private:
  std::optional<std::filesystem::path> dir_;
  std::unordered_map<std::uint64_t, std::vector<float>> memory_;
  std::mutex mutex_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

/// FNV-1a over every backbone weight and bias.
std::uint64_t backbone_fingerprint(const Model& model);

/// What turns an image file into a feature row.
struct FeatureSource {
  const Model* model = nullptr;
  std::uint64_t fingerprint = 0;
  PreprocConfig preproc;
  FeatureCache* cache = nullptr; // optional
};

/// Features for the given samples. With `augment`, image i is augmented
/// with an rng seeded by augment_seeds[i] after resizing.
Matrix compute_features(const FeatureSource& src, std::span<const Sample> samples,
                        const AugmentConfig* augment = nullptr,
                        std::span<const std::uint64_t> augment_seeds = {});

struct EpochRecord {
  std::size_t epoch = 0; // 0 = before any update
  double lr = 0.0;       // learning rate used to reach this row
  double val_accuracy = 0.0;
  double train_loss = 0.0; // mean over the epoch; 0 for row 0
};

struct RunResult {
  Classifier head;
  std::vector<EpochRecord> curve; // epochs + 1 rows
  std::optional<double> epoch0_eval_accuracy;
};

struct TrainOptions {
  FeatureCache* cache = nullptr;
  bool record_epoch0_eval = false;
  // Called after every epoch row is recorded.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains only the classifier on frozen backbone features. The head is
/// freshly initialized from cfg.seed; each epoch shuffles the training
/// split, augments, extracts features and applies SGD to the head. Validation
/// accuracy is recorded before the first update and after every epoch.
RunResult train_head(const Model& model, const DatasetIndex& index, const TrainConfig& cfg,
                     const PreprocConfig& preproc, const AugmentConfig& augment,
                     const TrainOptions& options = {});

struct EvalResult {
  Metrics metrics;
  double images_per_second = 0.0; // resize + normalize + forward, decode excluded
};

/// Argmax of the head's logits against true labels over one split.
EvalResult evaluate(const Model& model, const Classifier& head, std::span<const Sample> samples,
                    const PreprocConfig& preproc, std::size_t batch, FeatureCache* cache = nullptr);

struct RunOutcome {
  double accuracy = 0.0;
  double throughput = 0.0;
};

/// Runs `run` k times. Run i receives seed stream_seed(base_seed, i), or
/// base_seed itself for every run when same_seed is set.
RunSummary repeated_runs(std::size_t k, std::uint64_t base_seed,
                         const std::function<RunOutcome(std::size_t run, std::uint64_t seed)>& run,
                         bool same_seed = false);

} // namespace mnv2
