#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mnv2/image.hpp"
#include "mnv2/train.hpp"

namespace mnv2 {

/// Everything a run needs. Serialized as one flat JSON object; range-valued
/// fields are two-element arrays.
struct RunConfig {
  PreprocConfig preproc;
  AugmentConfig augment;
  TrainConfig train;
  std::vector<std::size_t> sizes{32, 64, 128, 256};
  std::size_t runs = 5;
  double fraction = 1.0;
  std::size_t bench_batch = 128;
  std::size_t bench_warmup = 1;
  std::size_t bench_timed = 3;
  std::filesystem::path dataset_root;
  std::filesystem::path weights;
  std::filesystem::path out = "out";
  std::filesystem::path cache_dir; // empty = memory only
  std::optional<std::size_t> threads;

  // Throws ConfigError on the first invalid field.
  void validate() const;
};

// Keys accepted by apply_json, in serialization order.
const std::vector<std::string>& config_keys();

/// Overwrites the fields named in `j`. Unknown keys, nested objects and
/// wrong types are ConfigErrors.
void apply_json(RunConfig& cfg, const nlohmann::json& j);

nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json read_json_file(const std::filesystem::path& path);

/// defaults, then the file (if any), then the flag overlay; validated.
RunConfig layered_config(const std::optional<std::filesystem::path>& file,
                         const nlohmann::json& flags);

// FNV-1a over the canonical JSON dump, 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Explicit thread count, else MNV2_THREADS, else 1.
std::size_t resolve_threads(const RunConfig& cfg);

} // namespace mnv2
