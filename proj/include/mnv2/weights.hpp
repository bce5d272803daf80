#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mnv2/model.hpp"

namespace mnv2 {

// .mnv2 archive layout (all integers little-endian):
//
//   "MNV2"            4 bytes magic
//   version           u32 (currently 1)
//   count             u32
//   count records:    name_len u16, name bytes (UTF-8), ndim u8,
//                     dims u32 x ndim, payload_offset u64 (from file start)
//   payload           f32 values, row-major, one contiguous run per tensor
//
// Writers emit records and payloads in lexicographic name order, so equal
// inputs give byte-identical files.
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr float kDefaultBnEps = 1e-5f;

struct ArchiveTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const;
  bool operator==(const ArchiveTensor&) const = default;
};

using TensorMap = std::map<std::string, ArchiveTensor>;

struct WeightArchive {
  std::uint32_t version = kArchiveVersion;
  TensorMap tensors;

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  // Throws MissingTensorError.
  const ArchiveTensor& at(const std::string& name) const;
};

ArchiveTensor make_archive_tensor(const Tensor& t);
ArchiveTensor make_archive_tensor(const Matrix& m);
ArchiveTensor make_archive_tensor(std::span<const float> v);
ArchiveTensor make_archive_scalar(float v);

// Pads to four dims on the left ([k] -> (1,1,1,k)) unless it already has four.
Tensor to_tensor(const ArchiveTensor& t);

std::vector<std::uint8_t> write_archive(const TensorMap& tensors);

/// Parses and validates structure: magic, version, bounds, duplicate names,
/// dimension overflow, payload sizes and overlap. Throws FormatError.
WeightArchive read_archive(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

WeightArchive load_archive_file(const std::filesystem::path& path);
void save_archive_file(const std::filesystem::path& path, const TensorMap& tensors);

/// Name and shape of every tensor the backbone needs, in execution order:
/// "stem.conv.*", "block{i}.expand|dw|project.*", "head.conv.*", each conv
/// carrying w, bn_gamma, bn_beta, bn_mean, bn_var.
struct ExpectedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
};
std::vector<ExpectedTensor> expected_backbone_tensors();

inline const std::string kClassifierWeight = "classifier.w";
inline const std::string kClassifierBias = "classifier.b";
inline const std::string kBnEpsName = "bn_eps";

struct ArchiveReport {
  std::size_t tensor_count = 0;
  std::size_t backbone_tensors = 0;
  std::size_t head_classes = 0; // 0 when the archive carries no classifier
  float bn_eps = kDefaultBnEps;
};

/// Closed-world topology check: every backbone tensor present with the exact
/// shape, no unknown names, classifier weight and bias consistent.
ArchiveReport validate_topology(const WeightArchive& archive);

/// Builds a model with batch norm folded into every conv. The archive's
/// classifier is used when it is [num_classes, 1280]; otherwise the head is
/// replaced by init_classifier(num_classes, head_seed).
Model load_model(const WeightArchive& archive, std::size_t num_classes, std::uint64_t head_seed);

/// Unfused random weights with non-trivial batch-norm statistics. Kaiming
/// normal (fan-out) conv init. Used for demos and tests where no pretrained
/// checkpoint is present.
TensorMap synthetic_archive(std::size_t num_classes, std::uint64_t seed);

TensorMap classifier_tensors(const Classifier& head);
Classifier read_classifier(const WeightArchive& archive);

} // namespace mnv2
