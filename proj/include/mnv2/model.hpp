#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mnv2/kernels.hpp"
#include "mnv2/tensor.hpp"

namespace mnv2 {

/// One row of the MobileNetV2 stage table: expansion factor, output
/// channels, repeat count, stride of the first repeat.
struct BlockSpec {
  std::size_t expansion;
  std::size_t channels;
  std::size_t repeats;
  std::size_t stride;
};

inline constexpr std::array<BlockSpec, 7> kBlockSpecs{{
    {1, 16, 1, 1},
    {6, 24, 2, 2},
    {6, 32, 3, 2},
    {6, 64, 4, 2},
    {6, 96, 3, 1},
    {6, 160, 3, 2},
    {6, 320, 1, 1},
}};

inline constexpr std::size_t kInputChannels = 3;
inline constexpr std::size_t kStemChannels = 32;
inline constexpr std::size_t kFeatureChannels = 1280;
inline constexpr std::size_t kBlockCount = 17;
inline constexpr std::size_t kMinInputSize = 32;

/// A convolution with batch norm already folded into weight and bias.
struct ConvLayer {
  Tensor weight; // [cout, cin/groups, kh, kw]
  std::vector<float> bias;
  ConvParams params;
  bool relu6 = true;

  std::size_t out_channels() const { return weight.shape().n; }
};

/// Geometry of one inverted residual instance, derived from the stage table.
struct BlockGeometry {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t expansion;
  std::size_t stride;

  std::size_t hidden() const { return in_channels * expansion; }
  bool residual() const { return stride == 1 && in_channels == out_channels; }
};

// The 17 block instances in execution order.
std::vector<BlockGeometry> block_geometries();

struct InvertedResidual {
  BlockGeometry geometry;
  std::optional<ConvLayer> expand; // absent when expansion == 1
  ConvLayer depthwise;
  ConvLayer project;
};

struct Classifier {
  Matrix weight; // [num_classes, 1280]
  std::vector<float> bias;

  std::size_t num_classes() const { return weight.rows; }
};

struct Model {
  ConvLayer stem;
  std::vector<InvertedResidual> blocks;
  ConvLayer head;
  Classifier classifier;

  std::size_t num_classes() const { return classifier.num_classes(); }
};

/// Zero-initialized MobileNetV2 (width 1.0) with a num_classes head.
Model build_mobilenetv2(std::size_t num_classes);

/// Trainable parameter count of the unfolded network: conv weights, two
/// batch-norm affine parameters per conv output channel, and the classifier.
std::size_t parameter_count(const Model& model);

/// Fan-in uniform head: U(-1/sqrt(1280), 1/sqrt(1280)) weights, zero bias.
Classifier init_classifier(std::size_t num_classes, std::uint64_t seed);

Tensor apply_conv(const ConvLayer& layer, const Tensor& x);

Tensor inverted_residual(const Tensor& x, const InvertedResidual& block);

// Stem, the 17 blocks and the 1x1 head conv with ReLU6; [n, 1280, h/32, w/32].
Tensor backbone(const Model& model, const Tensor& batch);

/// Pooled 1280-d embedding per batch item. Items run in parallel.
Matrix extract_features(const Model& model, const Tensor& batch);

Matrix classify_features(const Classifier& head, const Matrix& features);

/// Logits [n, num_classes].
Matrix forward(const Model& model, const Tensor& batch);

// Throws ShapeError unless batch is [n, 3, h, w] with h, w >= 32.
void check_input(const Tensor& batch);

} // namespace mnv2
