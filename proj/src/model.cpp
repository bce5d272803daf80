#include "mnv2/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mnv2/error.hpp"
#include "mnv2/parallel.hpp"

namespace mnv2 {
namespace {

ConvLayer make_conv(std::size_t cin, std::size_t cout, std::size_t kernel, std::size_t stride,
                    std::size_t groups, bool relu) {
  ConvLayer layer;
  layer.weight = Tensor(Shape{cout, cin / groups, kernel, kernel});
  layer.bias.assign(cout, 0.0f);
  layer.params = ConvParams{stride, (kernel - 1) / 2, groups};
  layer.relu6 = relu;
  return layer;
}

std::size_t unfolded_params(const ConvLayer& layer) {
  return layer.weight.size() + 2 * layer.out_channels();
}

} // namespace

std::vector<BlockGeometry> block_geometries() {
  std::vector<BlockGeometry> out;
  std::size_t in = kStemChannels;
  for (const BlockSpec& spec : kBlockSpecs) {
    for (std::size_t r = 0; r < spec.repeats; ++r) {
      out.push_back(BlockGeometry{in, spec.channels, spec.expansion, r == 0 ? spec.stride : 1});
      in = spec.channels;
    }
  }
  return out;
}

Model build_mobilenetv2(std::size_t num_classes) {
  if (num_classes < 2) throw ShapeError("num_classes must be >= 2");
  Model m;
  m.stem = make_conv(kInputChannels, kStemChannels, 3, 2, 1, true);
  for (const BlockGeometry& g : block_geometries()) {
    InvertedResidual block;
    block.geometry = g;
    const std::size_t hidden = g.hidden();
    if (g.expansion != 1) block.expand = make_conv(g.in_channels, hidden, 1, 1, 1, true);
    block.depthwise = make_conv(hidden, hidden, 3, g.stride, hidden, true);
    block.project = make_conv(hidden, g.out_channels, 1, 1, 1, false);
    m.blocks.push_back(std::move(block));
  }
  m.head = make_conv(kBlockSpecs.back().channels, kFeatureChannels, 1, 1, 1, true);
  m.classifier.weight = Matrix(num_classes, kFeatureChannels);
  m.classifier.bias.assign(num_classes, 0.0f);
  return m;
}

std::size_t parameter_count(const Model& model) {
  std::size_t total = unfolded_params(model.stem) + unfolded_params(model.head);
  for (const InvertedResidual& b : model.blocks) {
    if (b.expand) total += unfolded_params(*b.expand);
    total += unfolded_params(b.depthwise) + unfolded_params(b.project);
  }
  total += model.classifier.weight.data.size() + model.classifier.bias.size();
  return total;
}

Classifier init_classifier(std::size_t num_classes, std::uint64_t seed) {
  Classifier c;
  c.weight = Matrix(num_classes, kFeatureChannels);
  c.bias.assign(num_classes, 0.0f);
  std::mt19937_64 rng(seed);
  const float bound = 1.0f / std::sqrt(static_cast<float>(kFeatureChannels));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& v : c.weight.data) v = dist(rng);
  return c;
}

Tensor apply_conv(const ConvLayer& layer, const Tensor& x) {
  Tensor y = conv2d(x, layer.weight, layer.bias, layer.params);
  if (layer.relu6) relu6_inplace(y.data());
  return y;
}

Tensor inverted_residual(const Tensor& x, const InvertedResidual& block) {
  const BlockGeometry& g = block.geometry;
  if (x.shape().c != g.in_channels) {
    throw ShapeError("inverted_residual: input has " + std::to_string(x.shape().c) +
                     " channels, block expects " + std::to_string(g.in_channels));
  }
  Tensor h = block.expand ? apply_conv(*block.expand, x) : x;
  h = apply_conv(block.depthwise, h);
  Tensor y = apply_conv(block.project, h);
  if (g.residual()) {
    auto out = y.data();
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
  }
  return y;
}

void check_input(const Tensor& batch) {
  const Shape& s = batch.shape();
  if (s.c != kInputChannels) {
    throw ShapeError("input must have 3 channels, got " + std::to_string(s.c));
  }
  if (s.h < kMinInputSize || s.w < kMinInputSize) {
    throw ShapeError("input spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " below minimum " + std::to_string(kMinInputSize));
  }
}

Tensor backbone(const Model& model, const Tensor& batch) {
  check_input(batch);
  Tensor x = apply_conv(model.stem, batch);
  for (const InvertedResidual& b : model.blocks) x = inverted_residual(x, b);
  return apply_conv(model.head, x);
}

Matrix extract_features(const Model& model, const Tensor& batch) {
  check_input(batch);
  const Shape& s = batch.shape();
  Matrix features(s.n, kFeatureChannels);
  parallel_for(s.n, [&](std::size_t i) {
    auto src = batch.item(i);
    Tensor one(Shape{1, s.c, s.h, s.w}, std::vector<float>(src.begin(), src.end()));
    Tensor pooled = global_avg_pool(backbone(model, one));
    std::copy(pooled.values().begin(), pooled.values().end(), features.row(i).begin());
  });
  return features;
}

Matrix classify_features(const Classifier& head, const Matrix& features) {
  return linear(features, head.weight, head.bias);
}

Matrix forward(const Model& model, const Tensor& batch) {
  return classify_features(model.classifier, extract_features(model, batch));
}

} // namespace mnv2
