#pragma once

#include <span>
#include <vector>

#include "mnv2/tensor.hpp"

namespace mnv2 {

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// floor((in + 2*padding - kernel) / stride) + 1; throws ShapeError when the
// result would be < 1.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding);

/// 2-D convolution with symmetric zero padding.
///
/// `weight` is laid out [cout, cin/groups, kh, kw]; `bias` is empty or has
/// cout entries. Depthwise (groups == cin == cout) and pointwise (1x1) layers
/// take dedicated paths, everything else goes through im2col. Accumulation is
/// single precision, so results differ from conv2d_reference by ~1e-6 relative.
Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const float> bias,
              const ConvParams& p);

/// Seven-loop convolution accumulating in double. Slow; used as the oracle
/// for conv2d and as the unfused path in tests.
Tensor conv2d_reference(const Tensor& input, const Tensor& weight, std::span<const float> bias,
                        const ConvParams& p);

Tensor relu6(Tensor x);
void relu6_inplace(std::span<float> x);

Tensor global_avg_pool(const Tensor& x);

/// x * W^T + b with x [n, din], W [dout, din].
Matrix linear(const Matrix& x, const Matrix& weight, std::span<const float> bias);

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);

struct XentResult {
  double loss = 0.0;
  Matrix grad; // d loss / d logits, already divided by the batch size
};

XentResult softmax_xent(const Matrix& logits, std::span<const int> labels);

struct FoldedConv {
  Tensor weight;
  std::vector<float> bias;
};

/// Absorb inference batch norm into the preceding convolution:
/// w' = w * gamma / sqrt(var + eps), b' = beta + (b - mean) * gamma / sqrt(var + eps).
/// An empty `conv_bias` is treated as zeros.
FoldedConv fold_batchnorm(const Tensor& conv_weight, std::span<const float> conv_bias,
                          std::span<const float> gamma, std::span<const float> beta,
                          std::span<const float> mean, std::span<const float> var, float eps);

} // namespace mnv2
