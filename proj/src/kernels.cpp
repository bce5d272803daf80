#include "mnv2/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mnv2/error.hpp"

namespace mnv2 {
namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, cin_per_group, kh, kw;
  std::size_t oh, ow;
};

ConvGeometry check_conv(const Tensor& input, const Tensor& weight, std::span<const float> bias,
                        const ConvParams& p) {
  const Shape& in = input.shape();
  const Shape& ws = weight.shape();
  if (p.stride == 0 || p.groups == 0) {
    throw ShapeError("conv2d: stride and groups must be positive");
  }
  if (in.c % p.groups != 0 || ws.n % p.groups != 0) {
    throw ShapeError("conv2d: groups " + std::to_string(p.groups) +
                     " must divide input channels " + std::to_string(in.c) +
                     " and output channels " + std::to_string(ws.n));
  }
  if (ws.c != in.c / p.groups) {
    throw ShapeError("conv2d: weight " + to_string(ws) + " incompatible with input " +
                     to_string(in) + " and groups " + std::to_string(p.groups));
  }
  if (!bias.empty() && bias.size() != ws.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias.size()) + " != cout " +
                     std::to_string(ws.n));
  }
  ConvGeometry g{in.n, in.c, in.h, in.w, ws.n, ws.c, ws.h, ws.w, 0, 0};
  g.oh = conv_output_size(in.h, ws.h, p.stride, p.padding);
  g.ow = conv_output_size(in.w, ws.w, p.stride, p.padding);
  return g;
}

// out[m, p] = bias[m] + sum_k w[m, k] * x[k, p], tiled over p so a block of x
// stays in cache while four output rows accumulate.
void gemm_bias(const float* __restrict w, std::span<const float> bias, const float* __restrict x,
               float* __restrict out, std::size_t rows, std::size_t depth, std::size_t cols) {
  constexpr std::size_t kTile = 512;
  for (std::size_t p0 = 0; p0 < cols; p0 += kTile) {
    const std::size_t pn = std::min(kTile, cols - p0);
    std::size_t m = 0;
    for (; m + 4 <= rows; m += 4) {
      float* __restrict o0 = out + (m + 0) * cols + p0;
      float* __restrict o1 = out + (m + 1) * cols + p0;
      float* __restrict o2 = out + (m + 2) * cols + p0;
      float* __restrict o3 = out + (m + 3) * cols + p0;
      const float b0 = bias.empty() ? 0.0f : bias[m + 0];
      const float b1 = bias.empty() ? 0.0f : bias[m + 1];
      const float b2 = bias.empty() ? 0.0f : bias[m + 2];
      const float b3 = bias.empty() ? 0.0f : bias[m + 3];
      for (std::size_t j = 0; j < pn; ++j) {
        o0[j] = b0;
        o1[j] = b1;
        o2[j] = b2;
        o3[j] = b3;
      }
      for (std::size_t k = 0; k < depth; ++k) {
        const float a0 = w[(m + 0) * depth + k];
        const float a1 = w[(m + 1) * depth + k];
        const float a2 = w[(m + 2) * depth + k];
        const float a3 = w[(m + 3) * depth + k];
        const float* __restrict xr = x + k * cols + p0;
        for (std::size_t j = 0; j < pn; ++j) {
          const float v = xr[j];
          o0[j] += a0 * v;
          o1[j] += a1 * v;
          o2[j] += a2 * v;
          o3[j] += a3 * v;
        }
      }
    }
    for (; m < rows; ++m) {
      float* __restrict o = out + m * cols + p0;
      const float b = bias.empty() ? 0.0f : bias[m];
      for (std::size_t j = 0; j < pn; ++j) o[j] = b;
      for (std::size_t k = 0; k < depth; ++k) {
        const float a = w[m * depth + k];
        const float* __restrict xr = x + k * cols + p0;
        for (std::size_t j = 0; j < pn; ++j) o[j] += a * xr[j];
      }
    }
  }
}

// One output plane of a channel-multiplier-1 depthwise convolution. Taps are
// accumulated in (ky, kx) order for every output position; the valid output
// column range is computed per tap so the inner loop carries no bounds test.
void depthwise_plane(const float* __restrict in, const float* __restrict w, float bias,
                     float* __restrict out, const ConvGeometry& g, const ConvParams& p) {
  const long pad = static_cast<long>(p.padding);
  const long stride = static_cast<long>(p.stride);
  const long in_w = static_cast<long>(g.w);
  const long out_w = static_cast<long>(g.ow);
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    float* __restrict orow = out + oy * g.ow;
    for (std::size_t ox = 0; ox < g.ow; ++ox) orow[ox] = bias;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
      if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
      const float* __restrict irow = in + iy * in_w;
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const float wv = w[ky * g.kw + kx];
        const long off = static_cast<long>(kx) - pad;
        // ox*stride + off in [0, in_w)
        long lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
        long hi = (in_w - 1 - off) >= 0 ? (in_w - 1 - off) / stride + 1 : 0;
        hi = std::min(hi, out_w);
        if (stride == 1) {
          for (long ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox + off];
        } else {
          for (long ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox * stride + off];
        }
      }
    }
  }
}

void im2col(const float* in, std::size_t channels, const ConvGeometry& g, const ConvParams& p,
            float* cols) {
  const std::size_t plane = g.oh * g.ow;
  const long pad = static_cast<long>(p.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        float* dst = cols + ((c * g.kh + ky) * g.kw + kx) * plane;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * p.stride + ky) - pad;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * p.stride + kx) - pad;
            const bool inside =
                iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 && ix < static_cast<long>(g.w);
            dst[oy * g.ow + ox] = inside ? in[(c * g.h + iy) * g.w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

} // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * padding;
  if (padded < kernel) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const float> bias,
              const ConvParams& p) {
  const ConvGeometry g = check_conv(input, weight, bias, p);
  Tensor out(Shape{g.n, g.cout, g.oh, g.ow});
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.oh * g.ow;
  const float* wdata = weight.data().data();

  const bool depthwise = p.groups == g.cin && g.cout == g.cin;
  const bool pointwise = p.groups == 1 && g.kh == 1 && g.kw == 1 && p.stride == 1 && p.padding == 0;

  if (depthwise) {
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t c = 0; c < g.cin; ++c) {
        depthwise_plane(input.item(n).data() + c * in_plane, wdata + c * g.kh * g.kw,
                        bias.empty() ? 0.0f : bias[c], out.item(n).data() + c * out_plane, g, p);
      }
    }
  } else if (pointwise) {
    for (std::size_t n = 0; n < g.n; ++n) {
      gemm_bias(wdata, bias, input.item(n).data(), out.item(n).data(), g.cout, g.cin, out_plane);
    }
  } else {
    const std::size_t cout_per_group = g.cout / p.groups;
    const std::size_t depth = g.cin_per_group * g.kh * g.kw;
    std::vector<float> cols(depth * out_plane);
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t grp = 0; grp < p.groups; ++grp) {
        im2col(input.item(n).data() + grp * g.cin_per_group * in_plane, g.cin_per_group, g, p,
               cols.data());
        std::span<const float> gbias =
            bias.empty() ? bias : bias.subspan(grp * cout_per_group, cout_per_group);
        gemm_bias(wdata + grp * cout_per_group * depth, gbias, cols.data(),
                  out.item(n).data() + grp * cout_per_group * out_plane, cout_per_group, depth,
                  out_plane);
      }
    }
  }
  check_finite(out.data(), "conv2d output");
  return out;
}

Tensor conv2d_reference(const Tensor& input, const Tensor& weight, std::span<const float> bias,
                        const ConvParams& p) {
  const ConvGeometry g = check_conv(input, weight, bias, p);
  Tensor out(Shape{g.n, g.cout, g.oh, g.ow});
  const std::size_t cout_per_group = g.cout / p.groups;
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const std::size_t grp = co / cout_per_group;
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < g.cin_per_group; ++ci) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long iy = static_cast<long>(oy * p.stride + ky) - static_cast<long>(p.padding);
                const long ix = static_cast<long>(ox * p.stride + kx) - static_cast<long>(p.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(g.h) ||
                    ix >= static_cast<long>(g.w)) {
                  continue;
                }
                acc += static_cast<double>(weight.at(co, ci, ky, kx)) *
                       input.at(n, grp * g.cin_per_group + ci, static_cast<std::size_t>(iy),
                                static_cast<std::size_t>(ix));
              }
            }
          }
          out.at(n, co, oy, ox) = static_cast<float>(acc);
        }
      }
    }
  }
  check_finite(out.data(), "conv2d_reference output");
  return out;
}

void relu6_inplace(std::span<float> x) {
  for (float& v : x) v = std::min(std::max(v, 0.0f), 6.0f);
}

Tensor relu6(Tensor x) {
  relu6_inplace(x.data());
  return x;
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  const float count = static_cast<float>(plane);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* src = x.item(n).data() + c * plane;
      float acc = 0.0f;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      out.at(n, c, 0, 0) = acc / count;
    }
  }
  return out;
}

Matrix linear(const Matrix& x, const Matrix& weight, std::span<const float> bias) {
  if (x.cols != weight.cols) {
    throw ShapeError("linear: input width " + std::to_string(x.cols) + " != weight width " +
                     std::to_string(weight.cols));
  }
  if (bias.size() != weight.rows) {
    throw ShapeError("linear: bias length " + std::to_string(bias.size()) + " != " +
                     std::to_string(weight.rows));
  }
  Matrix out(x.rows, weight.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const float* xi = x.data.data() + i * x.cols;
    for (std::size_t o = 0; o < weight.rows; ++o) {
      const float* wo = weight.data.data() + o * weight.cols;
      float acc = 0.0f;
      for (std::size_t d = 0; d < x.cols; ++d) acc += xi[d] * wo[d];
      out(i, o) = acc + bias[o];
    }
  }
  check_finite(out.data, "linear output");
  return out;
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    auto row = logits.row(i);
    const float mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.cols; ++k) sum += std::exp(static_cast<double>(row[k]) - mx);
    for (std::size_t k = 0; k < logits.cols; ++k) {
      out(i, k) = static_cast<float>(std::exp(static_cast<double>(row[k]) - mx) / sum);
    }
  }
  return out;
}

XentResult softmax_xent(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows) {
    throw ShapeError("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(logits.rows) + " rows");
  }
  check_finite(logits.data, "softmax_xent logits");
  XentResult r;
  r.grad = Matrix(logits.rows, logits.cols);
  if (logits.rows == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= logits.cols) {
      throw ShapeError("softmax_xent: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(logits.cols) + ")");
    }
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float v : row) sum += std::exp(v - mx);
    const double log_sum = std::log(sum);
    r.loss += (log_sum - (row[label] - mx)) * inv_n;
    for (std::size_t k = 0; k < logits.cols; ++k) {
      const double prob = std::exp(row[k] - mx - log_sum);
      const double onehot = static_cast<std::size_t>(label) == k ? 1.0 : 0.0;
      r.grad(i, k) = static_cast<float>((prob - onehot) * inv_n);
    }
  }
  return r;
}

FoldedConv fold_batchnorm(const Tensor& conv_weight, std::span<const float> conv_bias,
                          std::span<const float> gamma, std::span<const float> beta,
                          std::span<const float> mean, std::span<const float> var, float eps) {
  const std::size_t cout = conv_weight.shape().n;
  auto check_len = [cout](std::span<const float> v, const char* what) {
    if (v.size() != cout) {
      throw ShapeError(std::string("fold_batchnorm: ") + what + " length " +
                       std::to_string(v.size()) + " != cout " + std::to_string(cout));
    }
  };
  if (!conv_bias.empty()) check_len(conv_bias, "conv bias");
  check_len(gamma, "gamma");
  check_len(beta, "beta");
  check_len(mean, "mean");
  check_len(var, "var");

  FoldedConv out{conv_weight, std::vector<float>(cout)};
  const std::size_t per_out = cout == 0 ? 0 : conv_weight.size() / cout;
  auto w = out.weight.data();
  for (std::size_t co = 0; co < cout; ++co) {
    if (var[co] < 0.0f) throw ShapeError("fold_batchnorm: negative variance");
    const double scale = gamma[co] / std::sqrt(static_cast<double>(var[co]) + eps);
    for (std::size_t i = 0; i < per_out; ++i) {
      w[co * per_out + i] = static_cast<float>(w[co * per_out + i] * scale);
    }
    const double b = conv_bias.empty() ? 0.0 : conv_bias[co];
    out.bias[co] = static_cast<float>(beta[co] + (b - mean[co]) * scale);
  }
  check_finite(out.weight.data(), "folded weight");
  check_finite(out.bias, "folded bias");
  return out;
}

} // namespace mnv2
