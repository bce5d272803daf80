#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mnv2 {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense NCHW single-precision tensor, row-major.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  // One batch item as a contiguous CHW view.
  std::span<float> item(std::size_t n) {
    const std::size_t stride = shape_.c * shape_.plane();
    return std::span<float>(data_).subspan(n * stride, stride);
  }
  std::span<const float> item(std::size_t n) const {
    const std::size_t stride = shape_.c * shape_.plane();
    return std::span<const float>(data_).subspan(n * stride, stride);
  }

  bool operator==(const Tensor&) const = default;

private:
  Shape shape_{};
  std::vector<float> data_;
};

/// Row-major 2-D matrix (rows = batch items).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<float> values);

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data).subspan(r * cols, cols);
  }
  std::span<float> row(std::size_t r) { return std::span<float>(data).subspan(r * cols, cols); }

  bool operator==(const Matrix&) const = default;
};

// Throws NonFiniteError naming `what` if any value is NaN or infinite.
void check_finite(std::span<const float> values, const char* what);

} // namespace mnv2
