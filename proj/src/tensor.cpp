#include "mnv2/tensor.hpp"

#include <cmath>
#include <string>

#include "mnv2/error.hpp"

namespace mnv2 {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<float> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

void check_finite(std::span<const float> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteError(std::string("non-finite value in ") + what + " at index " +
                           std::to_string(i));
    }
  }
}

} // namespace mnv2
