#include "tensor/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "common/error.hpp"

namespace fare::tensor {

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw Error(Errc::shape_mismatch, "tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw Error(Errc::shape_mismatch, "tensor dimension must be >= 1, got " + to_string(shape));
  }
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(element_count(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (element_count(shape_) != data_.size()) {
    throw Error(Errc::shape_mismatch, "shape " + to_string(shape_) + " does not match " +
                                          std::to_string(data_.size()) + " values");
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw Error(Errc::shape_mismatch, "item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

void Tensor::reshape(Shape shape) {
  check_shape(shape);
  if (element_count(shape) != data_.size()) {
    throw Error(Errc::shape_mismatch, "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = std::move(shape);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::resize(const Shape& shape) {
  check_shape(shape);
  shape_ = shape;
  data_.resize(element_count(shape_));
}

}  // namespace fare::tensor
