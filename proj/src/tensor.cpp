#include "mamlcon/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace mamlcon {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

static void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimension of size 0 in " + shape_to_string(shape));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice(std::size_t index) const {
  if (index >= shape_.at(0))
    throw ShapeError("slice " + std::to_string(index) + " out of range for " + shape_to_string(shape_));
  Shape inner(shape_.begin() + 1, shape_.end());
  if (inner.empty()) inner = {1};
  const std::size_t stride = data_.size() / shape_[0];
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(index * stride),
                          data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * stride));
  return Tensor(std::move(inner), std::move(out));
}

Tensor Tensor::stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack zero tensors");
  const Shape& inner = items.front().shape();
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const auto& t : items) {
    if (t.shape() != inner)
      throw ShapeError("stack: shape " + shape_to_string(t.shape()) + " differs from " + shape_to_string(inner));
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace mamlcon
