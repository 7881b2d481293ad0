#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mamlcon {

/// Thrown when tensor shapes do not line up for an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor of 64-bit floats.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape with an equal element count.
  Tensor reshaped(Shape shape) const;

  /// Copy of the i-th slice along axis 0.
  Tensor slice(std::size_t index) const;

  /// Stack equally shaped tensors along a new leading axis.
  static Tensor stack(std::span<const Tensor> items);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Insertion-ordered name -> Tensor map. The tag keeps parameters, gradients
/// and optimizer moments from being mixed up at compile time.
template <class Tag>
class NamedTensors {
 public:
  using Entry = std::pair<std::string, Tensor>;

  NamedTensors() = default;

  void add(std::string name, Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate tensor name '" + name + "'");
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return find(name) != nullptr; }

  const Tensor* find(const std::string& name) const {
    for (const auto& [key, value] : entries_)
      if (key == name) return &value;
    return nullptr;
  }
  Tensor* find(const std::string& name) {
    for (auto& [key, value] : entries_)
      if (key == name) return &value;
    return nullptr;
  }

  const Tensor& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw std::out_of_range("no tensor named '" + name + "'");
  }
  Tensor& at(const std::string& name) {
    if (auto* t = find(name)) return *t;
    throw std::out_of_range("no tensor named '" + name + "'");
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
  }

  /// Zero-filled map with the same names and shapes as `like`.
  template <class OtherTag>
  static NamedTensors zeros_like(const NamedTensors<OtherTag>& like) {
    NamedTensors out;
    for (const auto& [name, t] : like) out.add(name, Tensor(t.shape()));
    return out;
  }

  /// True when names, order and shapes agree.
  template <class OtherTag>
  bool same_layout(const NamedTensors<OtherTag>& other) const {
    if (size() != other.size()) return false;
    auto it = other.begin();
    for (const auto& [name, t] : entries_) {
      if (name != it->first || t.shape() != it->second.shape()) return false;
      ++it;
    }
    return true;
  }

  bool operator==(const NamedTensors& other) const = default;

 private:
  std::vector<Entry> entries_;
};

struct ParameterTag {};
struct GradientTag {};
struct MomentTag {};

using ParameterSet = NamedTensors<ParameterTag>;
using GradientSet = NamedTensors<GradientTag>;
using MomentSet = NamedTensors<MomentTag>;

}  // namespace mamlcon
