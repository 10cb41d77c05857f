#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rppg {

using Shape = std::vector<int64_t>;

// Product of extents; throws ContractError on a non-positive extent.
int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool shapes_equal(const Shape& a, const Shape& b);

// Dense row-major tensor of doubles. The buffer is immutable once the tensor
// is constructed; operations allocate fresh tensors, and reshapes share the
// buffer. A rank-0 shape holds a single scalar.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  bool requires_grad() const { return requires_grad_; }

  std::span<const double> data() const {
    return data_ ? std::span<const double>(*data_) : std::span<const double>();
  }
  double operator[](int64_t flat) const { return (*data_)[static_cast<size_t>(flat)]; }

  // Value of a single-element tensor.
  double scalar_value() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shapes_equal(shape_, other.shape_); }

  // Shares the buffer under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;
  Tensor with_requires_grad(bool requires_grad) const;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  bool requires_grad_ = false;
};

// Insertion-ordered parameter collections keyed by layer name.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

const Tensor* find_tensor(const NamedTensors& entries, const std::string& name);
int64_t total_elements(const NamedTensors& entries);

}  // namespace rppg
