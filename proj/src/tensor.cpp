#include "rppg/tensor.hpp"

#include <cmath>
#include <sstream>

#include "rppg/errors.hpp"

namespace rppg {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t ext : shape) {
    if (ext <= 0) {
      throw ContractError("non-positive extent in shape " + shape_str(shape));
    }
    n *= ext;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool shapes_equal(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape) {
  return full(std::move(shape), 0.0);
}

Tensor Tensor::full(Shape shape, double value) {
  const int64_t n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
}

Tensor Tensor::scalar(double value) {
  return from_data({}, {value});
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(data.size())) {
    throw ContractError("data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
  t.requires_grad_ = requires_grad;
  return t;
}

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw ContractError("expected a single-element tensor, got shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ContractError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  t.requires_grad_ = requires_grad_;
  return t;
}

Tensor Tensor::with_requires_grad(bool requires_grad) const {
  Tensor t = *this;
  t.requires_grad_ = requires_grad;
  return t;
}

const Tensor* find_tensor(const NamedTensors& entries, const std::string& name) {
  for (const auto& [entry_name, tensor] : entries) {
    if (entry_name == name) return &tensor;
  }
  return nullptr;
}

int64_t total_elements(const NamedTensors& entries) {
  int64_t n = 0;
  for (const auto& [name, tensor] : entries) n += tensor.numel();
  return n;
}

}  // namespace rppg
