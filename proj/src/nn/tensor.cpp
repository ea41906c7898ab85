#include "uscore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uscore/errors.hpp"

namespace uscore::nn {

std::size_t shape_product(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t width = shape_.at(1);
  return std::span<double>(data_).subspan(r * width, width);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t width = shape_.at(1);
  return std::span<const double>(data_).subspan(r * width, width);
}

void Tensor::reshape(Shape shape) {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw NumericalError("non-finite values in " + what);
}

Tensor stack_rows(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("cannot stack an empty tensor list");
  const std::size_t width = items.front().size();
  Tensor out({items.size(), width});
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].size() != width) {
      throw ShapeError("stack_rows: item " + std::to_string(i) + " has " + std::to_string(items[i].size()) +
                       " elements, expected " + std::to_string(width));
    }
    std::copy(items[i].values().begin(), items[i].values().end(), out.row(i).begin());
  }
  return out;
}

}  // namespace uscore::nn
