#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace uscore::nn {

/// 64-byte aligned storage so vectorized kernels see the same alignment on every run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

/// Dense row-major array of doubles. Batched activations are stored as
/// [batch, features]; convolution layers interpret the feature axis as
/// [channels, height, width].
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;
  using Storage = std::vector<double, AlignedAllocator<double>>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) {
    Tensor t = other;
    t.fill(0.0);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  Storage& values() { return data_; }
  const Storage& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element access for rank-2 tensors.
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Row `r` of a rank-2 tensor.
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  /// Reinterprets the data under a new shape with the same element count.
  void reshape(Shape shape);
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;
  void fill(double value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  Storage data_;
};

std::size_t shape_product(const Tensor::Shape& shape);
std::string shape_string(const Tensor::Shape& shape);

/// Throws NumericalError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const std::string& what);

/// Stacks equally-shaped tensors into [count, size] rows.
Tensor stack_rows(std::span<const Tensor> items);

}  // namespace uscore::nn
