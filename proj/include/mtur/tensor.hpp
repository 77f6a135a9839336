#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace mtur {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

/// Cache-line aligned storage. Vectorized reductions peel a prefix whose
/// length depends on the buffer address, so a fixed alignment is what makes
/// results repeat bit for bit between runs.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;
std::string shape_string(const Shape& shape);

/// Dense row-major array. Tensors used as activations are NCHW.
///
/// Zero-extent dimensions are permitted so that an empty channel block can be
/// concatenated; every other dimension of a rank-4 activation is expected to
/// be at least 1.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{1}, data_(1, T{0}) {}
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, const std::vector<T>& data);
  Tensor(Shape shape, AlignedVector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // NCHW element access; no bounds checks beyond debug asserts.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  T item() const;
  bool all_finite() const noexcept;
  void fill(T v);
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    AlignedVector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

/// Throws DimensionError unless `t` is rank 4; `what` names the operand.
template <typename T>
void require_nchw(const Tensor<T>& t, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mtur
