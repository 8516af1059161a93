#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stkd {

using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 3;

/// Allocator handing out 64-byte aligned blocks. Vectorized kernels take
/// different code paths for differently aligned inputs, so a fixed alignment
/// keeps results bitwise reproducible regardless of heap state.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Dense row-major f64 array of rank <= 3.
///
/// A Tensor is a handle: copies share storage, which is what lets the tape
/// route gradients back to the parameters a model owns. Use clone() for an
/// independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::span<const double> values, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<double> values, bool requires_grad = false);
  /// Takes ownership of an aligned buffer without copying.
  static Tensor adopt(Shape shape, Buffer values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient buffer; empty span when none was accumulated yet.
  std::span<const double> grad() const;
  /// Allocates a zero gradient buffer on first use.
  std::span<double> grad_buffer() const;
  void zero_grad();
  void drop_grad();

  /// Same storage and gradient under a different shape with equal numel.
  Tensor view(Shape shape) const;

  /// Copy of the values with no gradient tracking.
  Tensor detach() const;
  /// Deep copy including requires_grad (but not the gradient).
  Tensor clone() const;

  /// Throws NumericError naming `what` if any value is NaN or Inf.
  void check_finite(std::string_view what) const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Storage;
  Tensor(std::shared_ptr<Storage> impl, Shape shape) : impl_(std::move(impl)), shape_(std::move(shape)) {}
  std::shared_ptr<Storage> impl_;
  Shape shape_;
};

/// Ordered record of differentiable operations.
///
/// Entries are appended in execution order, so inputs always precede the
/// outputs that consume them; backward() walks the record in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  /// A tape that records nothing; ops evaluated on it yield constant tensors.
  static Tape no_grad();

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Marks `output` as produced from `inputs`. When recording and any input
  /// requires a gradient, the output is made differentiable and `fn` (which
  /// must add d(loss)/d(input) into each input's grad_buffer()) is kept.
  Tensor record(Tensor output, std::initializer_list<Tensor> inputs, BackwardFn fn);

  /// Reverse-mode sweep from a scalar loss. Intermediate gradients are reset
  /// each call; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

  void clear() noexcept { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    std::vector<Tensor> inputs;
    BackwardFn fn;
  };
  bool recording_ = true;
  std::vector<Entry> entries_;
};

}  // namespace stkd
