#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace seqdiff {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op would store NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};

/// Dense row-major array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage, which is what
/// lets the graph hand gradients back to parameters owned elsewhere. Use
/// clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : s_(std::make_shared<TensorStorage<T>>()) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + seqdiff::to_string(shape));
    }
    s_->shape = std::move(shape);
    s_->data = std::move(data);
    s_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(s_); }

  const Shape& shape() const { return storage().shape; }
  std::size_t rank() const { return storage().shape.size(); }
  std::size_t dim(std::size_t i) const { return storage().shape.at(i); }
  std::size_t size() const { return storage().data.size(); }

  std::span<T> data() { return storage().data; }
  std::span<const T> data() const { return storage().data; }
  T* ptr() { return storage().data.data(); }
  const T* ptr() const { return storage().data.data(); }

  T& operator[](std::size_t i) { return storage().data[i]; }
  const T& operator[](std::size_t i) const { return storage().data[i]; }

  T item() const {
    if (size() != 1) {
      throw ShapeError("item() on tensor of shape " + seqdiff::to_string(shape()));
    }
    return storage().data[0];
  }

  bool requires_grad() const { return storage().requires_grad; }
  void set_requires_grad(bool v) { storage().requires_grad = v; }

  bool has_grad() const { return !storage().grad.empty(); }
  std::span<const T> grad() const { return storage().grad; }
  std::span<T> grad() { return storage().grad; }

  /// Gradient buffer, zero-allocated on first use.
  std::vector<T>& grad_buffer() {
    auto& st = storage();
    if (st.grad.empty()) st.grad.assign(st.data.size(), T{0});
    return st.grad;
  }

  void zero_grad() {
    auto& g = storage().grad;
    std::fill(g.begin(), g.end(), T{0});
  }

  void clear_grad() { storage().grad.clear(); }

  Tensor clone() const {
    Tensor t;
    t.s_ = std::make_shared<TensorStorage<T>>(*s_);
    return t;
  }

  /// Deep copy without gradient or tracking.
  Tensor detach() const { return Tensor(shape(), storage().data, false); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(size());
    std::transform(storage().data.begin(), storage().data.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape(), std::move(out), requires_grad());
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  const std::shared_ptr<TensorStorage<T>>& impl() const { return s_; }

 private:
  TensorStorage<T>& storage() {
    if (!s_) throw std::logic_error("use of undefined tensor");
    return *s_;
  }
  const TensorStorage<T>& storage() const {
    if (!s_) throw std::logic_error("use of undefined tensor");
    return *s_;
  }

  std::shared_ptr<TensorStorage<T>> s_;
};

template <typename T>
void ensure_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got " + to_string(s));
  }
}

}  // namespace seqdiff
