#pragma once

// Dense row-major tensors. TensorT is a cheap handle around a shared impl;
// data is immutable once written by the producing op, gradients accumulate in
// a separate buffer. Reshapes share storage (metadata-only, bit-preserving).

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <vector>

#include "whar/base.hpp"

namespace whar {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "(";
  for (size_t i = 0; i < s.size(); ++i)
    r += (i ? "," : "") + std::to_string(s[i]);
  return r + ")";
}

template <class T>
struct TensorImplT {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool tape_output = false;
};

template <class T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape) {
    TensorT t;
    t.impl_ = std::make_shared<TensorImplT<T>>();
    t.impl_->data =
        std::make_shared<std::vector<T>>(shape_numel(shape), T(0));
    t.impl_->shape = std::move(shape);
    return t;
  }

  static TensorT full(Shape shape, T v) {
    TensorT t = zeros(std::move(shape));
    for (T& x : *t.impl_->data) x = v;
    return t;
  }

  static TensorT from(Shape shape, std::vector<T> values) {
    check(shape_numel(shape) == (int64_t)values.size(),
          strfmt("tensor init: shape %s wants %lld values, got %zu",
                 shape_str(shape).c_str(), (long long)shape_numel(shape),
                 values.size()));
    TensorT t;
    t.impl_ = std::make_shared<TensorImplT<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t ndim() const { return (int64_t)impl_->shape.size(); }
  int64_t dim(int64_t i) const { return impl_->shape[(size_t)i]; }
  int64_t numel() const { return (int64_t)impl_->data->size(); }

  T* data() { return impl_->data->data(); }
  const T* data() const { return impl_->data->data(); }
  std::vector<T>& vec() { return *impl_->data; }
  const std::vector<T>& vec() const { return *impl_->data; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  bool has_grad() const { return impl_ && impl_->grad != nullptr; }
  // Gradient buffer, allocated zero on first use.
  std::vector<T>& grad() {
    if (!impl_->grad)
      impl_->grad = std::make_shared<std::vector<T>>(numel(), T(0));
    return *impl_->grad;
  }
  const std::vector<T>& grad() const {
    check(has_grad(), "tensor has no gradient");
    return *impl_->grad;
  }
  void zero_grad() {
    if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), T(0));
  }

  // Metadata-only reshape; shares storage with this tensor.
  TensorT view(Shape shape) const {
    check(shape_numel(shape) == numel(),
          strfmt("view: cannot reshape %s (numel %lld) to %s",
                 shape_str(this->shape()).c_str(), (long long)numel(),
                 shape_str(shape).c_str()));
    TensorT t;
    t.impl_ = std::make_shared<TensorImplT<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = impl_->data;
    return t;
  }

  // Element access for tests and small host-side code.
  T at(std::initializer_list<int64_t> idx) const {
    check((int64_t)idx.size() == ndim(), "at(): index rank mismatch");
    int64_t off = 0;
    int64_t i = 0;
    for (int64_t v : idx) {
      off = off * impl_->shape[(size_t)i] + v;
      ++i;
    }
    return (*impl_->data)[(size_t)off];
  }

  T item() const {
    check(numel() == 1, "item(): tensor is not a scalar");
    return (*impl_->data)[0];
  }

  std::shared_ptr<TensorImplT<T>> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImplT<T>> impl_;
};

using Tensor = TensorT<float>;

}  // namespace whar
