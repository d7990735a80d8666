#pragma once

// Parameter bookkeeping shared by all layers. Tensors are handle types, so a
// registry stores copies that alias the layer's storage; loading must write
// through these handles (never reassign them) to keep the aliasing intact.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "whar/rng.hpp"
#include "whar/tensor.hpp"

namespace whar {

template <class T>
struct NamedTensors {
  std::vector<std::pair<std::string, TensorT<T>>> items;

  void add(const std::string& name, const TensorT<T>& t) {
    for (auto& it : items)
      check(it.first != name, "duplicate tensor name: " + name);
    items.emplace_back(name, t);
  }

  TensorT<T>* find(const std::string& name) {
    for (auto& it : items)
      if (it.first == name) return &it.second;
    return nullptr;
  }

  int64_t total_elements() const {
    int64_t n = 0;
    for (auto& it : items) n += it.second.numel();
    return n;
  }
};

// Copies values across precisions by registry position. Names and shapes
// must line up exactly; this is how the float model gets a double twin.
template <class A, class B>
void copy_cast(const NamedTensors<A>& src, NamedTensors<B>& dst) {
  check(src.items.size() == dst.items.size(),
        "copy_cast: registries differ in size");
  for (size_t i = 0; i < src.items.size(); ++i) {
    check(src.items[i].first == dst.items[i].first,
          "copy_cast: name mismatch at " + src.items[i].first);
    const auto& s = src.items[i].second;
    auto& d = dst.items[i].second;
    check(s.shape() == d.shape(), "copy_cast: shape mismatch at " + src.items[i].first);
    for (int64_t j = 0; j < s.numel(); ++j) d.vec()[(size_t)j] = (B)s.vec()[(size_t)j];
  }
}

namespace init {

// U(-1/sqrt(fan_in), +1/sqrt(fan_in)), the usual default for conv/linear.
template <class T>
TensorT<T> fan_in_uniform(Rng& rng, Shape shape, int64_t fan_in) {
  auto t = TensorT<T>::zeros(std::move(shape));
  t.set_requires_grad(true);
  const double k = 1.0 / std::sqrt((double)fan_in);
  for (auto& v : t.vec()) v = (T)rng.uniform(-k, k);
  return t;
}

template <class T>
TensorT<T> constant(Shape shape, T value, bool requires_grad = true) {
  auto t = TensorT<T>::full(std::move(shape), value);
  t.set_requires_grad(requires_grad);
  return t;
}

template <class T>
TensorT<T> zeros(Shape shape, bool requires_grad = true) {
  return constant<T>(std::move(shape), (T)0, requires_grad);
}

}  // namespace init
}  // namespace whar
