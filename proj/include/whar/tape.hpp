#pragma once

// Reverse-mode tape. Ops append records in execution order, which is already
// a topological order of the data flow; backward() walks it in exact reverse.
// Gradients accumulate (+=) into input buffers and are never overwritten, so
// running backward twice from the same loss doubles every leaf gradient.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "whar/tensor.hpp"

namespace whar {

template <class T>
class TapeT {
 public:
  struct Node {
    const char* op;
    std::shared_ptr<TensorImplT<T>> out;
    // Called with the output gradient buffer; accumulates into input grads.
    std::function<void(const T*)> backward;
  };

  TapeT() : prev_(slot()) { slot() = this; }
  ~TapeT() { slot() = prev_; }
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  // Innermost active tape on this thread, or null when recording is off.
  static TapeT* current() { return slot(); }

  void record(const char* op, const TensorT<T>& out,
              std::function<void(const T*)> backward) {
    out.impl()->tape_output = true;
    nodes_.push_back(Node{op, out.impl(), std::move(backward)});
  }

  size_t size() const { return nodes_.size(); }

  void backward(const TensorT<T>& loss) {
    check(loss.defined() && loss.requires_grad() && loss.impl()->tape_output,
          "backward: tensor is detached from the graph (no grad history)");
    check(loss.numel() == 1, "backward: loss must be a scalar");
    // Non-leaf gradients restart from zero on every pass; leaf gradients are
    // left alone so repeated calls accumulate there.
    for (Node& n : nodes_)
      if (n.out->grad)
        std::fill(n.out->grad->begin(), n.out->grad->end(), T(0));
    {
      auto& l = *loss.impl();
      if (!l.grad) l.grad = std::make_shared<std::vector<T>>(1, T(0));
      (*l.grad)[0] = T(1);
    }
    for (size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.out->grad) continue;  // nothing flowed into this output
      n.backward(n.out->grad->data());
    }
  }

 private:
  template <class U>
  friend class NoGradT;

  static TapeT*& slot() {
    thread_local TapeT* cur = nullptr;
    return cur;
  }

  std::vector<Node> nodes_;
  TapeT* prev_;
};

// Disables recording in a scope (evaluation passes, host-side statistics).
template <class T>
class NoGradT {
 public:
  NoGradT() : saved_(TapeT<T>::slot()) { TapeT<T>::slot() = nullptr; }
  ~NoGradT() { TapeT<T>::slot() = saved_; }
  NoGradT(const NoGradT&) = delete;
  NoGradT& operator=(const NoGradT&) = delete;

 private:
  TapeT<T>* saved_;
};

using Tape = TapeT<float>;
using NoGrad = NoGradT<float>;

}  // namespace whar
