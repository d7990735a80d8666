#pragma once

#include <cmath>

#include "whar/params.hpp"

namespace whar {

// AdamW over a parameter registry. Weight decay is decoupled: the parameter
// is scaled by (1 - lr*wd) and the adaptive update is subtracted separately,
// so a zero gradient decays the parameter and nothing else.
//
// The whole gradient set is scanned for poison before any state changes, so
// an aborted step leaves parameters, moments and the step counter untouched.
struct AdamW {
  float lr = 1e-4f;
  float weight_decay = 1e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  int64_t steps = 0;
  std::vector<std::vector<float>> m, v;

  void attach(const NamedTensors<float>& params) {
    steps = 0;
    m.assign(params.items.size(), {});
    v.assign(params.items.size(), {});
    for (size_t i = 0; i < params.items.size(); ++i) {
      size_t n = (size_t)params.items[i].second.numel();
      m[i].assign(n, 0.f);
      v[i].assign(n, 0.f);
    }
  }

  void step(NamedTensors<float>& params) {
    check(m.size() == params.items.size(),
          "optimizer not attached to this parameter set");
    for (auto& [name, p] : params.items)
      if (p.has_grad())
        for (float g : p.grad())
          check(!std::isnan(g),
                strfmt("NaN gradient in %s, step aborted", name.c_str()));

    ++steps;
    float c1 = (float)(1.0 / (1.0 - std::pow((double)beta1, (double)steps)));
    float c2 = (float)(1.0 / (1.0 - std::pow((double)beta2, (double)steps)));
    float decay = 1.f - lr * weight_decay;
    for (size_t i = 0; i < params.items.size(); ++i) {
      TensorT<float>& p = params.items[i].second;
      check((size_t)p.numel() == m[i].size(),
            strfmt("optimizer state for %s has %zu entries, parameter has "
                   "%lld",
                   params.items[i].first.c_str(), m[i].size(),
                   (long long)p.numel()));
      const float* g = p.has_grad() ? p.grad().data() : nullptr;
      float* w = p.data();
      for (size_t j = 0; j < m[i].size(); ++j) {
        float gj = g ? g[j] : 0.f;
        m[i][j] = beta1 * m[i][j] + (1.f - beta1) * gj;
        v[i][j] = beta2 * v[i][j] + (1.f - beta2) * gj * gj;
        float mhat = m[i][j] * c1;
        float vhat = v[i][j] * c2;
        w[j] = w[j] * decay - lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  static void zero_grads(NamedTensors<float>& params) {
    for (auto& [name, p] : params.items) p.zero_grad();
  }
};

}  // namespace whar
