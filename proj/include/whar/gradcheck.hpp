#pragma once

// Finite-difference verification of reverse-mode gradients.
//
// Each check owns an input generator and a functor that maps inputs to an
// output tensor; the harness turns the output into a scalar through a fixed
// random weighted sum, then compares analytic gradients against central
// differences. Two passes run per shape:
//  - a float pass (the production arithmetic) judged at rel. error <= 1e-2,
//  - a double re-execution of the same graph judged at rel. error <= 1e-4.
// The double pass uses inputs cast exactly from the float values, so both
// passes differentiate the same function at the same point.

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "whar/ops.hpp"
#include "whar/rng.hpp"
#include "whar/tape.hpp"

namespace whar {

struct GradCheck {
  std::string name;
  // Fresh random inputs for one shape instance. Inputs with requires_grad
  // set are differentiated; the rest are treated as fixed.
  std::function<std::vector<TensorT<float>>(Rng&)> make_inputs;
  std::function<TensorT<float>(const std::vector<TensorT<float>>&)> run_f;
  std::function<TensorT<double>(const std::vector<TensorT<double>>&)> run_d;
};

// Wraps a generic functor (callable on both float and double tensors) into a
// GradCheck. The functor may return any shape; the harness reduces it.
template <class Gen, class Fn>
GradCheck make_gradcheck(std::string name, Gen gen, Fn fn) {
  GradCheck c;
  c.name = std::move(name);
  c.make_inputs = gen;
  c.run_f = [fn](const std::vector<TensorT<float>>& xs) { return fn(xs); };
  c.run_d = [fn](const std::vector<TensorT<double>>& xs) { return fn(xs); };
  return c;
}

struct GradReport {
  std::string name;
  int shapes = 0;
  int elements = 0;         // differentiated scalar inputs across all shapes
  double max_err_f = 0;     // float pass worst relative error
  double max_err_d = 0;     // double pass worst relative error
  bool pass = false;
  std::string detail;       // first failure location, empty when passing
};

namespace gradcheck_detail {

template <class T>
TensorT<T> cast_from_float(const TensorT<float>& x) {
  TensorT<T> t = TensorT<T>::zeros(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) t.data()[i] = (T)x.data()[i];
  t.set_requires_grad(x.requires_grad());
  return t;
}

inline double rel_err(double a, double b) {
  double m = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) / m;
}

}  // namespace gradcheck_detail

// Runs one check over `shapes` random instances. Tolerances are the contract
// defaults; tighten or relax only in tests that explain why.
inline GradReport run_gradcheck(const GradCheck& c, uint64_t seed,
                                int shapes = 20, double tol_f = 1e-2,
                                double tol_d = 1e-4) {
  namespace gd = gradcheck_detail;
  GradReport rep;
  rep.name = c.name;
  rep.pass = true;
  for (int sh = 0; sh < shapes; ++sh) {
    Rng rng(derive_seed(seed, 0x67726164, (uint64_t)sh));
    std::vector<TensorT<float>> xs_f = c.make_inputs(rng);

    // fixed reduction weights, derived from the output shape
    TensorT<float> w_f;
    {
      NoGradT<float> ng;
      TensorT<float> probe = c.run_f(xs_f);
      w_f = TensorT<float>::zeros(probe.shape());
      for (int64_t i = 0; i < w_f.numel(); ++i)
        w_f.data()[i] = (float)rng.uniform(-1, 1);
    }
    TensorT<double> w_d = gd::cast_from_float<double>(w_f);

    std::vector<TensorT<double>> xs_d;
    xs_d.reserve(xs_f.size());
    for (const auto& x : xs_f) xs_d.push_back(gd::cast_from_float<double>(x));

    // analytic gradients, double graph
    TapeT<double> tape_d;
    TensorT<double> loss_d = ops::sum(ops::mul(c.run_d(xs_d), w_d));
    tape_d.backward(loss_d);

    // analytic gradients, float graph
    TapeT<float> tape_f;
    TensorT<float> loss_f = ops::sum(ops::mul(c.run_f(xs_f), w_f));
    tape_f.backward(loss_f);

    // central differences on the double inputs
    auto loss_at = [&](const std::vector<TensorT<double>>& xs) {
      NoGradT<double> ng;
      TensorT<double> y = c.run_d(xs);
      double acc = 0;
      for (int64_t i = 0; i < y.numel(); ++i)
        acc += y.data()[i] * w_d.data()[i];
      return acc;
    };
    for (size_t xi = 0; xi < xs_d.size(); ++xi) {
      if (!xs_d[xi].requires_grad()) continue;
      const auto& gd_vec = xs_d[xi].grad();
      const auto& gf_vec = xs_f[xi].grad();
      for (int64_t j = 0; j < xs_d[xi].numel(); ++j) {
        double x0 = xs_d[xi].data()[j];
        double h = 6e-6 * std::max(1.0, std::abs(x0));
        xs_d[xi].data()[j] = x0 + h;
        double lp = loss_at(xs_d);
        xs_d[xi].data()[j] = x0 - h;
        double lm = loss_at(xs_d);
        xs_d[xi].data()[j] = x0;
        double fd = (lp - lm) / (2 * h);
        double ed = gd::rel_err(gd_vec[(size_t)j], fd);
        double ef = gd::rel_err(gf_vec[(size_t)j], fd);
        rep.max_err_d = std::max(rep.max_err_d, ed);
        rep.max_err_f = std::max(rep.max_err_f, ef);
        ++rep.elements;
        if ((ed > tol_d || ef > tol_f) && rep.detail.empty()) {
          rep.detail = strfmt(
              "%s: shape %d input %zu elem %lld: fd=%.8g analytic64=%.8g "
              "(err %.2e) analytic32=%.8g (err %.2e)",
              c.name.c_str(), sh, xi, (long long)j, fd, gd_vec[(size_t)j], ed,
              (double)gf_vec[(size_t)j], ef);
          rep.pass = false;
        }
      }
    }
    ++rep.shapes;
  }
  return rep;
}

}  // namespace whar
