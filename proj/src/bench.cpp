#include "whar/bench.hpp"

#include <algorithm>
#include <chrono>

namespace whar {

LatencyStats measure_latency(NetworkT<float>& net, int64_t warmup,
                             int64_t runs) {
  check(runs >= 1, "latency measurement needs at least one run");
  const auto& m = net.cfg;
  TensorT<float> x =
      TensorT<float>::zeros({1, m.sensors, m.variables, m.length});
  Rng rng(7);
  for (int64_t i = 0; i < x.numel(); ++i)
    x.data()[i] = (float)rng.uniform(-1, 1);

  for (int64_t i = 0; i < warmup; ++i) net.forward(x, {});

  std::vector<double> us((size_t)runs);
  for (auto& t : us) {
    auto t0 = std::chrono::steady_clock::now();
    net.forward(x, {});
    t = std::chrono::duration<double, std::micro>(
            std::chrono::steady_clock::now() - t0)
            .count();
  }
  std::sort(us.begin(), us.end());

  LatencyStats s;
  s.runs = runs;
  for (double t : us) s.mean_us += t;
  s.mean_us /= (double)runs;
  s.p50_us = us[(size_t)((runs - 1) * 50 / 100)];
  s.p95_us = us[(size_t)((runs - 1) * 95 / 100)];
  return s;
}

}  // namespace whar
