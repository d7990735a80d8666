#pragma once

#include "whar/network.hpp"

namespace whar {

struct LatencyStats {
  double mean_us = 0;
  double p50_us = 0;
  double p95_us = 0;
  int64_t runs = 0;
};

// Single-sample inference latency: `warmup` untimed forwards, then `runs`
// timed ones on a fixed random input. Percentiles are nearest-rank over the
// sorted times.
LatencyStats measure_latency(NetworkT<float>& net, int64_t warmup = 10,
                             int64_t runs = 100);

}  // namespace whar
