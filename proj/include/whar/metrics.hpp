#pragma once

#include <string>
#include <vector>

#include "whar/base.hpp"

namespace whar {

// Classification quality over one evaluation pass. The confusion matrix is
// the source of truth (integer counts, row = true class, column = predicted)
// and every rate is recomputed from it on demand.
struct Metrics {
  int64_t classes = 0;
  std::vector<int64_t> confusion;

  int64_t count(int64_t truth, int64_t pred) const {
    return confusion[(size_t)(truth * classes + pred)];
  }
  int64_t total() const;
  double accuracy() const;
  double precision(int64_t c) const;
  double recall(int64_t c) const;
  double f1(int64_t c) const;
  // Unweighted mean of per-class F1. A class absent from both predictions
  // and labels contributes zero.
  double macro_f1() const;

  std::string table() const;
};

Metrics compute_metrics(const std::vector<int>& predictions,
                        const std::vector<int>& labels, int64_t classes);

}  // namespace whar
