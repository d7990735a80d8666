#include "whar/metrics.hpp"

namespace whar {

int64_t Metrics::total() const {
  int64_t n = 0;
  for (int64_t v : confusion) n += v;
  return n;
}

double Metrics::accuracy() const {
  int64_t hit = 0;
  for (int64_t c = 0; c < classes; ++c) hit += count(c, c);
  return (double)hit / (double)total();
}

double Metrics::precision(int64_t c) const {
  int64_t predicted = 0;
  for (int64_t t = 0; t < classes; ++t) predicted += count(t, c);
  return predicted == 0 ? 0.0 : (double)count(c, c) / (double)predicted;
}

double Metrics::recall(int64_t c) const {
  int64_t actual = 0;
  for (int64_t p = 0; p < classes; ++p) actual += count(c, p);
  return actual == 0 ? 0.0 : (double)count(c, c) / (double)actual;
}

double Metrics::f1(int64_t c) const {
  double p = precision(c), r = recall(c);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double Metrics::macro_f1() const {
  double sum = 0;
  for (int64_t c = 0; c < classes; ++c) sum += f1(c);
  return sum / (double)classes;
}

std::string Metrics::table() const {
  std::string out = strfmt("samples %lld  accuracy %.4f  macro-f1 %.4f\n",
                           (long long)total(), accuracy(), macro_f1());
  out += "class  precision  recall     f1\n";
  for (int64_t c = 0; c < classes; ++c)
    out += strfmt("%5lld  %9.4f  %6.4f  %6.4f\n", (long long)c, precision(c),
                  recall(c), f1(c));
  return out;
}

Metrics compute_metrics(const std::vector<int>& predictions,
                        const std::vector<int>& labels, int64_t classes) {
  check(!labels.empty(), "metrics need at least one sample");
  check(predictions.size() == labels.size(),
        strfmt("metrics: %zu predictions vs %zu labels", predictions.size(),
               labels.size()));
  check(classes >= 1, "metrics: classes must be positive");
  Metrics m;
  m.classes = classes;
  m.confusion.assign((size_t)(classes * classes), 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    int t = labels[i], p = predictions[i];
    check(t >= 0 && t < classes,
          strfmt("metrics: label %d outside [0, %lld)", t,
                 (long long)classes));
    check(p >= 0 && p < classes,
          strfmt("metrics: prediction %d outside [0, %lld)", p,
                 (long long)classes));
    ++m.confusion[(size_t)(t * (int)classes + p)];
  }
  return m;
}

}  // namespace whar
