#include "whar/ablate.hpp"

#include <algorithm>

#include "whar/analyzer.hpp"

namespace whar {

double median(std::vector<double> v) {
  check(!v.empty(), "median of nothing");
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<AblationRow> run_ablation(const FullConfig& base,
                                      const SynthSplits& data,
                                      int64_t repeats) {
  check(repeats >= 1, "ablation needs at least one repeat");
  std::vector<AblationRow> rows;
  for (Ablation ab : {Ablation::baseline, Ablation::with_mom,
                      Ablation::with_cfb, Ablation::full}) {
    FullConfig cfg = base;
    apply_ablation(cfg.model, ab);

    AblationRow row;
    row.ab = ab;
    row.config_text = serialize_config(cfg);
    row.params = param_count(cfg.model);
    row.flops = analyze(cfg.model).total_flops();

    for (int64_t r = 0; r < repeats; ++r) {
      cfg.train.seed = base.train.seed + (uint64_t)r;
      row.seeds.push_back(cfg.train.seed);
      TrainResult res = train(cfg, data.train, data.val, "");
      check(!res.aborted, strfmt("ablation %s seed %llu aborted: %s",
                                 ablation_name(ab),
                                 (unsigned long long)cfg.train.seed,
                                 res.abort_reason.c_str()));

      // Score the best-epoch weights on the shifted test split.
      Rng init(1);
      NetworkT<float> net(cfg.model, init);
      AdamW opt;
      NormStats norm;
      restore(res.best, net, opt, norm);
      Dataset te = data.test;
      normalize(te, norm);
      Metrics m = evaluate(net, te, cfg.train.batch);
      row.acc_runs.push_back(m.accuracy());
      row.f1_runs.push_back(m.macro_f1());
    }
    row.test_acc = median(row.acc_runs);
    row.test_f1 = median(row.f1_runs);

    Rng init(1);
    NetworkT<float> net(cfg.model, init);
    row.latency_us = measure_latency(net).p50_us;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "ablation,repeats,first_seed,test_acc,test_macro_f1,params,flops,"
      "latency_p50_us\n";
  for (const auto& r : rows)
    out += strfmt("%s,%zu,%llu,%.17g,%.17g,%lld,%lld,%.1f\n",
                  ablation_name(r.ab), r.seeds.size(),
                  (unsigned long long)(r.seeds.empty() ? 0 : r.seeds[0]),
                  r.test_acc, r.test_f1, (long long)r.params,
                  (long long)r.flops, r.latency_us);
  return out;
}

}  // namespace whar
