#include "whar/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "whar/adamw.hpp"
#include "whar/ops.hpp"
#include "whar/tape.hpp"

namespace whar {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), strfmt("cannot open %s for writing", path.c_str()));
  f.write(text.data(), (std::streamsize)text.size());
  check(f.good(), strfmt("short write to %s", path.c_str()));
}

}  // namespace

void check_dataset_fits(const Dataset& ds, const ModelConfig& m,
                        const char* which) {
  check(ds.sensors == m.sensors && ds.variables == m.variables &&
            ds.length == m.length,
        strfmt("%s dataset is (%lld, %lld, %lld) per sample, model wants "
               "(%lld, %lld, %lld)",
               which, (long long)ds.sensors, (long long)ds.variables,
               (long long)ds.length, (long long)m.sensors,
               (long long)m.variables, (long long)m.length));
  check(ds.classes == m.classes,
        strfmt("%s dataset has %lld classes, model has %lld", which,
               (long long)ds.classes, (long long)m.classes));
}

namespace {

std::string first_diff(const std::string& a, const std::string& b) {
  size_t la = 0, lb = 0;
  int line = 1;
  while (la < a.size() || lb < b.size()) {
    size_t ea = a.find('\n', la), eb = b.find('\n', lb);
    std::string ra = a.substr(la, ea == std::string::npos ? std::string::npos
                                                          : ea - la);
    std::string rb = b.substr(lb, eb == std::string::npos ? std::string::npos
                                                          : eb - lb);
    if (ra != rb)
      return strfmt("line %d: run has \"%s\", checkpoint has \"%s\"", line,
                    ra.c_str(), rb.c_str());
    if (ea == std::string::npos || eb == std::string::npos) break;
    la = ea + 1;
    lb = eb + 1;
    ++line;
  }
  return "";
}

}  // namespace

std::string epoch_csv(const std::vector<EpochRow>& log) {
  std::string out = "epoch,train_loss,val_acc,val_macro_f1,seconds\n";
  for (const auto& r : log)
    out += strfmt("%lld,%.17g,%.17g,%.17g,%.3f\n", (long long)r.epoch,
                  r.train_loss, r.val_acc, r.val_f1, r.seconds);
  return out;
}

std::vector<int> predict(NetworkT<float>& net, const Dataset& normalized,
                         int64_t batch) {
  std::vector<int> preds;
  preds.reserve((size_t)normalized.samples);
  for (const auto& idx : epoch_batches(normalized.samples, batch)) {
    Batch b = make_batch(normalized, idx);
    TensorT<float> logits = net.forward(b.x, {});
    int64_t C = logits.shape().back();
    for (int64_t i = 0; i < (int64_t)idx.size(); ++i) {
      const float* row = logits.data() + i * C;
      int best = 0;
      for (int64_t c = 1; c < C; ++c)
        if (row[c] > row[best]) best = (int)c;
      preds.push_back(best);
    }
  }
  return preds;
}

Metrics evaluate(NetworkT<float>& net, const Dataset& normalized,
                 int64_t batch) {
  return compute_metrics(predict(net, normalized, batch), normalized.labels,
                         normalized.classes);
}

TrainResult train(const FullConfig& cfg, const Dataset& raw_train,
                  const Dataset& raw_val, const std::string& out_dir,
                  const Checkpoint* resume) {
  validate(cfg.model);
  validate(cfg.train);
  check(raw_train.samples >= 1, "training split is empty");
  check(raw_val.samples >= 1, "validation split is empty");
  check_dataset_fits(raw_train, cfg.model, "train");
  check_dataset_fits(raw_val, cfg.model, "val");

  const uint64_t seed = cfg.train.seed;
  Rng init(derive_seed(seed, stream_tag("init")));
  NetworkT<float> net(cfg.model, init);
  NamedTensors<float> params, bufs;
  net.collect(params, bufs);

  AdamW opt;
  opt.lr = cfg.train.lr;
  opt.weight_decay = cfg.train.weight_decay;
  opt.attach(params);

  NormStats norm = compute_stats(raw_train);
  TrainResult res;
  res.best_f1 = -1;

  if (resume) {
    std::string want = serialize_config(cfg);
    if (want != resume->cfg_text)
      throw Error("resume config does not match checkpoint: " +
                  first_diff(want, resume->cfg_text));
    restore(*resume, net, opt, norm);
    res.epochs_run = resume->epoch;
    res.best_epoch = resume->best_epoch;
    res.best_f1 = resume->best_metric;
    // res.best stays empty until validation improves past the resumed run;
    // the caller's best.whck from the interrupted run is still the best.
  }

  Dataset tr = raw_train, va = raw_val;
  normalize(tr, norm);
  normalize(va, norm);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/config.txt", serialize_config(cfg));
  }

  auto abort_run = [&](const std::string& why) {
    res.aborted = true;
    res.abort_reason = why;
  };

  for (int64_t e = res.epochs_run + 1; e <= cfg.train.max_epochs; ++e) {
    auto t0 = std::chrono::steady_clock::now();
    Rng shuffle(derive_seed(seed, stream_tag("shuffle"), (uint64_t)e));
    Rng morph1(derive_seed(seed, stream_tag("morph1"), (uint64_t)e));
    Rng morph2(derive_seed(seed, stream_tag("morph2"), (uint64_t)e));

    double loss_sum = 0;
    for (const auto& idx : epoch_batches(tr.samples, cfg.train.batch,
                                         &shuffle)) {
      Batch b = make_batch(tr, idx);
      AdamW::zero_grads(params);
      double batch_loss;
      {
        TapeT<float> tape;
        ForwardCtx ctx;
        ctx.training = true;
        ctx.morph1 = &morph1;
        ctx.morph2 = &morph2;
        TensorT<float> logits = net.forward(b.x, ctx);
        TensorT<float> loss = ops::cross_entropy(logits, b.labels);
        batch_loss = (double)loss.item();
        if (!std::isfinite(batch_loss)) {
          abort_run(strfmt("loss became %g at epoch %lld", batch_loss,
                           (long long)e));
          break;
        }
        tape.backward(loss);
      }
      loss_sum += batch_loss * (double)idx.size();
      try {
        opt.step(params);
      } catch (const Error& err) {
        abort_run(err.what());
        break;
      }
    }
    if (res.aborted) break;

    Metrics m = evaluate(net, va, cfg.train.batch);
    double seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    res.log.push_back({e, loss_sum / (double)tr.samples, m.accuracy(),
                       m.macro_f1(), seconds});
    res.epochs_run = e;

    bool improved = m.macro_f1() > res.best_f1;
    if (improved) {
      res.best_f1 = m.macro_f1();
      res.best_epoch = e;
      res.best = snapshot(cfg, net, opt, norm, e, e, res.best_f1);
    }
    if (!out_dir.empty()) {
      write_text(out_dir + "/epochs.csv", epoch_csv(res.log));
      write_checkpoint(out_dir + "/last.whck",
                       snapshot(cfg, net, opt, norm, e, res.best_epoch,
                                res.best_f1));
      if (improved) write_checkpoint(out_dir + "/best.whck", res.best);
    }
    if (e - res.best_epoch >= cfg.train.patience) break;
  }
  return res;
}

}  // namespace whar
