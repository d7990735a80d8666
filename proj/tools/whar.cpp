// Command-line workbench: dataset generation, training, evaluation,
// gradient verification, latency benchmarking and the feature ablation.
// Exit codes: 0 success, 1 usage error, 2 check failure, 3 runtime abort.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "whar/ablate.hpp"
#include "whar/analyzer.hpp"
#include "whar/checkpoint.hpp"
#include "whar/gradsuite.hpp"
#include "whar/trainer.hpp"

namespace fs = std::filesystem;
using namespace whar;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), strfmt("cannot open %s for writing", path.c_str()));
  f.write(text.data(), (std::streamsize)text.size());
  check(f.good(), strfmt("short write to %s", path.c_str()));
}

FullConfig load_config(const std::string& path) {
  return path.empty() ? FullConfig{} : parse_config_file(path);
}

// The model's input geometry is a property of the data, not a tunable; keep
// the config file authoritative for everything else but follow the dataset
// here, so generate -> train works without hand-editing dimensions.
void sync_geometry(ModelConfig& m, const Dataset& ds) {
  if (m.sensors != ds.sensors || m.variables != ds.variables ||
      m.length != ds.length || m.classes != ds.classes)
    std::printf("note: model geometry follows the dataset: sensors %lld, "
                "variables %lld, length %lld, classes %lld\n",
                (long long)ds.sensors, (long long)ds.variables,
                (long long)ds.length, (long long)ds.classes);
  m.sensors = ds.sensors;
  m.variables = ds.variables;
  m.length = ds.length;
  m.classes = ds.classes;
}

int cmd_generate(FullConfig cfg, const std::string& out) {
  SynthSplits s = generate_synthetic(cfg.gen);
  fs::create_directories(out);
  write_dataset(out + "/train.whar", s.train);
  write_dataset(out + "/val.whar", s.val);
  write_dataset(out + "/test.whar", s.test);
  write_text(out + "/config.txt", serialize_config(cfg));
  std::printf("wrote %s/{train,val,test}.whar: %lld + %lld + %lld samples, "
              "%lld classes, window (%lld, %lld, %lld)\n",
              out.c_str(), (long long)s.train.samples,
              (long long)s.val.samples, (long long)s.test.samples,
              (long long)s.train.classes, (long long)s.train.sensors,
              (long long)s.train.variables, (long long)s.train.length);
  return 0;
}

int cmd_train(FullConfig cfg, const std::string& data, const std::string& out,
              const std::string& ablation, const std::string& resume_path) {
  Dataset tr = read_dataset(data + "/train.whar");
  Dataset va = read_dataset(data + "/val.whar");
  sync_geometry(cfg.model, tr);
  if (!ablation.empty()) apply_ablation(cfg.model, ablation_from_name(ablation));

  Checkpoint ck;
  const Checkpoint* resume = nullptr;
  if (!resume_path.empty()) {
    ck = read_checkpoint(resume_path);
    resume = &ck;
  }

  TrainResult res = train(cfg, tr, va, out, resume);
  for (const auto& r : res.log)
    std::printf("epoch %3lld  loss %.4f  val acc %.4f  val macro-f1 %.4f  "
                "%.1fs\n",
                (long long)r.epoch, r.train_loss, r.val_acc, r.val_f1,
                r.seconds);
  if (res.aborted) {
    std::fprintf(stderr, "aborted: %s\n", res.abort_reason.c_str());
    return 3;
  }
  std::printf("best epoch %lld, val macro-f1 %.4f; outputs in %s\n",
              (long long)res.best_epoch, res.best_f1, out.c_str());
  return 0;
}

int cmd_eval(const std::string& ck_path, const std::string& data_path,
             const std::string& out) {
  Checkpoint ck = read_checkpoint(ck_path);
  FullConfig cfg = ck.config();
  Rng init(1);
  NetworkT<float> net(cfg.model, init);
  AdamW opt;
  NormStats norm;
  restore(ck, net, opt, norm);

  Dataset ds = read_dataset(data_path);
  check_dataset_fits(ds, cfg.model, "eval");
  normalize(ds, norm);
  Metrics m = evaluate(net, ds, cfg.train.batch);
  std::printf("%s", m.table().c_str());
  std::printf("checkpoint: epoch %lld, best val macro-f1 %.6f\n",
              (long long)ck.epoch, ck.best_metric);
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(out + "/metrics.csv",
               strfmt("dataset,samples,accuracy,macro_f1\n%s,%lld,%.17g,"
                      "%.17g\n",
                      data_path.c_str(), (long long)m.total(), m.accuracy(),
                      m.macro_f1()));
  }
  return 0;
}

int cmd_gradcheck(uint64_t seed, int shapes) {
  int failures = 0;
  for (const auto& c : gradsuite()) {
    GradReport r = run_gradcheck(c, seed, shapes);
    std::printf("%-22s shapes %3d  elems %7d  err32 %.2e  err64 %.2e  %s\n",
                r.name.c_str(), r.shapes, r.elements, r.max_err_f,
                r.max_err_d, r.pass ? "pass" : "FAIL");
    if (!r.pass) {
      ++failures;
      std::fprintf(stderr, "  %s\n", r.detail.c_str());
    }
  }
  std::printf(failures ? "%d checks failed\n" : "all checks passed\n",
              failures);
  return failures ? 2 : 0;
}

int cmd_bench(FullConfig cfg, int64_t warmup, int64_t runs,
              const std::string& out) {
  std::string csv =
      "fusion,params,flops,latency_mean_us,latency_p50_us,latency_p95_us\n";
  for (const char* fusion : {"cfb", "attention"}) {
    cfg.model.fusion.sensor = fusion;
    validate(cfg.model);
    Rng init(1);
    NetworkT<float> net(cfg.model, init);
    LatencyStats s = measure_latency(net, warmup, runs);
    csv += strfmt("%s,%lld,%lld,%.1f,%.1f,%.1f\n", fusion,
                  (long long)param_count(cfg.model),
                  (long long)analyze(cfg.model).total_flops(), s.mean_us,
                  s.p50_us, s.p95_us);
  }
  std::printf("%s", csv.c_str());
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(out + "/bench.csv", csv);
  }
  return 0;
}

int cmd_ablate(FullConfig cfg, const std::string& data,
               const std::string& out, int64_t repeats) {
  SynthSplits s;
  s.train = read_dataset(data + "/train.whar");
  s.val = read_dataset(data + "/val.whar");
  s.test = read_dataset(data + "/test.whar");
  sync_geometry(cfg.model, s.train);

  auto rows = run_ablation(cfg, s, repeats);
  std::string csv = ablation_csv(rows);
  std::printf("%s", csv.c_str());
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(out + "/ablation.csv", csv);
    write_text(out + "/config.txt", serialize_config(cfg));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-sensor activity recognition workbench"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, ablation, resume_path;
  std::string ck_path, data_path;
  uint64_t seed = 0;
  int shapes = 20;
  int64_t warmup = 10, runs = 100, repeats = 3;

  auto* gen = app.add_subcommand("generate", "write synthetic datasets");
  gen->add_option("--config", config_path, "config file");
  gen->add_option("--out", out_dir, "output directory")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "generator seed");

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "config file");
  tr->add_option("--data", data_dir, "directory with train/val .whar files")
      ->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--ablation", ablation,
                 "feature preset: baseline, +mom, +cfb or full");
  tr->add_option("--resume", resume_path, "checkpoint to continue from");
  auto* tr_seed = tr->add_option("--seed", seed, "training seed");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
  ev->add_option("--checkpoint", ck_path, "checkpoint file")->required();
  ev->add_option("--data", data_path, "dataset file")->required();
  ev->add_option("--out", out_dir, "directory for metrics.csv");

  auto* gc = app.add_subcommand("gradcheck",
                                "finite-difference gradient verification");
  gc->add_option("--seed", seed, "suite seed");
  gc->add_option("--shapes", shapes, "random shapes per check")
      ->check(CLI::PositiveNumber);

  auto* be = app.add_subcommand("bench", "single-sample latency and cost");
  be->add_option("--config", config_path, "config file");
  be->add_option("--warmup", warmup, "untimed iterations")
      ->check(CLI::NonNegativeNumber);
  be->add_option("--runs", runs, "timed iterations")
      ->check(CLI::PositiveNumber);
  be->add_option("--out", out_dir, "directory for bench.csv");

  auto* ab = app.add_subcommand("ablate", "four-way feature study");
  ab->add_option("--config", config_path, "config file");
  ab->add_option("--data", data_dir, "directory with train/val/test .whar")
      ->required();
  ab->add_option("--out", out_dir, "output directory");
  ab->add_option("--repeats", repeats, "training runs per row")
      ->check(CLI::PositiveNumber);
  auto* ab_seed = ab->add_option("--seed", seed, "first training seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    FullConfig cfg = load_config(config_path);
    if (gen->parsed()) {
      if (*gen_seed) cfg.gen.seed = seed;
      return cmd_generate(cfg, out_dir);
    }
    if (tr->parsed()) {
      if (*tr_seed) cfg.train.seed = seed;
      return cmd_train(cfg, data_dir, out_dir, ablation, resume_path);
    }
    if (ev->parsed()) return cmd_eval(ck_path, data_path, out_dir);
    if (gc->parsed()) return cmd_gradcheck(seed ? seed : 1, shapes);
    if (be->parsed()) return cmd_bench(cfg, warmup, runs, out_dir);
    if (ab->parsed()) {
      if (*ab_seed) cfg.train.seed = seed;
      return cmd_ablate(cfg, data_dir, out_dir, repeats);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
