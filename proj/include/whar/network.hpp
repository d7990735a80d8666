#pragma once

// Full network assembly. Stages, with shapes:
//   input (B, N, M, L)
//   embed          -> (B, N, M, D, T)    per-variable strided filters
//   morph site 1   on (B, N*M*D, T)
//   local temporal on (B*N, M*D, T)      depthwise, same length
//   channel fusion on (B, N*M*D, T)      grouped + per-variable pointwise
//   variable stage on (B*N, D, M, T)     optional fusion block
//   pool variables -> (B, N*D, T)
//   morph site 2   on (B, N*D, T)
//   scan block     on (B, N*D, T)
//   sensor stage   fusion block on (B, D, N, T) or attention on (B, N, D*T)
//   head           -> (B, classes)

#include <memory>
#include <string>

#include "whar/cfb.hpp"
#include "whar/config.hpp"
#include "whar/csi.hpp"
#include "whar/gta.hpp"
#include "whar/layers.hpp"

namespace whar {

template <class T>
struct HeadT {
  TensorT<T> weight, bias;

  HeadT(int64_t features, int64_t classes, Rng& rng) {
    weight = init::fan_in_uniform<T>(rng, {classes, features}, features);
    bias = init::zeros<T>({classes});
  }

  TensorT<T> forward(const TensorT<T>& x) const {
    return ops::linear(x, weight, bias);
  }

  void collect(const std::string& p, NamedTensors<T>& params, NamedTensors<T>&) {
    params.add(p + ".weight", weight);
    params.add(p + ".bias", bias);
  }
};

// Per-call forward context. Training mode enables batch-stat normalization
// and moment morphing; the rng streams drive the two morph sites.
struct ForwardCtx {
  bool training = false;
  Rng* morph1 = nullptr;
  Rng* morph2 = nullptr;
};

template <class T>
struct NetworkT {
  ModelConfig cfg;
  MfeT<T> embed;
  MomT<T> morph;  // shared coefficients; sites draw from separate streams
  LtfeT<T> local;
  CcfT<T> fuse_ch;
  std::unique_ptr<CfbT<T>> fuse_var;     // fusion.variable == "cfb"
  MambaT<T> scan;
  std::unique_ptr<CfbT<T>> fuse_sen;     // fusion.sensor == "cfb"
  std::unique_ptr<CsiT<T>> attend;       // fusion.sensor == "attention"
  HeadT<T> head;

  NetworkT(const ModelConfig& c, Rng& rng)
      : cfg((validate(c), c)),
        embed(c, rng),
        morph(c),
        local(c, rng),
        fuse_ch(c, rng),
        scan(c.model_width(), c.gta.state_size, c.gta.conv_width, rng),
        head(c.sensors * c.mfe.channels * c.embed_steps(), c.classes, rng) {
    auto k2 = parse_kernel2d(c.cfb.kernel);
    if (c.fusion.variable == "cfb")
      fuse_var = std::make_unique<CfbT<T>>(c.mfe.channels, c.cfb.r, c.cfb.k, k2, rng);
    if (c.fusion.sensor == "cfb")
      fuse_sen = std::make_unique<CfbT<T>>(c.mfe.channels, c.cfb.r, c.cfb.k, k2, rng);
    else
      attend = std::make_unique<CsiT<T>>(c.mfe.channels * c.embed_steps(),
                                         c.csi.d_k, c.csi.scaled, rng);
  }

  TensorT<T> forward(const TensorT<T>& x, const ForwardCtx& ctx) {
    const int64_t N = cfg.sensors, M = cfg.variables, D = cfg.mfe.channels;
    check(x.ndim() == 4 && x.dim(1) == N && x.dim(2) == M && x.dim(3) == cfg.length,
          strfmt("network: expected (B,%lld,%lld,%lld), got %s", (long long)N,
                 (long long)M, (long long)cfg.length, shape_str(x.shape()).c_str()));
    const int64_t B = x.dim(0);

    auto h5 = embed.forward(x);  // (B, N, M, D, T)
    const int64_t Tn = h5.shape().back();

    auto h = ops::reshape(h5, {B, N * M * D, Tn});
    if (cfg.mom.pre_local && ctx.training)
      h = morph.forward(h, true, ctx.morph1);

    h = local.forward(ops::reshape(h, {B * N, M * D, Tn}));
    h = fuse_ch.forward(ops::reshape(h, {B, N * M * D, Tn}));

    // regroup each sensor's channels into (d, m) blocks for the variable stage
    auto v = ops::permute(ops::reshape(h, {B, N, M, D, Tn}), {0, 1, 3, 2, 4});
    auto vb = ops::reshape(v, {B * N, D, M, Tn});
    if (fuse_var) vb = fuse_var->forward(vb, ctx.training);

    auto g = gap_forward(ops::reshape(vb, {B, N, D * M, Tn}), M);  // (B, N*D, T)
    if (cfg.mom.pre_global && ctx.training)
      g = morph.forward(g, true, ctx.morph2);

    auto s = scan.forward(g);  // (B, N*D, T)

    TensorT<T> flat;
    if (fuse_sen) {
      auto t4 = ops::permute(ops::reshape(s, {B, N, D, Tn}), {0, 2, 1, 3});
      auto f = fuse_sen->forward(t4, ctx.training);  // (B, D, N, T)
      flat = ops::reshape(ops::permute(f, {0, 2, 1, 3}), {B, N * D * Tn});
    } else {
      auto tok = attend->forward(ops::reshape(s, {B, N, D * Tn}));
      flat = ops::reshape(tok, {B, N * D * Tn});
    }
    return head.forward(flat);  // (B, classes)
  }

  void collect(NamedTensors<T>& params, NamedTensors<T>& bufs) {
    embed.collect("embed", params, bufs);
    local.collect("local", params, bufs);
    fuse_ch.collect("fuse_ch", params, bufs);
    if (fuse_var) fuse_var->collect("fuse_var", params, bufs);
    scan.collect("scan", params, bufs);
    if (fuse_sen) fuse_sen->collect("fuse_sen", params, bufs);
    if (attend) attend->collect("attend", params, bufs);
    head.collect("head", params, bufs);
  }

  int64_t parameter_count() {
    NamedTensors<T> p, b;
    collect(p, b);
    return p.total_elements();
  }
};

using Network = NetworkT<float>;

}  // namespace whar
