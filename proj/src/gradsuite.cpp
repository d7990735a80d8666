#include "whar/gradsuite.hpp"

#include "whar/cfb.hpp"
#include "whar/csi.hpp"
#include "whar/gta.hpp"
#include "whar/layers.hpp"
#include "whar/network.hpp"

namespace whar {

namespace {

using Vec = std::vector<TensorT<float>>;

TensorT<float> rnd(Rng& rng, Shape s, float lo, float hi, bool grad = true) {
  auto t = TensorT<float>::zeros(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = (float)rng.uniform(lo, hi);
  t.set_requires_grad(grad);
  return t;
}

int64_t d(Rng& rng, int64_t lo, int64_t hi) {
  return lo + (int64_t)rng.uniform_int((uint64_t)(hi - lo + 1));
}

}  // namespace

std::vector<GradCheck> gradsuite() {
  std::vector<GradCheck> cs;

  cs.push_back(make_gradcheck(
      "add.broadcast",
      [](Rng& rng) -> Vec {
        int64_t a = d(rng, 1, 4), b = d(rng, 1, 4), c = d(rng, 1, 5);
        return {rnd(rng, {a, b, c}, -2, 2), rnd(rng, {b, 1}, -2, 2)};
      },
      [](const auto& xs) { return ops::add(xs[0], xs[1]); }));

  cs.push_back(make_gradcheck(
      "sub.broadcast",
      [](Rng& rng) -> Vec {
        int64_t a = d(rng, 1, 4), c = d(rng, 1, 5);
        return {rnd(rng, {a, 1, c}, -2, 2), rnd(rng, {a, d(rng, 1, 3), c}, -2, 2)};
      },
      [](const auto& xs) { return ops::sub(xs[0], xs[1]); }));

  cs.push_back(make_gradcheck(
      "mul.broadcast",
      [](Rng& rng) -> Vec {
        int64_t a = d(rng, 1, 4), b = d(rng, 1, 4);
        return {rnd(rng, {a, b, d(rng, 1, 5)}, -2, 2), rnd(rng, {1}, -2, 2)};
      },
      [](const auto& xs) { return ops::mul(xs[0], xs[1]); }));

  cs.push_back(make_gradcheck(
      "gelu",
      [](Rng& rng) -> Vec { return {rnd(rng, {d(rng, 1, 40)}, -4, 4)}; },
      [](const auto& xs) { return ops::gelu(xs[0]); }));

  cs.push_back(make_gradcheck(
      "silu",
      [](Rng& rng) -> Vec { return {rnd(rng, {d(rng, 1, 40)}, -4, 4)}; },
      [](const auto& xs) { return ops::silu(xs[0]); }));

  cs.push_back(make_gradcheck(
      "softplus",
      [](Rng& rng) -> Vec { return {rnd(rng, {d(rng, 1, 40)}, -4, 4)}; },
      [](const auto& xs) { return ops::softplus(xs[0]); }));

  cs.push_back(make_gradcheck(
      "exp",
      [](Rng& rng) -> Vec { return {rnd(rng, {d(rng, 1, 30)}, -3, 3)}; },
      [](const auto& xs) { return ops::exp(xs[0]); }));

  cs.push_back(make_gradcheck(
      "sqrt",
      [](Rng& rng) -> Vec { return {rnd(rng, {d(rng, 1, 30)}, 0.2f, 4)}; },
      [](const auto& xs) { return ops::sqrt(xs[0]); }));

  cs.push_back(make_gradcheck(
      "reciprocal",
      [](Rng& rng) -> Vec { return {rnd(rng, {d(rng, 1, 30)}, 0.3f, 4)}; },
      [](const auto& xs) { return ops::reciprocal(xs[0]); }));

  cs.push_back(make_gradcheck(
      "reshape.permute",
      [](Rng& rng) -> Vec {
        int64_t a = d(rng, 1, 3), b = d(rng, 1, 4), c = d(rng, 1, 5);
        return {rnd(rng, {a, b, c}, -2, 2)};
      },
      [](const auto& xs) {
        const auto& x = xs[0];
        auto flat = ops::reshape(x, {x.dim(0) * x.dim(1), x.dim(2)});
        return ops::permute(flat, {1, 0});
      }));

  cs.push_back(make_gradcheck(
      "concat",
      [](Rng& rng) -> Vec {
        int64_t a = d(rng, 1, 3), c = d(rng, 1, 4);
        return {rnd(rng, {a, d(rng, 1, 3), c}, -2, 2),
                rnd(rng, {a, d(rng, 1, 3), c}, -2, 2)};
      },
      [](const auto& xs) {
        using TT = std::decay_t<decltype(xs[0])>;
        return ops::concat(std::vector<TT>{xs[0], xs[1]}, 1);
      }));

  cs.push_back(make_gradcheck(
      "mean_var",
      [](Rng& rng) -> Vec {
        return {rnd(rng, {d(rng, 1, 3), d(rng, 2, 5), d(rng, 2, 6)}, -2, 2)};
      },
      [](const auto& xs) {
        auto [m, v] = ops::mean_var(xs[0], 2);
        using TT = std::decay_t<decltype(m)>;
        return ops::concat(
            std::vector<TT>{ops::reshape(m, {m.numel()}),
                            ops::reshape(v, {v.numel()})},
            0);
      }));

  cs.push_back(make_gradcheck(
      "reduce_mean",
      [](Rng& rng) -> Vec {
        return {rnd(rng, {d(rng, 1, 3), d(rng, 2, 5), d(rng, 1, 6)}, -2, 2)};
      },
      [](const auto& xs) { return ops::reduce_mean(xs[0], 1); }));

  cs.push_back(make_gradcheck(
      "softmax",
      [](Rng& rng) -> Vec {
        return {rnd(rng, {d(rng, 1, 5), d(rng, 2, 8)}, -4, 4)};
      },
      [](const auto& xs) { return ops::softmax(xs[0]); }));

  cs.push_back(make_gradcheck(
      "cross_entropy",
      [](Rng& rng) -> Vec {
        return {rnd(rng, {d(rng, 1, 5), d(rng, 2, 7)}, -3, 3)};
      },
      [](const auto& xs) {
        std::vector<int> labels((size_t)xs[0].dim(0));
        for (size_t b = 0; b < labels.size(); ++b)
          labels[b] = (int)(b % (size_t)xs[0].dim(1));
        return ops::cross_entropy(xs[0], labels);
      }));

  cs.push_back(make_gradcheck(
      "linear",
      [](Rng& rng) -> Vec {
        int64_t In = d(rng, 1, 6), Out = d(rng, 1, 5);
        return {rnd(rng, {d(rng, 1, 4), In}, -2, 2),
                rnd(rng, {Out, In}, -1, 1), rnd(rng, {Out}, -1, 1)};
      },
      [](const auto& xs) { return ops::linear(xs[0], xs[1], xs[2]); }));

  cs.push_back(make_gradcheck(
      "linear.nobias",
      [](Rng& rng) -> Vec {
        int64_t In = d(rng, 1, 6), Out = d(rng, 1, 5);
        return {rnd(rng, {d(rng, 1, 4), In}, -2, 2),
                rnd(rng, {Out, In}, -1, 1)};
      },
      [](const auto& xs) {
        using TT = std::decay_t<decltype(xs[0])>;
        return ops::linear(xs[0], xs[1], TT());
      }));

  cs.push_back(make_gradcheck(
      "bmm",
      [](Rng& rng) -> Vec {
        int64_t B = d(rng, 1, 3), M = d(rng, 1, 4), K = d(rng, 1, 5),
                N = d(rng, 1, 4);
        return {rnd(rng, {B, M, K}, -2, 2), rnd(rng, {B, K, N}, -2, 2)};
      },
      [](const auto& xs) { return ops::bmm(xs[0], xs[1], false); }));

  cs.push_back(make_gradcheck(
      "bmm.transposed",
      [](Rng& rng) -> Vec {
        int64_t B = d(rng, 1, 3), M = d(rng, 1, 4), K = d(rng, 1, 5),
                N = d(rng, 1, 4);
        return {rnd(rng, {B, M, K}, -2, 2), rnd(rng, {B, N, K}, -2, 2)};
      },
      [](const auto& xs) { return ops::bmm(xs[0], xs[1], true); }));

  struct ConvCfg {
    const char* name;
    int stride, pad_l, pad_r;
    bool grouped, depthwise;
  };
  for (ConvCfg cc : {ConvCfg{"conv1d.basic", 1, 0, 0, false, false},
                     ConvCfg{"conv1d.strided", 2, 1, 2, false, false},
                     ConvCfg{"conv1d.grouped", 1, 1, 1, true, false},
                     ConvCfg{"conv1d.causal_depthwise", 1, 3, 0, false, true}}) {
    cs.push_back(make_gradcheck(
        cc.name,
        [cc](Rng& rng) -> Vec {
          int64_t groups = cc.grouped ? d(rng, 2, 3) : 1;
          int64_t Cg = d(rng, 1, 3), Cog = d(rng, 1, 3);
          if (cc.depthwise) {
            groups = d(rng, 2, 4);
            Cg = 1;
            Cog = 1;
          }
          int64_t K = cc.depthwise ? 4 : d(rng, 1, 4);
          int64_t L = K + d(rng, 0, 8);
          return {rnd(rng, {d(rng, 1, 3), groups * Cg, L}, -2, 2),
                  rnd(rng, {groups * Cog, Cg, K}, -1, 1),
                  rnd(rng, {groups * Cog}, -1, 1)};
        },
        [cc](const auto& xs) {
          int64_t groups = xs[0].dim(1) / xs[1].dim(1);
          int pad_l = cc.depthwise ? (int)xs[1].dim(2) - 1 : cc.pad_l;
          return ops::conv1d(xs[0], xs[1], xs[2], cc.stride, pad_l, cc.pad_r,
                             (int)groups);
        }));
  }

  cs.push_back(make_gradcheck(
      "dwconv2d",
      [](Rng& rng) -> Vec {
        int64_t C = d(rng, 1, 4);
        int64_t kh = 1 + 2 * d(rng, 0, 1), kw = 1 + 2 * d(rng, 0, 1);
        return {rnd(rng, {d(rng, 1, 2), C, d(rng, 1, 5), d(rng, 1, 6)}, -2, 2),
                rnd(rng, {C, kh, kw}, -1, 1), rnd(rng, {C}, -1, 1)};
      },
      [](const auto& xs) {
        return ops::dwconv2d_same(xs[0], xs[1], xs[2]);
      }));

  cs.push_back(make_gradcheck(
      "batchnorm.train",
      [](Rng& rng) -> Vec {
        int64_t C = d(rng, 1, 4);
        return {rnd(rng, {d(rng, 2, 4), C, d(rng, 2, 6)}, -2, 2),
                rnd(rng, {C}, 0.5f, 1.5f), rnd(rng, {C}, -1, 1)};
      },
      [](const auto& xs) {
        using T = std::decay_t<decltype(xs[0].data()[0])>;
        auto rm = TensorT<T>::zeros({xs[1].numel()});
        auto rv = TensorT<T>::full({xs[1].numel()}, T(1));
        return ops::batchnorm(xs[0], xs[1], xs[2], rm, rv, true);
      }));

  cs.push_back(make_gradcheck(
      "batchnorm.eval",
      [](Rng& rng) -> Vec {
        int64_t C = d(rng, 1, 4);
        // running stats travel as fixed inputs so both precisions see the
        // same values
        return {rnd(rng, {d(rng, 1, 4), C, d(rng, 2, 6)}, -2, 2),
                rnd(rng, {C}, 0.5f, 1.5f), rnd(rng, {C}, -1, 1),
                rnd(rng, {C}, -0.5f, 0.5f, false),
                rnd(rng, {C}, 0.5f, 2.f, false)};
      },
      [](const auto& xs) {
        using T = std::decay_t<decltype(xs[0].data()[0])>;
        auto rm = TensorT<T>::zeros(xs[3].shape());
        auto rv = TensorT<T>::zeros(xs[4].shape());
        std::copy(xs[3].data(), xs[3].data() + xs[3].numel(), rm.data());
        std::copy(xs[4].data(), xs[4].data() + xs[4].numel(), rv.data());
        return ops::batchnorm(xs[0], xs[1], xs[2], rm, rv, false);
      }));

  cs.push_back(make_gradcheck(
      "ssm_scan",
      [](Rng& rng) -> Vec {
        int64_t B = d(rng, 1, 2), E = d(rng, 1, 4), S = d(rng, 1, 8),
                T = d(rng, 1, 7);
        return {rnd(rng, {B, E, T}, -2, 2),
                rnd(rng, {B, E, T}, 0.01f, 0.3f),
                rnd(rng, {B, S, T}, -1, 1),
                rnd(rng, {B, S, T}, -1, 1),
                rnd(rng, {E, S}, -2.f, -0.1f),
                rnd(rng, {E}, -1, 1)};
      },
      [](const auto& xs) {
        return ops::ssm_scan(xs[0], xs[1], xs[2], xs[3], xs[4], xs[5]);
      }));

  // Composite layers. Geometry is drawn in the generator and carried to the
  // functor through a shared config; parameter tensors ride along as inputs
  // so they get finite-differenced too.

  {
    auto geo = std::make_shared<ModelConfig>();
    cs.push_back(make_gradcheck(
        "layer.embed",
        [geo](Rng& rng) -> Vec {
          geo->sensors = d(rng, 1, 2);
          geo->variables = d(rng, 1, 2);
          geo->mfe.channels = d(rng, 1, 3);
          geo->mfe.kernel = d(rng, 1, 3);
          geo->mfe.stride = d(rng, 1, 2);
          geo->length = geo->mfe.kernel + geo->mfe.stride * d(rng, 1, 3);
          geo->mfe.shared = d(rng, 0, 1) == 1;
          Rng ir(7);
          MfeT<float> probe(*geo, ir);
          return {rnd(rng, {d(rng, 1, 2), geo->sensors, geo->variables,
                            geo->length}, -2, 2),
                  rnd(rng, probe.weight.shape(), -1, 1),
                  rnd(rng, probe.bias.shape(), -0.5f, 0.5f)};
        },
        [geo](const auto& xs) {
          using T = std::decay_t<decltype(xs[0].data()[0])>;
          Rng ir(7);
          MfeT<T> layer(*geo, ir);
          layer.weight = xs[1];
          layer.bias = xs[2];
          return layer.forward(xs[0]);
        }));
  }

  {
    auto geo = std::make_shared<ModelConfig>();
    cs.push_back(make_gradcheck(
        "layer.local",
        [geo](Rng& rng) -> Vec {
          geo->variables = d(rng, 1, 2);
          geo->mfe.channels = d(rng, 1, 3);
          geo->ltfe.kernel = 2 * d(rng, 0, 2) + 1;
          geo->ltfe.activation = d(rng, 0, 1) ? "gelu" : "silu";
          int64_t md = geo->variables * geo->mfe.channels;
          Rng ir(7);
          LtfeT<float> probe(*geo, ir);
          return {rnd(rng, {d(rng, 1, 3), md, d(rng, 2, 6)}, -2, 2),
                  rnd(rng, probe.weight.shape(), -1, 1),
                  rnd(rng, probe.bias.shape(), -0.5f, 0.5f)};
        },
        [geo](const auto& xs) {
          using T = std::decay_t<decltype(xs[0].data()[0])>;
          Rng ir(7);
          LtfeT<T> layer(*geo, ir);
          layer.weight = xs[1];
          layer.bias = xs[2];
          return layer.forward(xs[0]);
        }));
  }

  {
    auto geo = std::make_shared<ModelConfig>();
    cs.push_back(make_gradcheck(
        "layer.fuse_ch",
        [geo](Rng& rng) -> Vec {
          geo->sensors = d(rng, 1, 2);
          geo->variables = d(rng, 1, 2);
          geo->mfe.channels = d(rng, 1, 3);
          geo->ccf.mix_sensors = d(rng, 0, 1) == 1;
          geo->ccf.activation = d(rng, 0, 1) ? "gelu" : "silu";
          int64_t ch = geo->sensors * geo->variables * geo->mfe.channels;
          Rng ir(7);
          CcfT<float> probe(*geo, ir);
          return {rnd(rng, {d(rng, 1, 2), ch, d(rng, 2, 5)}, -2, 2),
                  rnd(rng, probe.wa.shape(), -1, 1),
                  rnd(rng, probe.ba.shape(), -0.5f, 0.5f),
                  rnd(rng, probe.wb.shape(), -1, 1),
                  rnd(rng, probe.bb.shape(), -0.5f, 0.5f)};
        },
        [geo](const auto& xs) {
          using T = std::decay_t<decltype(xs[0].data()[0])>;
          Rng ir(7);
          CcfT<T> layer(*geo, ir);
          layer.wa = xs[1];
          layer.ba = xs[2];
          layer.wb = xs[3];
          layer.bb = xs[4];
          return layer.forward(xs[0]);
        }));
  }

  {
    struct CfbGeo {
      int64_t C, r, K;
      Kernel2d k;
    };
    auto geo = std::make_shared<CfbGeo>();
    cs.push_back(make_gradcheck(
        "layer.fuse_block",
        [geo](Rng& rng) -> Vec {
          geo->r = d(rng, 1, 2);
          geo->C = geo->r * d(rng, 1, 3);
          geo->K = d(rng, 1, 2);
          geo->k = d(rng, 0, 1) ? Kernel2d{3, 3} : Kernel2d{1, 3};
          Rng ir(7);
          CfbT<float> probe(geo->C, geo->r, geo->K, geo->k, ir);
          Vec v{rnd(rng, {d(rng, 2, 3), geo->C, d(rng, 2, 3), d(rng, 2, 4)},
                    -2, 2),
                rnd(rng, probe.w_sq.shape(), -1, 1),
                rnd(rng, probe.b_sq.shape(), -0.5f, 0.5f),
                rnd(rng, probe.g1.shape(), 0.5f, 1.5f),
                rnd(rng, probe.be1.shape(), -0.5f, 0.5f)};
          for (int64_t k = 0; k < geo->K; ++k) {
            v.push_back(rnd(rng, probe.w_step[(size_t)k].shape(), -1, 1));
            v.push_back(rnd(rng, probe.b_step[(size_t)k].shape(), -0.5f, 0.5f));
          }
          v.push_back(rnd(rng, probe.w_fu.shape(), -1, 1));
          v.push_back(rnd(rng, probe.b_fu.shape(), -0.5f, 0.5f));
          v.push_back(rnd(rng, probe.g2.shape(), 0.5f, 1.5f));
          v.push_back(rnd(rng, probe.be2.shape(), -0.5f, 0.5f));
          return v;
        },
        [geo](const auto& xs) {
          using T = std::decay_t<decltype(xs[0].data()[0])>;
          Rng ir(7);
          CfbT<T> layer(geo->C, geo->r, geo->K, geo->k, ir);
          layer.w_sq = xs[1];
          layer.b_sq = xs[2];
          layer.g1 = xs[3];
          layer.be1 = xs[4];
          size_t i = 5;
          for (int64_t k = 0; k < geo->K; ++k) {
            layer.w_step[(size_t)k] = xs[i++];
            layer.b_step[(size_t)k] = xs[i++];
          }
          layer.w_fu = xs[i++];
          layer.b_fu = xs[i++];
          layer.g2 = xs[i++];
          layer.be2 = xs[i++];
          return layer.forward(xs[0], true);
        }));
  }

  {
    struct ScanGeo {
      int64_t E, S, W;
    };
    auto geo = std::make_shared<ScanGeo>();
    cs.push_back(make_gradcheck(
        "layer.scanblock",
        [geo](Rng& rng) -> Vec {
          geo->E = d(rng, 2, 3);
          geo->S = d(rng, 1, 3);
          geo->W = d(rng, 1, 3);
          Rng ir(7);
          MambaT<float> p(geo->E, geo->S, geo->W, ir);
          Vec v{rnd(rng, {d(rng, 1, 2), geo->E, d(rng, 2, 5)}, -1, 1)};
          for (auto* t :
               {&p.w_in1, &p.b_in1, &p.w_in2, &p.b_in2, &p.conv_a, &p.cb_a,
                &p.conv_b, &p.cb_b, &p.w_dt, &p.w_B, &p.w_C, &p.D_skip,
                &p.w_gate, &p.b_gate, &p.w_out, &p.b_out})
            v.push_back(rnd(rng, t->shape(), -0.7f, 0.7f));
          v.push_back(rnd(rng, p.b_dt.shape(), -2.f, -0.5f));
          v.push_back(rnd(rng, p.A_log.shape(), -1.f, 0.7f));
          return v;
        },
        [geo](const auto& xs) {
          using T = std::decay_t<decltype(xs[0].data()[0])>;
          Rng ir(7);
          MambaT<T> m(geo->E, geo->S, geo->W, ir);
          size_t i = 1;
          for (auto* t :
               {&m.w_in1, &m.b_in1, &m.w_in2, &m.b_in2, &m.conv_a, &m.cb_a,
                &m.conv_b, &m.cb_b, &m.w_dt, &m.w_B, &m.w_C, &m.D_skip,
                &m.w_gate, &m.b_gate, &m.w_out, &m.b_out})
            *t = xs[i++];
          m.b_dt = xs[i++];
          m.A_log = xs[i++];
          return m.forward(xs[0]);
        }));
  }

  {
    struct AttnGeo {
      int64_t Dtok, dk;
      bool scaled;
    };
    auto geo = std::make_shared<AttnGeo>();
    cs.push_back(make_gradcheck(
        "layer.attention",
        [geo](Rng& rng) -> Vec {
          geo->Dtok = d(rng, 2, 5);
          geo->dk = d(rng, 1, 4);
          geo->scaled = d(rng, 0, 1) == 1;
          Rng ir(7);
          CsiT<float> p(geo->Dtok, geo->dk, geo->scaled, ir);
          return {rnd(rng, {d(rng, 1, 2), d(rng, 1, 3), geo->Dtok}, -1, 1),
                  rnd(rng, p.wq.shape(), -1, 1), rnd(rng, p.wk.shape(), -1, 1),
                  rnd(rng, p.wv.shape(), -1, 1), rnd(rng, p.wo.shape(), -1, 1)};
        },
        [geo](const auto& xs) {
          using T = std::decay_t<decltype(xs[0].data()[0])>;
          Rng ir(7);
          CsiT<T> layer(geo->Dtok, geo->dk, geo->scaled, ir);
          layer.wq = xs[1];
          layer.wk = xs[2];
          layer.wv = xs[3];
          layer.wo = xs[4];
          return layer.forward(xs[0]);
        }));
  }

  // Whole-network gradient with respect to the input, eval mode. Parameters
  // stay at their seeded initialization inside the functor; their rounding
  // to float in the 32-bit pass is far below the pass tolerance.
  for (const char* sensor : {"cfb", "attention"}) {
    auto cfg = std::make_shared<ModelConfig>();
    cfg->sensors = 2;
    cfg->variables = 2;
    cfg->length = 9;
    cfg->classes = 3;
    cfg->mfe.kernel = 3;
    cfg->mfe.stride = 2;
    cfg->mfe.channels = 3;
    cfg->cfb.r = 3;
    cfg->cfb.k = 1;
    cfg->gta.state_size = 2;
    cfg->gta.conv_width = 2;
    cfg->csi.d_k = 3;
    cfg->fusion.sensor = sensor;
    cs.push_back(make_gradcheck(
        std::string("network.input.") + sensor,
        [cfg](Rng& rng) -> Vec {
          return {rnd(rng, {d(rng, 1, 2), cfg->sensors, cfg->variables,
                            cfg->length}, -1.5, 1.5)};
        },
        [cfg](const auto& xs) {
          using T = std::decay_t<decltype(xs[0].data()[0])>;
          Rng ir(42);
          NetworkT<T> net(*cfg, ir);
          return net.forward(xs[0], {});
        }));
  }

  return cs;
}

}  // namespace whar
