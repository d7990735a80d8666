#include "whar/config.hpp"

#include <stdexcept>

namespace whar {

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::baseline: return "baseline";
    case Ablation::with_mom: return "+mom";
    case Ablation::with_cfb: return "+cfb";
    case Ablation::full: return "full";
  }
  return "?";
}

Ablation ablation_from_name(const std::string& s) {
  if (s == "baseline") return Ablation::baseline;
  if (s == "+mom" || s == "mom") return Ablation::with_mom;
  if (s == "+cfb" || s == "cfb") return Ablation::with_cfb;
  if (s == "full") return Ablation::full;
  throw std::invalid_argument("unknown ablation row: " + s);
}

void apply_ablation(ModelConfig& cfg, Ablation a) {
  const bool mom = (a == Ablation::with_mom || a == Ablation::full);
  const bool cfb = (a == Ablation::with_cfb || a == Ablation::full);
  cfg.mom.pre_local = mom;
  cfg.mom.pre_global = mom;
  cfg.fusion.variable = cfb ? "cfb" : "none";
  cfg.fusion.sensor = cfb ? "cfb" : "attention";
}

Kernel2d parse_kernel2d(const std::string& s) {
  auto x = s.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= s.size())
    throw std::invalid_argument("cfb.kernel must look like '3x3', got '" + s + "'");
  Kernel2d k;
  k.h = std::stoll(s.substr(0, x));
  k.w = std::stoll(s.substr(x + 1));
  if (k.h < 1 || k.w < 1 || k.h % 2 == 0 || k.w % 2 == 0)
    throw std::invalid_argument("cfb.kernel dims must be odd and positive, got '" + s + "'");
  return k;
}

static void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("config: " + msg);
}

void validate(const ModelConfig& cfg) {
  require(cfg.sensors >= 1, "sensors must be >= 1");
  require(cfg.variables >= 1, "variables must be >= 1");
  require(cfg.classes >= 2, "classes must be >= 2");
  require(cfg.mfe.kernel >= 1, "mfe.kernel must be >= 1");
  require(cfg.mfe.stride >= 1, "mfe.stride must be >= 1");
  require(cfg.mfe.channels >= 1, "mfe.channels must be >= 1");
  require(cfg.length >= cfg.mfe.kernel,
          "length (" + std::to_string(cfg.length) + ") must be >= mfe.kernel (" +
              std::to_string(cfg.mfe.kernel) + ")");
  require(cfg.embed_steps() >= 1, "embedding produces an empty sequence");

  require(cfg.mom.p >= 0.0f && cfg.mom.p <= 1.0f, "mom.p must be in [0,1]");
  require(cfg.mom.alpha > 0.0f, "mom.alpha must be > 0");
  require(cfg.mom.axis == "temporal" || cfg.mom.axis == "channel",
          "mom.axis must be 'temporal' or 'channel', got '" + cfg.mom.axis + "'");

  require(cfg.ltfe.kernel >= 1 && cfg.ltfe.kernel % 2 == 1,
          "ltfe.kernel must be odd, got " + std::to_string(cfg.ltfe.kernel));
  auto act_ok = [](const std::string& a) { return a == "gelu" || a == "silu"; };
  require(act_ok(cfg.ltfe.activation),
          "ltfe.activation must be 'gelu' or 'silu', got '" + cfg.ltfe.activation + "'");
  require(act_ok(cfg.ccf.activation),
          "ccf.activation must be 'gelu' or 'silu', got '" + cfg.ccf.activation + "'");

  require(cfg.cfb.r >= 1, "cfb.r must be >= 1");
  require(cfg.cfb.k >= 1, "cfb.k must be >= 1");
  parse_kernel2d(cfg.cfb.kernel);
  require(cfg.mfe.channels >= cfg.cfb.r,
          "cfb.r (" + std::to_string(cfg.cfb.r) + ") exceeds fused channel count (" +
              std::to_string(cfg.mfe.channels) + "); squeeze would have zero channels");

  require(cfg.gta.state_size >= 1 && cfg.gta.state_size <= 64,
          "gta.state_size must be in [1,64]");
  require(cfg.gta.conv_width >= 1, "gta.conv_width must be >= 1");

  require(cfg.csi.d_k >= 1, "csi.d_k must be >= 1");
  require(cfg.fusion.variable == "cfb" || cfg.fusion.variable == "none",
          "fusion.variable must be 'cfb' or 'none', got '" + cfg.fusion.variable + "'");
  require(cfg.fusion.sensor == "cfb" || cfg.fusion.sensor == "attention",
          "fusion.sensor must be 'cfb' or 'attention', got '" + cfg.fusion.sensor + "'");
}

void validate(const TrainConfig& cfg) {
  require(cfg.lr >= 0.0f, "train.lr must be >= 0");
  require(cfg.weight_decay >= 0.0f, "train.weight_decay must be >= 0");
  require(cfg.batch >= 1, "train.batch must be >= 1");
  require(cfg.max_epochs >= 1, "train.max_epochs must be >= 1");
  require(cfg.patience >= 1, "train.patience must be >= 1");
  require(cfg.patience < cfg.max_epochs,
          "train.patience must be below train.max_epochs");
}

}  // namespace whar
