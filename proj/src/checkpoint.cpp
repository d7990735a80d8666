#include "whar/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace whar {

namespace {

constexpr char kMagic[4] = {'W', 'H', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((char)((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back((char)((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<uint32_t>(v));
}

void put_floats(std::string& out, const std::vector<float>& v) {
  for (float x : v) put_f32(out, x);
}

struct Reader {
  const unsigned char* p;
  size_t left;
  const std::string& origin;

  void need(size_t n, const char* what) {
    check(left >= n, strfmt("%s: truncated while reading %s (need %zu "
                            "bytes, %zu left)",
                            origin.c_str(), what, n, left));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = (uint32_t)p[0] | ((uint32_t)p[1] << 8) |
                 ((uint32_t)p[2] << 16) | ((uint32_t)p[3] << 24);
    p += 4;
    left -= 4;
    return v;
  }
  uint64_t u64(const char* what) {
    uint64_t lo = u32(what), hi = u32(what);
    return lo | (hi << 32);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(const char* what) {
    uint32_t n = u32(what);
    need(n, what);
    std::string s((const char*)p, n);
    p += n;
    left -= n;
    return s;
  }
  std::vector<float> floats(size_t n, const char* what) {
    std::vector<float> v(n);
    for (auto& x : v) x = f32(what);
    return v;
  }
};

void put_blob(std::string& out, const std::string& name,
              const std::vector<int64_t>& shape,
              const std::vector<float>& data) {
  put_u32(out, (uint32_t)name.size());
  out += name;
  put_u32(out, (uint32_t)shape.size());
  for (int64_t d : shape) put_u64(out, (uint64_t)d);
  put_floats(out, data);
}

std::vector<float> tensor_copy(const TensorT<float>& t) {
  return std::vector<float>(t.data(), t.data() + t.numel());
}

std::vector<int64_t> shape_copy(const TensorT<float>& t) {
  return std::vector<int64_t>(t.shape().begin(), t.shape().end());
}

int64_t numel_of(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

}  // namespace

FullConfig Checkpoint::config() const {
  return parse_config_text(cfg_text, "checkpoint");
}

Checkpoint snapshot(const FullConfig& cfg, NetworkT<float>& net,
                    const AdamW& opt, const NormStats& norm, int64_t epoch,
                    int64_t best_epoch, double best_metric) {
  NamedTensors<float> params, bufs;
  net.collect(params, bufs);
  check(opt.m.size() == params.items.size(),
        "snapshot: optimizer not attached to this network");

  Checkpoint ck;
  ck.cfg_text = serialize_config(cfg);
  ck.epoch = epoch;
  ck.best_epoch = best_epoch;
  ck.best_metric = best_metric;
  ck.opt_steps = opt.steps;
  for (size_t i = 0; i < params.items.size(); ++i) {
    const auto& [name, t] = params.items[i];
    ck.params.emplace_back(name, tensor_copy(t));
    ck.param_shapes.push_back(shape_copy(t));
    ck.opt_m.push_back(opt.m[i]);
    ck.opt_v.push_back(opt.v[i]);
  }
  for (const auto& [name, t] : bufs.items) {
    ck.bufs.emplace_back(name, tensor_copy(t));
    ck.buf_shapes.push_back(shape_copy(t));
  }
  ck.norm = norm;
  return ck;
}

void restore(const Checkpoint& ck, NetworkT<float>& net, AdamW& opt,
             NormStats& norm) {
  NamedTensors<float> params, bufs;
  net.collect(params, bufs);
  check(ck.params.size() == params.items.size(),
        strfmt("checkpoint has %zu parameter blobs, network has %zu",
               ck.params.size(), params.items.size()));
  check(ck.bufs.size() == bufs.items.size(),
        strfmt("checkpoint has %zu buffers, network has %zu",
               ck.bufs.size(), bufs.items.size()));

  auto write_through = [](const std::string& name,
                          const std::vector<int64_t>& shape,
                          const std::vector<float>& data,
                          NamedTensors<float>& reg) {
    TensorT<float>* t = reg.find(name);
    check(t != nullptr, strfmt("checkpoint tensor %s has no counterpart in "
                               "this network",
                               name.c_str()));
    check(shape_copy(*t) == shape,
          strfmt("checkpoint tensor %s shaped for a different config",
                 name.c_str()));
    std::memcpy(t->data(), data.data(), data.size() * sizeof(float));
  };

  for (size_t i = 0; i < ck.params.size(); ++i)
    write_through(ck.params[i].first, ck.param_shapes[i],
                  ck.params[i].second, params);
  for (size_t i = 0; i < ck.bufs.size(); ++i)
    write_through(ck.bufs[i].first, ck.buf_shapes[i], ck.bufs[i].second,
                  bufs);

  opt.attach(params);
  opt.steps = ck.opt_steps;
  for (size_t i = 0; i < ck.params.size(); ++i) {
    check(opt.m[i].size() == ck.opt_m[i].size(),
          strfmt("optimizer state for %s sized for a different config",
                 ck.params[i].first.c_str()));
    opt.m[i] = ck.opt_m[i];
    opt.v[i] = ck.opt_v[i];
  }
  norm = ck.norm;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, (uint32_t)ck.cfg_text.size());
  out += ck.cfg_text;
  put_u64(out, (uint64_t)ck.epoch);
  put_u64(out, (uint64_t)ck.best_epoch);
  put_u64(out, std::bit_cast<uint64_t>(ck.best_metric));
  put_u64(out, (uint64_t)ck.opt_steps);

  put_u32(out, (uint32_t)ck.params.size());
  for (size_t i = 0; i < ck.params.size(); ++i) {
    put_blob(out, ck.params[i].first, ck.param_shapes[i],
             ck.params[i].second);
    put_floats(out, ck.opt_m[i]);
    put_floats(out, ck.opt_v[i]);
  }
  put_u32(out, (uint32_t)ck.bufs.size());
  for (size_t i = 0; i < ck.bufs.size(); ++i)
    put_blob(out, ck.bufs[i].first, ck.buf_shapes[i], ck.bufs[i].second);

  put_u32(out, (uint32_t)ck.norm.sensors);
  put_u32(out, (uint32_t)ck.norm.variables);
  put_floats(out, ck.norm.lo);
  put_floats(out, ck.norm.hi);
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes,
                            const std::string& origin) {
  Reader r{(const unsigned char*)bytes.data(), bytes.size(), origin};
  r.need(4, "magic");
  check(std::memcmp(r.p, kMagic, 4) == 0,
        strfmt("%s: bad magic at offset 0, expected \"WHCK\"",
               origin.c_str()));
  r.p += 4;
  r.left -= 4;
  uint32_t version = r.u32("version");
  check(version == kVersion,
        strfmt("%s: unsupported version %u, expected %u", origin.c_str(),
               version, kVersion));

  Checkpoint ck;
  ck.cfg_text = r.str("config text");
  ck.epoch = (int64_t)r.u64("epoch");
  ck.best_epoch = (int64_t)r.u64("best epoch");
  ck.best_metric = std::bit_cast<double>(r.u64("best metric"));
  ck.opt_steps = (int64_t)r.u64("optimizer steps");

  uint32_t np = r.u32("parameter count");
  for (uint32_t i = 0; i < np; ++i) {
    std::string name = r.str("parameter name");
    uint32_t nd = r.u32("parameter rank");
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) d = (int64_t)r.u64("parameter dim");
    size_t n = (size_t)numel_of(shape);
    ck.params.emplace_back(name, r.floats(n, name.c_str()));
    ck.param_shapes.push_back(shape);
    ck.opt_m.push_back(r.floats(n, "optimizer m"));
    ck.opt_v.push_back(r.floats(n, "optimizer v"));
  }
  uint32_t nb = r.u32("buffer count");
  for (uint32_t i = 0; i < nb; ++i) {
    std::string name = r.str("buffer name");
    uint32_t nd = r.u32("buffer rank");
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) d = (int64_t)r.u64("buffer dim");
    ck.bufs.emplace_back(name,
                         r.floats((size_t)numel_of(shape), name.c_str()));
    ck.buf_shapes.push_back(shape);
  }

  ck.norm.sensors = r.u32("stats sensors");
  ck.norm.variables = r.u32("stats variables");
  size_t ch = (size_t)(ck.norm.sensors * ck.norm.variables);
  ck.norm.lo = r.floats(ch, "stats lo");
  ck.norm.hi = r.floats(ch, "stats hi");
  check(r.left == 0,
        strfmt("%s: %zu trailing bytes after checkpoint payload",
               origin.c_str(), r.left));
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string bytes = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), strfmt("cannot open %s for writing", path.c_str()));
  f.write(bytes.data(), (std::streamsize)bytes.size());
  check(f.good(), strfmt("short write to %s", path.c_str()));
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), strfmt("cannot open %s", path.c_str()));
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path);
}

}  // namespace whar
