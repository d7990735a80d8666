#include "whar/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>

namespace whar {

namespace {

constexpr char kMagic[4] = {'W', 'H', 'A', 'R'};
constexpr uint32_t kVersion = 1;
constexpr size_t kHeaderBytes = 4 + 4 + 5 * 4;

void put_u32(std::string& out, uint32_t v) {
  out.push_back((char)(v & 0xff));
  out.push_back((char)((v >> 8) & 0xff));
  out.push_back((char)((v >> 16) & 0xff));
  out.push_back((char)((v >> 24) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return (uint32_t)p[0] | ((uint32_t)p[1] << 8) | ((uint32_t)p[2] << 16) |
         ((uint32_t)p[3] << 24);
}

}  // namespace

std::string serialize_dataset(const Dataset& ds) {
  check(ds.samples >= 0 && ds.sensors >= 1 && ds.variables >= 1 &&
            ds.length >= 1 && ds.classes >= 1,
        "dataset: invalid dimensions");
  check((int64_t)ds.x.size() == ds.samples * ds.window(),
        strfmt("dataset: payload has %zu floats, dimensions say %lld",
               ds.x.size(), (long long)(ds.samples * ds.window())));
  check((int64_t)ds.labels.size() == ds.samples,
        "dataset: one label per sample required");
  for (int64_t i = 0; i < ds.samples; ++i)
    check(ds.labels[(size_t)i] >= 0 && ds.labels[(size_t)i] < ds.classes,
          strfmt("dataset: label %d of sample %lld outside [0, %lld)",
                 ds.labels[(size_t)i], (long long)i, (long long)ds.classes));

  std::string out;
  out.reserve(kHeaderBytes + ds.x.size() * 4 + ds.labels.size() * 4);
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, (uint32_t)ds.samples);
  put_u32(out, (uint32_t)ds.sensors);
  put_u32(out, (uint32_t)ds.variables);
  put_u32(out, (uint32_t)ds.length);
  put_u32(out, (uint32_t)ds.classes);
  for (float v : ds.x) put_u32(out, std::bit_cast<uint32_t>(v));
  for (int v : ds.labels) put_u32(out, (uint32_t)v);
  return out;
}

Dataset parse_dataset(const std::string& bytes, const std::string& origin) {
  const auto* p = (const unsigned char*)bytes.data();
  check(bytes.size() >= kHeaderBytes,
        strfmt("%s: header needs %zu bytes, file has %zu", origin.c_str(),
               kHeaderBytes, bytes.size()));
  check(std::equal(kMagic, kMagic + 4, bytes.data()),
        strfmt("%s: bad magic at offset 0, expected \"WHAR\"",
               origin.c_str()));
  uint32_t version = get_u32(p + 4);
  check(version == kVersion,
        strfmt("%s: unsupported version %u at offset 4, expected %u",
               origin.c_str(), version, kVersion));

  Dataset ds;
  ds.samples = get_u32(p + 8);
  ds.sensors = get_u32(p + 12);
  ds.variables = get_u32(p + 16);
  ds.length = get_u32(p + 20);
  ds.classes = get_u32(p + 24);
  check(ds.sensors >= 1 && ds.variables >= 1 && ds.length >= 1 &&
            ds.classes >= 1,
        strfmt("%s: degenerate dimensions in header", origin.c_str()));

  int64_t floats = ds.samples * ds.window();
  size_t expect = kHeaderBytes + (size_t)floats * 4 + (size_t)ds.samples * 4;
  check(bytes.size() == expect,
        strfmt("%s: expected %zu bytes total, got %zu", origin.c_str(),
               expect, bytes.size()));

  ds.x.resize((size_t)floats);
  const unsigned char* q = p + kHeaderBytes;
  for (int64_t i = 0; i < floats; ++i, q += 4)
    ds.x[(size_t)i] = std::bit_cast<float>(get_u32(q));
  ds.labels.resize((size_t)ds.samples);
  for (int64_t i = 0; i < ds.samples; ++i, q += 4) {
    uint32_t lab = get_u32(q);
    check(lab < (uint32_t)ds.classes,
          strfmt("%s: label %u of sample %lld outside [0, %lld)",
                 origin.c_str(), lab, (long long)i, (long long)ds.classes));
    ds.labels[(size_t)i] = (int)lab;
  }
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  std::string bytes = serialize_dataset(ds);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), strfmt("cannot open %s for writing", path.c_str()));
  f.write(bytes.data(), (std::streamsize)bytes.size());
  check(f.good(), strfmt("short write to %s", path.c_str()));
}

Dataset read_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), strfmt("cannot open %s", path.c_str()));
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return parse_dataset(bytes, path);
}

NormStats compute_stats(const Dataset& ds) {
  check(ds.samples >= 1, "stats need at least one sample");
  NormStats st;
  st.sensors = ds.sensors;
  st.variables = ds.variables;
  int64_t ch = ds.sensors * ds.variables;
  st.lo.assign((size_t)ch, std::numeric_limits<float>::max());
  st.hi.assign((size_t)ch, std::numeric_limits<float>::lowest());
  for (int64_t i = 0; i < ds.samples; ++i) {
    const float* s = ds.sample(i);
    for (int64_t c = 0; c < ch; ++c)
      for (int64_t t = 0; t < ds.length; ++t) {
        float v = s[c * ds.length + t];
        st.lo[(size_t)c] = std::min(st.lo[(size_t)c], v);
        st.hi[(size_t)c] = std::max(st.hi[(size_t)c], v);
      }
  }
  return st;
}

void normalize(Dataset& ds, const NormStats& st) {
  check(st.sensors == ds.sensors && st.variables == ds.variables,
        "normalization stats shaped for a different dataset");
  int64_t ch = ds.sensors * ds.variables;
  for (int64_t i = 0; i < ds.samples; ++i) {
    float* s = ds.sample(i);
    for (int64_t c = 0; c < ch; ++c) {
      float lo = st.lo[(size_t)c], hi = st.hi[(size_t)c];
      float* row = s + c * ds.length;
      if (hi == lo) {
        std::fill(row, row + ds.length, 0.f);
        continue;
      }
      if (lo == -1.f && hi == 1.f) {
        // Already-normalized channel: the map is the identity, and doing
        // no arithmetic keeps renormalization bitwise idempotent.
        for (int64_t t = 0; t < ds.length; ++t)
          row[t] = std::clamp(row[t], -1.f, 1.f);
        continue;
      }
      // Written so the observed extrema land on the endpoints exactly.
      float span = hi - lo;
      for (int64_t t = 0; t < ds.length; ++t) {
        float v = ((row[t] - lo) - (hi - row[t])) / span;
        row[t] = std::clamp(v, -1.f, 1.f);
      }
    }
  }
}

Batch make_batch(const Dataset& ds, const std::vector<int64_t>& idx) {
  check(!idx.empty(), "empty batch");
  int64_t B = (int64_t)idx.size();
  Batch b{TensorT<float>::zeros({B, ds.sensors, ds.variables, ds.length}),
          {}};
  b.labels.reserve((size_t)B);
  for (int64_t i = 0; i < B; ++i) {
    int64_t s = idx[(size_t)i];
    check(s >= 0 && s < ds.samples, "batch index out of range");
    std::copy(ds.sample(s), ds.sample(s) + ds.window(),
              b.x.data() + i * ds.window());
    b.labels.push_back(ds.labels[(size_t)s]);
  }
  return b;
}

std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int64_t size,
                                                Rng* shuffle) {
  check(n >= 1 && size >= 1, "epoch_batches: need n >= 1 and size >= 1");
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[(size_t)i] = i;
  if (shuffle) {
    auto perm = shuffle->permutation((int)n);
    for (int64_t i = 0; i < n; ++i) order[(size_t)i] = perm[(size_t)i];
  }
  std::vector<std::vector<int64_t>> out;
  for (int64_t at = 0; at < n; at += size) {
    int64_t take = std::min(size, n - at);
    out.emplace_back(order.begin() + at, order.begin() + at + take);
  }
  return out;
}

}  // namespace whar
