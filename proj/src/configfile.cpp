#include "whar/configfile.hpp"

#include <cstdlib>
#include <fstream>
#include <vector>

namespace whar {

namespace {

struct Field {
  const char* section;
  const char* key;
  enum Kind { I64, U64, F32, F64, BOOL, STR } kind;
  void* p;
};

std::vector<Field> field_table(FullConfig& c) {
  auto& m = c.model;
  auto& t = c.train;
  auto& g = c.gen;
  return {
      {"model", "sensors", Field::I64, &m.sensors},
      {"model", "variables", Field::I64, &m.variables},
      {"model", "length", Field::I64, &m.length},
      {"model", "classes", Field::I64, &m.classes},
      {"model", "mfe.kernel", Field::I64, &m.mfe.kernel},
      {"model", "mfe.stride", Field::I64, &m.mfe.stride},
      {"model", "mfe.channels", Field::I64, &m.mfe.channels},
      {"model", "mfe.shared", Field::BOOL, &m.mfe.shared},
      {"model", "mom.p", Field::F32, &m.mom.p},
      {"model", "mom.alpha", Field::F32, &m.mom.alpha},
      {"model", "mom.axis", Field::STR, &m.mom.axis},
      {"model", "mom.pre_local", Field::BOOL, &m.mom.pre_local},
      {"model", "mom.pre_global", Field::BOOL, &m.mom.pre_global},
      {"model", "ltfe.kernel", Field::I64, &m.ltfe.kernel},
      {"model", "ltfe.activation", Field::STR, &m.ltfe.activation},
      {"model", "ccf.activation", Field::STR, &m.ccf.activation},
      {"model", "ccf.mix_sensors", Field::BOOL, &m.ccf.mix_sensors},
      {"model", "cfb.r", Field::I64, &m.cfb.r},
      {"model", "cfb.k", Field::I64, &m.cfb.k},
      {"model", "cfb.kernel", Field::STR, &m.cfb.kernel},
      {"model", "gta.state_size", Field::I64, &m.gta.state_size},
      {"model", "gta.conv_width", Field::I64, &m.gta.conv_width},
      {"model", "csi.d_k", Field::I64, &m.csi.d_k},
      {"model", "csi.scaled", Field::BOOL, &m.csi.scaled},
      {"model", "fusion.variable", Field::STR, &m.fusion.variable},
      {"model", "fusion.sensor", Field::STR, &m.fusion.sensor},

      {"train", "lr", Field::F32, &t.lr},
      {"train", "weight_decay", Field::F32, &t.weight_decay},
      {"train", "batch", Field::I64, &t.batch},
      {"train", "max_epochs", Field::I64, &t.max_epochs},
      {"train", "patience", Field::I64, &t.patience},
      {"train", "seed", Field::U64, &t.seed},

      {"generate", "classes", Field::I64, &g.classes},
      {"generate", "sensors", Field::I64, &g.sensors},
      {"generate", "variables", Field::I64, &g.variables},
      {"generate", "length", Field::I64, &g.length},
      {"generate", "train_per_class", Field::I64, &g.train_per_class},
      {"generate", "val_per_class", Field::I64, &g.val_per_class},
      {"generate", "test_per_class", Field::I64, &g.test_per_class},
      {"generate", "styles", Field::I64, &g.styles},
      {"generate", "noise", Field::F64, &g.noise},
      {"generate", "jitter", Field::F64, &g.jitter},
      {"generate", "test_amp", Field::F64, &g.test_amp},
      {"generate", "test_offset", Field::F64, &g.test_offset},
      {"generate", "shifted_test", Field::BOOL, &g.shifted_test},
      {"generate", "seed", Field::U64, &g.seed},
  };
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void assign(const Field& f, const std::string& value,
            const std::string& origin, int line) {
  const char* s = value.c_str();
  char* end = nullptr;
  auto fail = [&](const char* what) {
    throw Error(strfmt("%s:%d: %s \"%s\" for key %s", origin.c_str(), line,
                       what, value.c_str(), f.key));
  };
  if (value.empty()) fail("empty value");
  switch (f.kind) {
    case Field::I64:
      *(int64_t*)f.p = std::strtoll(s, &end, 10);
      if (*end) fail("bad integer");
      break;
    case Field::U64:
      if (value[0] == '-') fail("bad unsigned integer");
      *(uint64_t*)f.p = std::strtoull(s, &end, 10);
      if (*end) fail("bad unsigned integer");
      break;
    case Field::F32:
      *(float*)f.p = std::strtof(s, &end);
      if (*end) fail("bad number");
      break;
    case Field::F64:
      *(double*)f.p = std::strtod(s, &end);
      if (*end) fail("bad number");
      break;
    case Field::BOOL:
      if (value == "true")
        *(bool*)f.p = true;
      else if (value == "false")
        *(bool*)f.p = false;
      else
        fail("bad boolean (want true or false)");
      break;
    case Field::STR:
      *(std::string*)f.p = value;
      break;
  }
}

}  // namespace

FullConfig parse_config_text(const std::string& text,
                             const std::string& origin) {
  FullConfig cfg;
  auto fields = field_table(cfg);

  std::string section;
  int line = 0;
  size_t at = 0;
  while (at <= text.size()) {
    size_t nl = text.find('\n', at);
    std::string raw = text.substr(
        at, nl == std::string::npos ? std::string::npos : nl - at);
    at = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line;

    size_t hash = raw.find('#');
    if (hash != std::string::npos) raw = raw.substr(0, hash);
    std::string s = trim(raw);
    if (s.empty()) continue;

    if (s.front() == '[') {
      if (s.back() != ']')
        throw Error(strfmt("%s:%d: unterminated section header",
                           origin.c_str(), line));
      section = trim(s.substr(1, s.size() - 2));
      bool known = false;
      for (const auto& f : fields) known |= section == f.section;
      if (!known)
        throw Error(strfmt("%s:%d: unknown section [%s]", origin.c_str(),
                           line, section.c_str()));
      continue;
    }

    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw Error(strfmt("%s:%d: expected key = value", origin.c_str(),
                         line));
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (section.empty())
      throw Error(strfmt("%s:%d: key %s appears before any [section]",
                         origin.c_str(), line, key.c_str()));

    const Field* hit = nullptr;
    for (const auto& f : fields)
      if (section == f.section && key == f.key) hit = &f;
    if (!hit)
      throw Error(strfmt("%s:%d: unknown key %s in [%s]", origin.c_str(),
                         line, key.c_str(), section.c_str()));
    assign(*hit, value, origin, line);
  }

  try {
    validate(cfg.model);
    validate(cfg.train);
  } catch (const std::exception& e) {
    throw Error(strfmt("%s: %s", origin.c_str(), e.what()));
  }
  return cfg;
}

FullConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), strfmt("cannot open %s", path.c_str()));
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

std::string serialize_config(const FullConfig& cfg) {
  auto fields = field_table(const_cast<FullConfig&>(cfg));
  std::string out;
  const char* section = "";
  for (const auto& f : fields) {
    if (std::string(section) != f.section) {
      if (*section) out += "\n";
      section = f.section;
      out += strfmt("[%s]\n", section);
    }
    switch (f.kind) {
      case Field::I64:
        out += strfmt("%s = %lld\n", f.key, (long long)*(int64_t*)f.p);
        break;
      case Field::U64:
        out += strfmt("%s = %llu\n", f.key,
                      (unsigned long long)*(uint64_t*)f.p);
        break;
      case Field::F32:
        out += strfmt("%s = %.9g\n", f.key, (double)*(float*)f.p);
        break;
      case Field::F64:
        out += strfmt("%s = %.17g\n", f.key, *(double*)f.p);
        break;
      case Field::BOOL:
        out += strfmt("%s = %s\n", f.key, *(bool*)f.p ? "true" : "false");
        break;
      case Field::STR:
        out += strfmt("%s = %s\n", f.key, ((std::string*)f.p)->c_str());
        break;
    }
  }
  return out;
}

}  // namespace whar
