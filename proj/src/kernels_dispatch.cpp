#include <cstdlib>
#include <cstring>

#include "whar/base.hpp"
#include "whar/kernels.hpp"

namespace whar::kern {

#if defined(__x86_64__) || defined(__i386__)
extern const KernelTable<float> kAvx2Table;  // kernels_avx2.cpp
#endif
#if defined(__aarch64__) && defined(__ARM_NEON)
extern const KernelTable<float> kNeonTable;  // kernels_neon.cpp
#endif

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "?";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__) && defined(__ARM_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {

struct Active {
  Backend backend;
  const KernelTable<float>* tab;
};

Active resolve(Backend b) {
  switch (b) {
#if defined(__x86_64__) || defined(__i386__)
    case Backend::avx2: return {b, &kAvx2Table};
#endif
#if defined(__aarch64__) && defined(__ARM_NEON)
    case Backend::neon: return {b, &kNeonTable};
#endif
    default: return {Backend::scalar, &kScalarTable<float>};
  }
}

Active pick_default() {
  if (const char* env = std::getenv("WHAR_BACKEND")) {
    for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
      if (std::strcmp(env, backend_name(b)) != 0) continue;
      if (!backend_available(b))
        fail(strfmt("WHAR_BACKEND=%s requested but not available", env));
      return resolve(b);
    }
    fail(strfmt("WHAR_BACKEND=%s is not a known backend", env));
  }
  if (backend_available(Backend::avx2)) return resolve(Backend::avx2);
  if (backend_available(Backend::neon)) return resolve(Backend::neon);
  return resolve(Backend::scalar);
}

Active& active() {
  static Active a = pick_default();
  return a;
}

}  // namespace

Backend active_backend() { return active().backend; }

void set_backend(Backend b) {
  if (!backend_available(b))
    fail(strfmt("backend %s is not available on this machine",
                backend_name(b)));
  active() = resolve(b);
}

template <>
const KernelTable<float>& table<float>() {
  return *active().tab;
}

}  // namespace whar::kern
