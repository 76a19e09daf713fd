#include "gpc/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "simd_internal.hpp"

namespace gpc::simd {

namespace {

constexpr KernelTable kScalar{Backend::Scalar, detail::dot_scalar, detail::dot4x2_scalar, detail::sqdist_scalar, detail::axpy_scalar,
                              detail::exp_scalar};

#if defined(GPC_HAVE_AVX2)
constexpr KernelTable kAvx2{Backend::Avx2, detail::dot_avx2, detail::dot4x2_avx2, detail::sqdist_avx2, detail::axpy_avx2,
                            detail::exp_avx2};
#endif

#if defined(GPC_HAVE_NEON)
constexpr KernelTable kNeon{Backend::Neon, detail::dot_neon, detail::dot4x2_neon, detail::sqdist_neon, detail::axpy_neon,
                            detail::exp_neon};
#endif

const KernelTable* table_for(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return &kScalar;
    case Backend::Avx2:
      return avx2_table();
    case Backend::Neon:
      return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() noexcept {
  if (const char* env = std::getenv("GPC_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && avx2_table()) return avx2_table();
    if (want == "neon" && neon_table()) return neon_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &kScalar;
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> current{initial_table()};
  return current;
}

}  // namespace

std::string_view to_string(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(GPC_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() noexcept {
#if defined(GPC_HAVE_NEON)
  return &kNeon;  // Advanced SIMD is mandatory on AArch64.
#else
  return nullptr;
#endif
}

const KernelTable& active() noexcept { return *slot().load(std::memory_order_relaxed); }

Backend active_backend() noexcept { return active().backend; }

bool set_backend(Backend b) noexcept {
  const KernelTable* t = table_for(b);
  if (!t) return false;
  slot().store(t, std::memory_order_relaxed);
  return true;
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::Scalar};
  if (avx2_table()) out.push_back(Backend::Avx2);
  if (neon_table()) out.push_back(Backend::Neon);
  return out;
}

}  // namespace gpc::simd
