#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "lumos/kernels/kernels.hpp"

namespace lumos::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(LUMOS_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(LUMOS_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) {
    throw std::runtime_error("kernel ISA not available: " + std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(LUMOS_HAVE_AVX2)
    case Isa::avx2: return detail::avx2_table();
#endif
#if defined(LUMOS_HAVE_NEON)
    case Isa::neon: return detail::neon_table();
#endif
    default: return detail::scalar_table();
  }
}

namespace {

const KernelTable* select_default() {
  if (const char* forced = std::getenv("LUMOS_KERNELS")) {
    const std::string name(forced);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (name == isa_name(isa)) return &table(isa);
    }
    throw std::runtime_error("LUMOS_KERNELS: unknown ISA '" + name + "'");
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (available(isa)) return &table(isa);
  }
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{select_default()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { slot().store(&table(isa), std::memory_order_release); }

}  // namespace lumos::kernels
