#include <cstdlib>
#include <string_view>

#include "traitgeo/kernels.hpp"

namespace traitgeo::kernels {
namespace {

constexpr KernelTable kScalar{Isa::Scalar, &scalar::dot, &scalar::axpy, &scalar::scale,
                              &scalar::axpby};
constexpr KernelTable kAvx2{Isa::Avx2, &avx2::dot, &avx2::axpy, &avx2::scale, &avx2::axpby};
constexpr KernelTable kNeon{Isa::Neon, &neon::dot, &neon::axpy, &neon::scale, &neon::axpby};

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& choose() {
  if (const char* forced = std::getenv("TRAITGEO_KERNELS")) {
    if (std::string_view(forced) == "scalar") return kScalar;
  }
  if (const KernelTable* t = table_for(Isa::Avx2)) return *t;
  if (const KernelTable* t = table_for(Isa::Neon)) return *t;
  return kScalar;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return &kScalar;
    case Isa::Avx2: return avx2::compiled() && cpu_has_avx2() ? &kAvx2 : nullptr;
    case Isa::Neon: return neon::compiled() ? &kNeon : nullptr;
  }
  return nullptr;
}

const KernelTable& active() {
  static const KernelTable& table = choose();
  return table;
}

}  // namespace traitgeo::kernels
