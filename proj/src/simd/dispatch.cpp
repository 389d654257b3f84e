#include <atomic>

#include "simd/kernels_impl.hpp"

namespace dgf::simd {

const Kernels* avx2_kernels() {
#if defined(DGF_HAVE_AVX2_KERNELS)
  return &detail::avx2_table();
#else
  return nullptr;
#endif
}

bool cpu_supports_avx2() {
#if defined(DGF_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

namespace {

const Kernels* best_available() {
  if (cpu_supports_avx2() && avx2_kernels() != nullptr) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const Kernels*>& selection() {
  static std::atomic<const Kernels*> current{best_available()};
  return current;
}

}  // namespace

const Kernels& active() { return *selection().load(std::memory_order_acquire); }

bool set_active(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      selection().store(&scalar_kernels(), std::memory_order_release);
      return true;
    case Isa::kAvx2:
      if (!cpu_supports_avx2() || avx2_kernels() == nullptr) return false;
      selection().store(avx2_kernels(), std::memory_order_release);
      return true;
  }
  return false;
}

}  // namespace dgf::simd
