#pragma once

#include "dgf/simd.hpp"

namespace dgf::simd::detail {

#if defined(DGF_HAVE_AVX2_KERNELS)
const Kernels& avx2_table();
#endif

}  // namespace dgf::simd::detail
