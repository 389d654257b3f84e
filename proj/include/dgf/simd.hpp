#pragma once

// Data-parallel inner loops behind the tensor and filter code.
//
// Every kernel exists as a portable scalar reference and, on x86-64, an AVX2
// variant. The variants perform the same IEEE operations in the same order per
// output element (no FMA contraction, fixed 4-lane reduction order), so their
// results are bitwise identical and the active table can be switched freely.

#include <cstddef>
#include <string_view>

namespace dgf::simd {

enum class Isa { kScalar, kAvx2 };

struct Kernels {
  Isa isa;
  std::string_view name;

  // out[i] = a[i] op b[i]. out may alias a or b.
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*div)(const double* a, const double* b, double* out, std::size_t n);

  // out[i] = a[i] * s
  void (*scale)(const double* a, double s, double* out, std::size_t n);

  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // Four interleaved partial sums s[i % 4], combined as (s0 + s1) + (s2 + s3).
  double (*dot)(const double* a, const double* b, std::size_t n);

  // Rectangle sum from four summed-area-table rows:
  // out[i] = ((s11[i] - s01[i]) - s10[i]) + s00[i]
  void (*box_diff)(const double* s11, const double* s01, const double* s10,
                   const double* s00, double* out, std::size_t n);

  // Local linear model coefficients from windowed moments:
  //   var = mean_gg - mean_g * mean_g
  //   cov = mean_go - mean_g * mean_o
  //   a   = cov / (var + eps)
  //   b   = mean_o - a * mean_g
  // Returns true if any element has var + eps <= degenerate_rel * mean_gg.
  bool (*linear_coeffs)(const double* mean_g, const double* mean_o,
                        const double* mean_gg, const double* mean_go,
                        double eps, double degenerate_rel, double* var,
                        double* cov, double* a, double* b, std::size_t n);

  // out[i] = a[i] * g[i] + b[i]
  void (*mul_add)(const double* a, const double* g, const double* b,
                  double* out, std::size_t n);
};

const Kernels& scalar_kernels();

// nullptr when the AVX2 variant was not compiled in.
const Kernels* avx2_kernels();

bool cpu_supports_avx2();

// Kernel table used by the library. Defaults to the best variant the CPU
// supports; set_active() exists for equivalence tests and benchmarks.
const Kernels& active();

// Returns false (and leaves the selection unchanged) if isa is unavailable.
bool set_active(Isa isa);

}  // namespace dgf::simd
