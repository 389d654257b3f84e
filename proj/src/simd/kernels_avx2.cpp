#include <immintrin.h>

#include "simd/kernels_impl.hpp"

namespace dgf::simd {
namespace {

// Each kernel runs a 4-wide main loop and finishes the tail with the scalar
// expression, so every element sees the same operation sequence as the
// reference implementation.

template <typename VecOp, typename ScalarOp>
inline void binary(const double* a, const double* b, double* out, std::size_t n,
                   VecOp vop, ScalarOp sop) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
         [](double x, double y) { return x + y; });
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
         [](double x, double y) { return x - y; });
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
         [](double x, double y) { return x * y; });
}

void div(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_div_pd(x, y); },
         [](double x, double y) { return x / y; });
}

void scale(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  }
  for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  alignas(32) double s[4];
  _mm256_store_pd(s, acc);
  for (; i < n; ++i) s[i % 4] = s[i % 4] + a[i] * b[i];
  return (s[0] + s[1]) + (s[2] + s[3]);
}

void box_diff(const double* s11, const double* s01, const double* s10,
              const double* s00, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_sub_pd(_mm256_loadu_pd(s11 + i), _mm256_loadu_pd(s01 + i));
    v = _mm256_sub_pd(v, _mm256_loadu_pd(s10 + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(v, _mm256_loadu_pd(s00 + i)));
  }
  for (; i < n; ++i) out[i] = ((s11[i] - s01[i]) - s10[i]) + s00[i];
}

bool linear_coeffs(const double* mean_g, const double* mean_o,
                   const double* mean_gg, const double* mean_go, double eps,
                   double degenerate_rel, double* var, double* cov, double* a,
                   double* b, std::size_t n) {
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vrel = _mm256_set1_pd(degenerate_rel);
  __m256d bad = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(mean_g + i);
    const __m256d o = _mm256_loadu_pd(mean_o + i);
    const __m256d gg = _mm256_loadu_pd(mean_gg + i);
    const __m256d v = _mm256_sub_pd(gg, _mm256_mul_pd(g, g));
    const __m256d c = _mm256_sub_pd(_mm256_loadu_pd(mean_go + i), _mm256_mul_pd(g, o));
    const __m256d denom = _mm256_add_pd(v, veps);
    bad = _mm256_or_pd(bad, _mm256_cmp_pd(denom, _mm256_mul_pd(vrel, gg), _CMP_NGT_UQ));
    const __m256d ai = _mm256_div_pd(c, denom);
    _mm256_storeu_pd(var + i, v);
    _mm256_storeu_pd(cov + i, c);
    _mm256_storeu_pd(a + i, ai);
    _mm256_storeu_pd(b + i, _mm256_sub_pd(o, _mm256_mul_pd(ai, g)));
  }
  bool degenerate = _mm256_movemask_pd(bad) != 0;
  for (; i < n; ++i) {
    const double v = mean_gg[i] - mean_g[i] * mean_g[i];
    const double c = mean_go[i] - mean_g[i] * mean_o[i];
    const double denom = v + eps;
    if (!(denom > degenerate_rel * mean_gg[i])) degenerate = true;
    const double ai = c / denom;
    var[i] = v;
    cov[i] = c;
    a[i] = ai;
    b[i] = mean_o[i] - ai * mean_g[i];
  }
  return degenerate;
}

void mul_add(const double* a, const double* g, const double* b, double* out,
             std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(g + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(prod, _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * g[i] + b[i];
}

constexpr Kernels kAvx2{
    Isa::kAvx2, "avx2", add,      sub,           mul,    div,
    scale,      axpy,   dot,      box_diff,      linear_coeffs,
    mul_add,
};

}  // namespace

namespace detail {
const Kernels& avx2_table() { return kAvx2; }
}  // namespace detail

}  // namespace dgf::simd
