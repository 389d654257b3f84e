#include "simd/kernels_impl.hpp"

namespace dgf::simd {
namespace {

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void div(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i) s[i % 4] = s[i % 4] + a[i] * b[i];
  return (s[0] + s[1]) + (s[2] + s[3]);
}

void box_diff(const double* s11, const double* s01, const double* s10,
              const double* s00, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = ((s11[i] - s01[i]) - s10[i]) + s00[i];
}

bool linear_coeffs(const double* mean_g, const double* mean_o,
                   const double* mean_gg, const double* mean_go, double eps,
                   double degenerate_rel, double* var, double* cov, double* a,
                   double* b, std::size_t n) {
  bool degenerate = false;
  for (std::size_t i = 0; i < n; ++i) {
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
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * g[i] + b[i];
}

constexpr Kernels kScalar{
    Isa::kScalar, "scalar", add,      sub,           mul,    div,
    scale,        axpy,     dot,      box_diff,      linear_coeffs,
    mul_add,
};

}  // namespace

const Kernels& scalar_kernels() { return kScalar; }

}  // namespace dgf::simd
