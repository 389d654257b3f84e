#include "dgf/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "dgf/error.hpp"
#include "dgf/simd.hpp"

namespace dgf {

std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

namespace {

void require_positive_dims(const Shape& s) {
  if (s.height < 1 || s.width < 1 || s.channels < 1) {
    throw InvalidArgument("tensor dimensions must be >= 1, got " + to_string(s));
  }
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + ": non-finite value");
  }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  require_positive_dims(shape_);
  if (data_.size() != shape_.size()) {
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape_));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw InvalidArgument("tensor data must be finite");
  }
}

Tensor Tensor::filled(int height, int width, int channels, double value) {
  const Shape s{height, width, channels};
  require_positive_dims(s);
  return Tensor(s, std::vector<double>(s.size(), value));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + to_string(a.shape()) +
                          " vs " + to_string(b.shape()));
  }
}

Tensor zip(const Tensor& a, const Tensor& b, BinaryOp op) {
  require_same_shape(a, b, "zip");
  const auto& k = simd::active();
  std::vector<double> out(a.size());
  switch (op) {
    case BinaryOp::kAdd:
      k.add(a.data().data(), b.data().data(), out.data(), out.size());
      break;
    case BinaryOp::kSub:
      k.sub(a.data().data(), b.data().data(), out.data(), out.size());
      break;
    case BinaryOp::kMul:
      k.mul(a.data().data(), b.data().data(), out.data(), out.size());
      break;
    case BinaryOp::kDiv:
      if (std::any_of(b.data().begin(), b.data().end(), [](double v) { return v == 0.0; })) {
        throw DomainError("zip: division by zero");
      }
      k.div(a.data().data(), b.data().data(), out.data(), out.size());
      break;
  }
  require_finite(out, "zip");
  return Tensor(a.shape(), std::move(out));
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return simd::active().dot(a.data().data(), b.data().data(), a.size());
}

Tensor operator+(const Tensor& a, const Tensor& b) { return zip(a, b, BinaryOp::kAdd); }
Tensor operator-(const Tensor& a, const Tensor& b) { return zip(a, b, BinaryOp::kSub); }
Tensor operator*(const Tensor& a, const Tensor& b) { return zip(a, b, BinaryOp::kMul); }
Tensor operator/(const Tensor& a, const Tensor& b) { return zip(a, b, BinaryOp::kDiv); }

Tensor operator*(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  simd::active().scale(a.data().data(), s, out.data(), out.size());
  require_finite(out, "scale");
  return Tensor(a.shape(), std::move(out));
}

Tensor operator-(const Tensor& a) { return a * -1.0; }

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& v : out) v += s;
  require_finite(out, "add_scalar");
  return Tensor(a.shape(), std::move(out));
}

void axpy(double alpha, const Tensor& x, Tensor& a) {
  require_same_shape(x, a, "axpy");
  simd::active().axpy(alpha, x.data().data(), a.data().data(), a.size());
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dgf
