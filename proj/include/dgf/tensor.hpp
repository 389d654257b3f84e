#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dgf {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Dense height x width x channels grid of doubles.
///
/// Storage is row-major with channels interleaved: element (y, x, c) lives at
/// (y * width + x) * channels + c. All dimensions are at least 1 and every
/// element is finite; constructors enforce both.
class Tensor {
 public:
  Tensor(Shape shape, std::vector<double> data);
  Tensor(int height, int width, int channels, std::vector<double> data)
      : Tensor(Shape{height, width, channels}, std::move(data)) {}

  static Tensor filled(int height, int width, int channels, double value);
  static Tensor filled(Shape shape, double value) {
    return filled(shape.height, shape.width, shape.channels, value);
  }
  static Tensor zeros(Shape shape) { return filled(shape, 0.0); }

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape_.width) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(c);
  }

  double operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }
  double& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class BinaryOp { kAdd, kSub, kMul, kDiv };

/// Elementwise a op b. Throws InvalidArgument on shape mismatch and
/// DomainError on division by exact zero or a non-finite result.
Tensor zip(const Tensor& a, const Tensor& b, BinaryOp op);

/// Sum of a[i] * b[i] in the fixed 4-lane order of simd::Kernels::dot.
double dot(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
inline Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator-(const Tensor& a);

Tensor add_scalar(const Tensor& a, double s);

/// a += alpha * x in place.
void axpy(double alpha, const Tensor& x, Tensor& a);

double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace dgf
