#pragma once

// The two linear operators the guided filter is assembled from: the windowed
// mean over border-clamped square windows, and bilinear resampling. Both come
// with their exact adjoints, which the backward pass applies to gradients.

#include <vector>

#include "dgf/tensor.hpp"

namespace dgf {

/// Prefix sums over a (height+1) x (width+1) x channels grid;
/// at(y, x, c) is the sum of t over rows [0, y) and columns [0, x).
class SummedAreaTable {
 public:
  explicit SummedAreaTable(const Tensor& t);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }

  double at(int y, int x, int c) const { return sums_[offset(y, x) + c]; }
  const double* row(int y) const { return sums_.data() + offset(y, 0); }

  /// Sum over rows [y0, y1) and columns [x0, x1).
  double rect_sum(int y0, int x0, int y1, int x1, int c) const;

 private:
  std::size_t offset(int y, int x) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_ + 1) +
            static_cast<std::size_t>(x)) *
           static_cast<std::size_t>(channels_);
  }

  int height_;
  int width_;
  int channels_;
  std::vector<double> sums_;
};

/// Sum over the window |y'-y| <= r, |x'-x| <= r clipped to the image.
/// Cost is independent of r.
Tensor box_sum(const Tensor& t, int r);

/// Same contract as box_sum by direct O(r^2) summation per pixel.
Tensor naive_box_sum(const Tensor& t, int r);

/// Number of in-bounds pixels in each clipped window, replicated over channels.
Tensor window_counts(Shape shape, int r);

/// Mean over the clipped window: box_sum(t, r) / window_counts.
Tensor mean_filter(const Tensor& t, int r);

/// Transpose of mean_filter: box_sum(g / window_counts, r).
Tensor mean_filter_adjoint(const Tensor& g, int r);

/// Bilinear resampling with half-pixel centres. Destination index d maps to
/// source coordinate (d + 0.5) * in / out - 0.5, clamped to [0, in - 1].
/// The same convention serves for up- and downsampling.
Tensor bilinear_resize(const Tensor& t, int out_h, int out_w);

/// Transpose of bilinear_resize(., g.height(), g.width()) from in_h x in_w.
Tensor bilinear_resize_adjoint(const Tensor& g, int in_h, int in_w);

}  // namespace dgf
