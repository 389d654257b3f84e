#include "dgf/filter_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dgf/error.hpp"
#include "dgf/simd.hpp"

namespace dgf {

SummedAreaTable::SummedAreaTable(const Tensor& t)
    : height_(t.height()),
      width_(t.width()),
      channels_(t.channels()),
      sums_(static_cast<std::size_t>(t.height() + 1) * static_cast<std::size_t>(t.width() + 1) *
                static_cast<std::size_t>(t.channels()),
            0.0) {
  const auto& k = simd::active();
  const std::size_t row_len = static_cast<std::size_t>(width_ + 1) * channels_;
  std::vector<double> prefix(row_len, 0.0);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      const std::size_t dst = static_cast<std::size_t>(x + 1) * channels_;
      const std::size_t src = static_cast<std::size_t>(x) * channels_;
      for (int c = 0; c < channels_; ++c) {
        prefix[dst + c] = prefix[src + c] + t(y, x, c);
      }
    }
    k.add(sums_.data() + offset(y, 0), prefix.data(), sums_.data() + offset(y + 1, 0), row_len);
  }
}

double SummedAreaTable::rect_sum(int y0, int x0, int y1, int x1, int c) const {
  return ((at(y1, x1, c) - at(y0, x1, c)) - at(y1, x0, c)) + at(y0, x0, c);
}

namespace {

void require_radius(int r) {
  if (r < 0) throw InvalidArgument("radius must be >= 0, got " + std::to_string(r));
}

int window_extent(int i, int n, int r) { return std::min(n, i + r + 1) - std::max(0, i - r); }

// Summed-area table rows produced on demand into a ring of `capacity` rows,
// so only the rows a sliding window needs are resident. Each row is built
// exactly as SummedAreaTable builds it.
class SatRowStream {
 public:
  SatRowStream(const Tensor& t, int capacity)
      : t_(t),
        row_len_(static_cast<std::size_t>(t.width() + 1) * t.channels()),
        capacity_(capacity),
        rows_(static_cast<std::size_t>(capacity) * row_len_, 0.0),
        prefix_(row_len_, 0.0) {}

  // Row i of the table; rows older than i - capacity + 1 are gone.
  const double* row(int i) {
    while (built_ <= i) build_next();
    return slot(i);
  }

 private:
  double* slot(int i) { return rows_.data() + static_cast<std::size_t>(i % capacity_) * row_len_; }

  void build_next() {
    const int y = built_ - 1;  // image row feeding table row built_
    const int ch = t_.channels();
    for (int x = 0; x < t_.width(); ++x) {
      const std::size_t dst = static_cast<std::size_t>(x + 1) * ch;
      const std::size_t src = static_cast<std::size_t>(x) * ch;
      for (int c = 0; c < ch; ++c) prefix_[dst + c] = prefix_[src + c] + t_(y, x, c);
    }
    simd::active().add(slot(y), prefix_.data(), slot(built_), row_len_);
    ++built_;
  }

  const Tensor& t_;
  std::size_t row_len_;
  int capacity_;
  std::vector<double> rows_;
  std::vector<double> prefix_;
  int built_ = 1;  // row 0 is all zeros
};

// Window sums of t; with `mean` set each row is divided by its window counts.
Tensor window_reduce(const Tensor& t, int r, bool mean) {
  const int h = t.height();
  const int w = t.width();
  const int ch = t.channels();
  const auto& k = simd::active();

  SatRowStream sat(t, std::min(h, 2 * r + 1) + 1);

  std::vector<double> col_count(static_cast<std::size_t>(w) * ch);
  std::vector<double> row_count(col_count.size());
  for (int x = 0; x < w; ++x) {
    for (int c = 0; c < ch; ++c) col_count[static_cast<std::size_t>(x) * ch + c] = window_extent(x, w, r);
  }
  std::vector<double> out(t.size());

  // Columns whose window is not clipped horizontally form one contiguous run.
  const int interior_lo = r;
  const int interior_hi = w - r - 1;

  for (int y = 0; y < h; ++y) {
    const double* r1 = sat.row(std::min(h, y + r + 1));
    const double* r0 = sat.row(std::max(0, y - r));  // still resident after r1
    double* dst = out.data() + static_cast<std::size_t>(y) * w * ch;

    auto run = [&](int x_begin, int x_end) {
      const int x0 = x_begin - r;
      const int x1 = x_begin + r + 1;
      const std::size_t n = static_cast<std::size_t>(x_end - x_begin) * ch;
      k.box_diff(r1 + static_cast<std::size_t>(x1) * ch, r0 + static_cast<std::size_t>(x1) * ch,
                 r1 + static_cast<std::size_t>(x0) * ch, r0 + static_cast<std::size_t>(x0) * ch,
                 dst + static_cast<std::size_t>(x_begin) * ch, n);
    };
    auto clipped = [&](int x) {
      const std::size_t x0 = static_cast<std::size_t>(std::max(0, x - r)) * ch;
      const std::size_t x1 = static_cast<std::size_t>(std::min(w, x + r + 1)) * ch;
      k.box_diff(r1 + x1, r0 + x1, r1 + x0, r0 + x0, dst + static_cast<std::size_t>(x) * ch,
                 static_cast<std::size_t>(ch));
    };

    if (interior_lo <= interior_hi) {
      for (int x = 0; x < interior_lo; ++x) clipped(x);
      run(interior_lo, interior_hi + 1);
      for (int x = interior_hi + 1; x < w; ++x) clipped(x);
    } else {
      for (int x = 0; x < w; ++x) clipped(x);
    }
    if (mean) {
      const double rows = window_extent(y, h, r);
      for (std::size_t i = 0; i < row_count.size(); ++i) row_count[i] = rows * col_count[i];
      k.div(dst, row_count.data(), dst, row_count.size());
    }
  }
  return Tensor(t.shape(), std::move(out));
}

}  // namespace

Tensor box_sum(const Tensor& t, int r) {
  require_radius(r);
  if (r == 0) return t;
  return window_reduce(t, r, false);
}

Tensor naive_box_sum(const Tensor& t, int r) {
  require_radius(r);
  const int h = t.height();
  const int w = t.width();
  Tensor out = Tensor::zeros(t.shape());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < t.channels(); ++c) {
        double s = 0.0;
        for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
          for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
            s += t(yy, xx, c);
          }
        }
        out(y, x, c) = s;
      }
    }
  }
  return out;
}

Tensor window_counts(Shape shape, int r) {
  require_radius(r);
  std::vector<double> cols(static_cast<std::size_t>(shape.width));
  for (int x = 0; x < shape.width; ++x) cols[x] = window_extent(x, shape.width, r);
  Tensor out = Tensor::zeros(shape);
  for (int y = 0; y < shape.height; ++y) {
    const double rows = window_extent(y, shape.height, r);
    for (int x = 0; x < shape.width; ++x) {
      for (int c = 0; c < shape.channels; ++c) out(y, x, c) = rows * cols[x];
    }
  }
  return out;
}

namespace {

// In-place t /= window_counts, one row at a time.
Tensor divide_by_counts(Tensor t, int r) {
  const int h = t.height();
  const int w = t.width();
  const int ch = t.channels();
  const std::size_t row_len = static_cast<std::size_t>(w) * ch;
  std::vector<double> counts(row_len);
  for (int y = 0; y < h; ++y) {
    const double rows = window_extent(y, h, r);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) counts[static_cast<std::size_t>(x) * ch + c] = rows * window_extent(x, w, r);
    }
    double* row = t.data().data() + static_cast<std::size_t>(y) * row_len;
    simd::active().div(row, counts.data(), row, row_len);
  }
  return t;
}

}  // namespace

Tensor mean_filter(const Tensor& t, int r) {
  require_radius(r);
  if (r == 0) return t;
  return window_reduce(t, r, true);
}

Tensor mean_filter_adjoint(const Tensor& g, int r) {
  require_radius(r);
  if (r == 0) return g;
  return box_sum(divide_by_counts(g, r), r);
}

namespace {

struct Tap {
  int i0;
  int i1;
  double frac;
};

std::vector<Tap> axis_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = std::min(static_cast<int>(std::floor(s)), in - 1);
    taps[d] = Tap{i0, std::min(i0 + 1, in - 1), s - i0};
  }
  return taps;
}

void require_dims(int h, int w, const char* what) {
  if (h < 1 || w < 1) {
    throw InvalidArgument(std::string(what) + ": target dimensions must be >= 1, got " +
                          std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

Tensor bilinear_resize(const Tensor& t, int out_h, int out_w) {
  require_dims(out_h, out_w, "bilinear_resize");
  if (out_h == t.height() && out_w == t.width()) return t;

  const auto ty = axis_taps(t.height(), out_h);
  const auto tx = axis_taps(t.width(), out_w);
  const int ch = t.channels();
  Tensor out = Tensor::zeros(Shape{out_h, out_w, ch});
  for (int y = 0; y < out_h; ++y) {
    const Tap& vy = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const Tap& vx = tx[x];
      for (int c = 0; c < ch; ++c) {
        const double p00 = t(vy.i0, vx.i0, c);
        const double p01 = t(vy.i0, vx.i1, c);
        const double p10 = t(vy.i1, vx.i0, c);
        const double p11 = t(vy.i1, vx.i1, c);
        // Difference form keeps constant inputs exactly constant.
        const double top = p00 + vx.frac * (p01 - p00);
        const double bot = p10 + vx.frac * (p11 - p10);
        out(y, x, c) = top + vy.frac * (bot - top);
      }
    }
  }
  return out;
}

Tensor bilinear_resize_adjoint(const Tensor& g, int in_h, int in_w) {
  require_dims(in_h, in_w, "bilinear_resize_adjoint");
  if (in_h == g.height() && in_w == g.width()) return g;

  const auto ty = axis_taps(in_h, g.height());
  const auto tx = axis_taps(in_w, g.width());
  const int ch = g.channels();
  Tensor out = Tensor::zeros(Shape{in_h, in_w, ch});
  for (int y = 0; y < g.height(); ++y) {
    const Tap& vy = ty[y];
    for (int x = 0; x < g.width(); ++x) {
      const Tap& vx = tx[x];
      // The forward difference form evaluated on unit inputs, rounding
      // included, so the two operators are exact transposes.
      const double ax = 1.0 - vx.frac;
      const double w10 = vy.frac * ax;
      const double w11 = vy.frac * vx.frac;
      const double w00 = ax - w10;
      const double w01 = vx.frac - w11;
      for (int c = 0; c < ch; ++c) {
        const double v = g(y, x, c);
        out(vy.i0, vx.i0, c) += w00 * v;
        out(vy.i0, vx.i1, c) += w01 * v;
        out(vy.i1, vx.i0, c) += w10 * v;
        out(vy.i1, vx.i1, c) += w11 * v;
      }
    }
  }
  return out;
}

}  // namespace dgf
