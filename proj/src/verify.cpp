#include "dgf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "dgf/error.hpp"
#include "dgf/guidance_net.hpp"

namespace dgf {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-8);
}

double compensated_dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "compensated_dot");
  double sum = 0.0;
  double carry = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double term = a[i] * b[i];
    const double t = sum + term;
    if (std::abs(sum) >= std::abs(term)) {
      carry += (sum - t) + term;
    } else {
      carry += (term - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

Tensor finite_diff(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff: step must be > 0");
  Tensor probe = x;
  Tensor grad = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("finite_diff: non-finite function value at element " + std::to_string(i));
    }
    // Divide by the step actually realized in floating point.
    grad[i] = (up - down) / ((orig + h) - (orig - h));
  }
  return grad;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t{cols, rows, std::vector<double>(entries.size())};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t.entries[c * rows + r] = entries[r * cols + c];
  }
  return t;
}

DenseMatrix dense_operator(const LinearOp& op, Shape in_shape) {
  Tensor basis = Tensor::zeros(in_shape);
  DenseMatrix m;
  m.cols = in_shape.size();
  for (std::size_t j = 0; j < m.cols; ++j) {
    basis[j] = 1.0;
    const Tensor column = op(basis);
    basis[j] = 0.0;
    if (j == 0) {
      m.rows = column.size();
      m.entries.assign(m.rows * m.cols, 0.0);
    }
    for (std::size_t r = 0; r < m.rows; ++r) m.entries[r * m.cols + j] = column[r];
  }
  return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw InvalidArgument("max_abs_diff: matrix shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.entries.size(); ++i) m = std::max(m, std::abs(a.entries[i] - b.entries[i]));
  return m;
}

bool GradcheckReport::passed() const {
  for (const auto& e : entries) {
    if (!e.pass) return false;
  }
  return true;
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

void GradcheckReport::append(const GradcheckReport& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

void GradcheckReport::print(std::ostream& os) const {
  for (const auto& e : entries) {
    os << e.name << ' ' << std::scientific << std::setprecision(3) << e.max_rel_err << ' '
       << e.argmax << ' ' << (e.pass ? "pass" : "fail") << '\n';
  }
  os << std::defaultfloat;
}

namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo, double hi) {
  std::vector<double> v(s.size());
  for (double& x : v) x = lo + (hi - lo) * unit(rng);
  return Tensor(s, std::move(v));
}

Tensor as_tensor(std::span<const double> values) {
  return Tensor(1, 1, static_cast<int>(values.size()), std::vector<double>(values.begin(), values.end()));
}

// Direct transcription of the guided filter in extended precision: windowed
// means by explicit summation, bilinear taps recomputed per pixel.
using Ext = long double;
using ExtVec = std::vector<Ext>;

struct ExtImage {
  int h, w, c;
  const ExtVec& v;
  Ext at(int y, int x, int ch) const { return v[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
};

ExtVec ext_mean(const ExtImage& in, int r) {
  ExtVec out(in.v.size());
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < in.w; ++x) {
      for (int ch = 0; ch < in.c; ++ch) {
        Ext s = 0.0L;
        int n = 0;
        for (int yy = std::max(0, y - r); yy <= std::min(in.h - 1, y + r); ++yy) {
          for (int xx = std::max(0, x - r); xx <= std::min(in.w - 1, x + r); ++xx, ++n) s += in.at(yy, xx, ch);
        }
        out[(static_cast<std::size_t>(y) * in.w + x) * in.c + ch] = s / n;
      }
    }
  }
  return out;
}

ExtVec ext_resize(const ExtImage& in, int oh, int ow) {
  if (oh == in.h && ow == in.w) return in.v;
  auto tap = [](int d, int n_in, int n_out, int& i0, int& i1, Ext& f) {
    Ext s = (d + 0.5L) * n_in / n_out - 0.5L;
    s = std::clamp(s, 0.0L, static_cast<Ext>(n_in - 1));
    i0 = std::min(static_cast<int>(std::floor(s)), n_in - 1);
    i1 = std::min(i0 + 1, n_in - 1);
    f = s - i0;
  };
  ExtVec out(static_cast<std::size_t>(oh) * ow * in.c);
  for (int y = 0; y < oh; ++y) {
    int y0, y1;
    Ext fy;
    tap(y, in.h, oh, y0, y1, fy);
    for (int x = 0; x < ow; ++x) {
      int x0, x1;
      Ext fx;
      tap(x, in.w, ow, x0, x1, fx);
      for (int ch = 0; ch < in.c; ++ch) {
        out[(static_cast<std::size_t>(y) * ow + x) * in.c + ch] =
            (1 - fy) * ((1 - fx) * in.at(y0, x0, ch) + fx * in.at(y0, x1, ch)) +
            fy * ((1 - fx) * in.at(y1, x0, ch) + fx * in.at(y1, x1, ch));
      }
    }
  }
  return out;
}

// Per-pixel linear coefficients (a, b) of O ~ a G + b over each window.
std::pair<ExtVec, ExtVec> ext_coeffs(Shape s, const ExtVec& g, const ExtVec& o, const GuidedFilterParams& p) {
  ExtVec gg(g.size()), go(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    gg[i] = g[i] * g[i];
    go[i] = g[i] * o[i];
  }
  auto mean = [&](const ExtVec& v) { return ext_mean(ExtImage{s.height, s.width, s.channels, v}, p.radius); };
  const ExtVec mg = mean(g), mo = mean(o), mgg = mean(gg), mgo = mean(go);
  ExtVec a(g.size()), b(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    a[i] = (mgo[i] - mg[i] * mo[i]) / (mgg[i] - mg[i] * mg[i] + p.eps);
    b[i] = mo[i] - a[i] * mg[i];
  }
  return {a, b};
}

// Zero-padded dilated convolution; weights laid out [out][in][ky][kx].
ExtVec ext_conv(const ConvLayer& l, int h, int w, const ExtVec& x, const ExtVec& weights, const ExtVec* bias) {
  const int half = l.kernel / 2;
  ExtVec y(static_cast<std::size_t>(h) * w * l.out_channels);
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      for (int o = 0; o < l.out_channels; ++o) {
        Ext s = bias ? (*bias)[o] : 0.0L;
        for (int i = 0; i < l.in_channels; ++i) {
          for (int ky = 0; ky < l.kernel; ++ky) {
            for (int kx = 0; kx < l.kernel; ++kx) {
              const int sy = py + (ky - half) * l.dilation;
              const int sx = px + (kx - half) * l.dilation;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              s += weights[((static_cast<std::size_t>(o) * l.in_channels + i) * l.kernel + ky) * l.kernel + kx] *
                   x[(static_cast<std::size_t>(sy) * w + sx) * l.in_channels + i];
            }
          }
        }
        y[(static_cast<std::size_t>(py) * w + px) * l.out_channels + o] = s;
      }
    }
  }
  return y;
}

// Adaptive normalization followed by leaky ReLU, per-channel spatial statistics.
ExtVec ext_norm_act(const ExtVec& x, int channels, Ext lambda, Ext mu) {
  const std::size_t pixels = x.size() / channels;
  ExtVec y(x.size());
  for (int c = 0; c < channels; ++c) {
    Ext mean = 0.0L, var = 0.0L;
    for (std::size_t p = 0; p < pixels; ++p) mean += x[p * channels + c];
    mean /= pixels;
    for (std::size_t p = 0; p < pixels; ++p) var += (x[p * channels + c] - mean) * (x[p * channels + c] - mean);
    const Ext sd = std::sqrt(var / pixels + static_cast<Ext>(kNormVarianceFloor));
    for (std::size_t p = 0; p < pixels; ++p) {
      const Ext v = x[p * channels + c];
      const Ext z = lambda * v + mu * (v - mean) / sd;
      y[p * channels + c] = z > 0 ? z : static_cast<Ext>(kLeakySlope) * z;
    }
  }
  return y;
}

// Runs a ConvNet whose parameters are taken, in parameters() order, from
// in[1], in[2], ...; in[0] is the image.
ExtVec ext_convnet(const ConvNet& net, int h, int w, const std::vector<ExtVec>& in) {
  ExtVec act = in[0];
  std::size_t next = 1;
  for (const ConvBlock& blk : net.blocks()) {
    const ExtVec& weights = in[next++];
    const ExtVec* bias = blk.conv.has_bias() ? &in[next++] : nullptr;
    act = ext_conv(blk.conv, h, w, act, weights, bias);
    if (blk.norm_and_activation) {
      const Ext lambda = in[next++][0];
      const Ext mu = in[next++][0];
      act = ext_norm_act(act, blk.conv.out_channels, lambda, mu);
    }
  }
  return act;
}

}  // namespace

GradcheckReport gradcheck(const GradcheckCase& c, std::uint64_t seed, double tolerance, double h) {
  std::mt19937_64 rng(seed);
  const Tensor output = c.forward(c.inputs);
  const Tensor probe = random_tensor(output.shape(), rng, -1.0, 1.0);
  const std::vector<Tensor> analytic = c.backward(c.inputs, probe);
  if (analytic.size() != c.inputs.size()) throw InvalidArgument("gradcheck: backward returned wrong arity");

  GradcheckReport report;
  std::vector<Tensor> args = c.inputs;
  std::vector<std::vector<long double>> ext_args;
  if (c.extended_forward) {
    for (const Tensor& t : c.inputs) ext_args.emplace_back(t.data().begin(), t.data().end());
  }
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    GradcheckEntry e{c.name + "." + c.input_names[k], 0.0, 0, true};
    auto record = [&](std::size_t i, double numeric) {
      const double err = relative_error(analytic[k][i], numeric);
      if (err > e.max_rel_err || std::isnan(err)) {
        e.max_rel_err = std::isnan(err) ? INFINITY : err;
        e.argmax = i;
      }
    };
    if (c.extended_forward) {
      if (analytic[k].shape() != c.inputs[k].shape()) throw InvalidArgument("gradcheck: gradient shape mismatch");
      std::vector<long double>& x = ext_args[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        const long double orig = x[i];
        x[i] = orig + h;
        const std::vector<long double> up = c.extended_forward(ext_args);
        x[i] = orig - h;
        const std::vector<long double> down = c.extended_forward(ext_args);
        x[i] = orig;
        if (up.size() != probe.size() || down.size() != probe.size()) {
          throw InvalidArgument("gradcheck: extended forward returned wrong size");
        }
        long double diff = 0.0L;
        for (std::size_t j = 0; j < up.size(); ++j) diff += probe[j] * (up[j] - down[j]);
        const double numeric = static_cast<double>(diff / ((orig + h) - (orig - h)));
        if (!std::isfinite(numeric)) throw OracleError("gradcheck: non-finite finite difference");
        record(i, numeric);
      }
      e.pass = e.max_rel_err <= tolerance;
      report.entries.push_back(std::move(e));
      continue;
    }

    // Differencing against the unperturbed output keeps f near zero, so the
    // returned double does not round away the O(h) change.
    const ScalarFn f = [&](const Tensor& x) {
      args[k] = x;
      return compensated_dot(probe, c.forward(args) - output);
    };
    const Tensor numeric = finite_diff(f, c.inputs[k], h);
    args[k] = c.inputs[k];
    require_same_shape(analytic[k], numeric, "gradcheck");

    for (std::size_t i = 0; i < numeric.size(); ++i) record(i, numeric[i]);
    e.pass = e.max_rel_err <= tolerance;
    report.entries.push_back(std::move(e));
  }
  return report;
}

GradcheckCase guided_layer_case(const GuidedCaseSpec& spec, std::uint64_t seed,
                                const BackwardOptions& options) {
  std::mt19937_64 rng(seed);
  const GuidedFilterParams params = spec.params;
  auto guide_tensor = [&](Shape s) {
    if (spec.zero_inputs) return Tensor::zeros(s);
    if (spec.constant_guide) return Tensor::filled(s, 0.5);
    return random_tensor(s, rng, 0.0, 1.0);
  };
  auto target_tensor = [&](Shape s) {
    return spec.zero_inputs ? Tensor::zeros(s) : random_tensor(s, rng, 0.0, 1.0);
  };

  GradcheckCase c;
  if (spec.variant == GuidedVariant::kJointUpsample) {
    const Shape high{spec.low.height * spec.upscale, spec.low.width * spec.upscale, spec.low.channels};
    c.name = "guided.joint";
    c.input_names = {"dG_l", "dO_l", "dG_h"};
    c.inputs.push_back(guide_tensor(spec.low));
    c.inputs.push_back(target_tensor(spec.low));
    c.inputs.push_back(guide_tensor(high));
    c.forward = [params](std::span<const Tensor> in) {
      return gf_forward_joint(in[0], in[2], in[1], params).output;
    };
    c.extended_forward = [params, low = spec.low, high](const std::vector<ExtVec>& in) {
      const auto [a, b] = ext_coeffs(low, in[0], in[1], params);
      const ExtVec ah = ext_resize(ExtImage{low.height, low.width, low.channels, a}, high.height, high.width);
      const ExtVec bh = ext_resize(ExtImage{low.height, low.width, low.channels, b}, high.height, high.width);
      ExtVec out(ah.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ah[i] * in[2][i] + bh[i];
      return out;
    };
    c.backward = [params, options](std::span<const Tensor> in, const Tensor& probe) {
      const GuidedFilterResult fwd = gf_forward_joint(in[0], in[2], in[1], params);
      GuidedFilterGrads g = gf_backward(fwd.tape, probe, options);
      return std::vector<Tensor>{std::move(*g.d_guide_low), std::move(g.d_target),
                                 std::move(g.d_guide_high)};
    };
  } else {
    c.name = "guided.highres";
    c.input_names = {"dG_h", "dO_up"};
    c.inputs.push_back(guide_tensor(spec.low));
    c.inputs.push_back(target_tensor(spec.low));
    c.forward = [params](std::span<const Tensor> in) {
      return gf_forward_highres(in[0], in[1], params).output;
    };
    c.extended_forward = [params, shape = spec.low](const std::vector<ExtVec>& in) {
      const auto [a, b] = ext_coeffs(shape, in[0], in[1], params);
      const ExtImage ai{shape.height, shape.width, shape.channels, a};
      const ExtImage bi{shape.height, shape.width, shape.channels, b};
      const ExtVec ah = ext_mean(ai, params.radius);
      const ExtVec bh = ext_mean(bi, params.radius);
      ExtVec out(ah.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ah[i] * in[0][i] + bh[i];
      return out;
    };
    c.backward = [params, options](std::span<const Tensor> in, const Tensor& probe) {
      const GuidedFilterResult fwd = gf_forward_highres(in[0], in[1], params);
      GuidedFilterGrads g = gf_backward(fwd.tape, probe, options);
      return std::vector<Tensor>{std::move(g.d_guide_high), std::move(g.d_target)};
    };
  }
  return c;
}

std::vector<GuidedCaseSpec> guided_instance_specs(std::uint64_t seed, int count) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<GuidedCaseSpec> specs;
  for (int i = 0; i < count; ++i) {
    GuidedCaseSpec s;
    s.params.radius = i % 3;
    s.params.eps = (i / 3) % 2 == 0 ? 1e-2 : 1e-4;
    if (i == 0) {
      s.low = Shape{12, 16, 2};
    } else {
      s.low = Shape{4 + static_cast<int>(rng() % 9), 4 + static_cast<int>(rng() % 13),
                    1 + static_cast<int>(rng() % 2)};
    }
    specs.push_back(s);
  }
  return specs;
}

GradcheckCase conv_case(int kernel, int dilation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConvLayer layer(2, 3, kernel, dilation, /*with_bias=*/true);
  for (double& w : layer.weights) w = 2.0 * unit(rng) - 1.0;
  for (double& b : layer.bias) b = 2.0 * unit(rng) - 1.0;

  GradcheckCase c;
  c.name = "conv.k" + std::to_string(kernel) + "d" + std::to_string(dilation);
  c.input_names = {"dx", "dweights", "dbias"};
  c.inputs = {random_tensor(Shape{5, 6, 2}, rng, -1.0, 1.0), as_tensor(layer.weights),
              as_tensor(layer.bias)};
  auto with_params = [layer](std::span<const Tensor> in) {
    ConvLayer l = layer;
    l.weights = in[1].values();
    l.bias = in[2].values();
    return l;
  };
  c.forward = [with_params](std::span<const Tensor> in) {
    return conv_forward(with_params(in), in[0]).output;
  };
  c.extended_forward = [layer, h = c.inputs[0].height(), w = c.inputs[0].width()](const std::vector<ExtVec>& in) {
    return ext_conv(layer, h, w, in[0], in[1], &in[2]);
  };
  c.backward = [with_params](std::span<const Tensor> in, const Tensor& probe) {
    const ConvLayer l = with_params(in);
    ConvGrads g = conv_backward(l, conv_forward(l, in[0]).tape, probe);
    return std::vector<Tensor>{std::move(g.d_input), as_tensor(g.d_weights), as_tensor(g.d_bias)};
  };
  return c;
}

GradcheckCase guidance_net_case(std::uint64_t seed, int hidden, int kernel) {
  std::mt19937_64 rng(seed);
  GuidanceNet net(GuidanceNetConfig{2, 2, hidden, kernel}, InitScheme::kXavierUniform, seed);
  net.norm().lambda = 0.5 + unit(rng);
  net.norm().mu = 0.25 + unit(rng);
  for (double& b : net.conv2().bias) b = unit(rng) - 0.5;

  GradcheckCase c;
  c.name = "guidance_net.h" + std::to_string(hidden) + "k" + std::to_string(kernel);
  c.inputs.push_back(random_tensor(Shape{5, 7, 2}, rng, -1.0, 1.0));
  c.input_names.push_back("dI");
  for (const ParamRef& p : net.parameters("f")) {
    c.inputs.push_back(as_tensor(p.values));
    c.input_names.push_back("d" + p.name);
  }
  auto with_params = [net](std::span<const Tensor> in) {
    GuidanceNet n = net;
    std::vector<ParamRef> refs = n.parameters("f");
    for (std::size_t k = 0; k < refs.size(); ++k) {
      std::copy(in[k + 1].data().begin(), in[k + 1].data().end(), refs[k].values.begin());
    }
    return n;
  };
  c.forward = [with_params](std::span<const Tensor> in) {
    return gn_forward(with_params(in), in[0]).output;
  };
  c.extended_forward = [net, h = c.inputs[0].height(), w = c.inputs[0].width()](const std::vector<ExtVec>& in) {
    return ext_convnet(net.net(), h, w, in);
  };
  c.backward = [with_params](std::span<const Tensor> in, const Tensor& probe) {
    const GuidanceNet n = with_params(in);
    ConvNet::Backward b = gn_backward(n, gn_forward(n, in[0]).tape, probe);
    std::vector<Tensor> out{std::move(b.d_input)};
    for (const auto& g : b.grads) out.push_back(as_tensor(g));
    return out;
  };
  return c;
}

GradcheckReport run_gradcheck_suite(const SuiteOptions& options) {
  GradcheckReport report;
  const auto specs = guided_instance_specs(options.seed, options.guided_instances);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    GradcheckCase c = guided_layer_case(specs[i], options.seed * 7919 + i, options.mutation);
    c.name += ".i" + std::to_string(i);
    report.append(gradcheck(c, options.seed + i, options.tolerance));
  }
  for (int i = 0; i < 6; ++i) {
    GuidedCaseSpec s;
    s.variant = GuidedVariant::kHighRes;
    s.low = Shape{8 + 2 * i, 10 + i, 1 + i % 2};
    s.params = GuidedFilterParams{i % 3, i % 2 == 0 ? 1e-2 : 1e-4};
    GradcheckCase c = guided_layer_case(s, options.seed * 104729 + i, options.mutation);
    c.name += ".i" + std::to_string(i);
    report.append(gradcheck(c, options.seed + 100 + i, options.tolerance));
  }
  report.append(gradcheck(conv_case(3, 2, options.seed + 1), options.seed + 200, options.tolerance));
  report.append(gradcheck(conv_case(1, 1, options.seed + 2), options.seed + 201, options.tolerance));
  report.append(gradcheck(guidance_net_case(options.seed + 3), options.seed + 202, options.tolerance));
  return report;
}

}  // namespace dgf
