#include "dgf/guidance_net.hpp"

#include <cmath>

#include "dgf/error.hpp"
#include "dgf/simd.hpp"

namespace dgf {
namespace {

void validate(const ConvLayer& l) {
  if (l.kernel < 1 || l.kernel % 2 == 0) {
    throw InvalidArgument("conv kernel size must be odd and >= 1, got " + std::to_string(l.kernel));
  }
  if (l.dilation < 1) throw InvalidArgument("conv dilation must be >= 1");
  if (l.in_channels < 1 || l.out_channels < 1) throw InvalidArgument("conv channel counts must be >= 1");
  const std::size_t expected =
      static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
  if (l.weights.size() != expected) {
    throw InvalidArgument("conv weights have " + std::to_string(l.weights.size()) +
                          " entries, expected " + std::to_string(expected));
  }
  if (l.has_bias() && l.bias.size() != static_cast<std::size_t>(l.out_channels)) {
    throw InvalidArgument("conv bias length must equal out_channels");
  }
}

// Weights regrouped as [tap][in][out] so the innermost loops run over
// contiguous output channels.
std::vector<double> pack_weights(const ConvLayer& l) {
  const int taps = l.kernel * l.kernel;
  std::vector<double> packed(l.weights.size());
  for (int o = 0; o < l.out_channels; ++o) {
    for (int i = 0; i < l.in_channels; ++i) {
      for (int t = 0; t < taps; ++t) {
        packed[(static_cast<std::size_t>(t) * l.in_channels + i) * l.out_channels + o] =
            l.weights[(static_cast<std::size_t>(o) * l.in_channels + i) * taps + t];
      }
    }
  }
  return packed;
}

// Visits every (output pixel, tap, in-bounds source pixel) triple in a fixed order.
template <typename Fn>
void for_each_tap(const ConvLayer& l, int h, int w, Fn&& fn) {
  const int half = l.kernel / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      for (int ky = 0; ky < l.kernel; ++ky) {
        const int sy = y + (ky - half) * l.dilation;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < l.kernel; ++kx) {
          const int sx = x + (kx - half) * l.dilation;
          if (sx < 0 || sx >= w) continue;
          fn(p, static_cast<std::size_t>(ky * l.kernel + kx), static_cast<std::size_t>(sy) * w + sx);
        }
      }
    }
  }
}

}  // namespace

ConvLayer::ConvLayer(int in_ch, int out_ch, int kernel_size, int dilation_rate, bool with_bias)
    : kernel(kernel_size),
      dilation(dilation_rate),
      in_channels(in_ch),
      out_channels(out_ch),
      weights(static_cast<std::size_t>(out_ch) * in_ch * kernel_size * kernel_size, 0.0),
      bias(with_bias ? static_cast<std::size_t>(out_ch) : 0, 0.0) {
  validate(*this);
}

ConvResult conv_forward(const ConvLayer& layer, const Tensor& x) {
  validate(layer);
  if (x.channels() != layer.in_channels) {
    throw InvalidArgument("conv_forward: input has " + std::to_string(x.channels()) +
                          " channels, layer expects " + std::to_string(layer.in_channels));
  }
  const auto& k = simd::active();
  const std::size_t cin = layer.in_channels;
  const std::size_t cout = layer.out_channels;
  const std::vector<double> packed = pack_weights(layer);

  Tensor y = Tensor::zeros(Shape{x.height(), x.width(), layer.out_channels});
  double* out = y.data().data();
  const double* in = x.data().data();
  if (layer.has_bias()) {
    for (std::size_t p = 0; p < static_cast<std::size_t>(x.height()) * x.width(); ++p) {
      std::copy(layer.bias.begin(), layer.bias.end(), out + p * cout);
    }
  }
  for_each_tap(layer, x.height(), x.width(), [&](std::size_t p, std::size_t tap, std::size_t q) {
    for (std::size_t i = 0; i < cin; ++i) {
      k.axpy(in[q * cin + i], packed.data() + (tap * cin + i) * cout, out + p * cout, cout);
    }
  });
  return ConvResult{std::move(y), ConvTape{x}};
}

ConvGrads conv_backward(const ConvLayer& layer, const ConvTape& tape, const Tensor& dy) {
  validate(layer);
  const Tensor& x = tape.input;
  const Shape expected{x.height(), x.width(), layer.out_channels};
  if (dy.shape() != expected) {
    throw InvalidArgument("conv_backward: gradient shape " + to_string(dy.shape()) +
                          " does not match output shape " + to_string(expected));
  }
  const auto& k = simd::active();
  const std::size_t cin = layer.in_channels;
  const std::size_t cout = layer.out_channels;
  const int taps = layer.kernel * layer.kernel;
  const std::vector<double> packed = pack_weights(layer);

  Tensor dx = Tensor::zeros(x.shape());
  std::vector<double> dw_packed(packed.size(), 0.0);
  const double* in = x.data().data();
  const double* g = dy.data().data();
  double* dxp = dx.data().data();

  for_each_tap(layer, x.height(), x.width(), [&](std::size_t p, std::size_t tap, std::size_t q) {
    for (std::size_t i = 0; i < cin; ++i) {
      const std::size_t row = (tap * cin + i) * cout;
      dxp[q * cin + i] += k.dot(packed.data() + row, g + p * cout, cout);
      k.axpy(in[q * cin + i], g + p * cout, dw_packed.data() + row, cout);
    }
  });

  ConvGrads grads{std::move(dx), std::vector<double>(layer.weights.size()), {}};
  for (int o = 0; o < layer.out_channels; ++o) {
    for (std::size_t i = 0; i < cin; ++i) {
      for (int t = 0; t < taps; ++t) {
        grads.d_weights[(static_cast<std::size_t>(o) * cin + i) * taps + t] =
            dw_packed[(static_cast<std::size_t>(t) * cin + i) * cout + o];
      }
    }
  }
  if (layer.has_bias()) {
    grads.d_bias.assign(cout, 0.0);
    for (std::size_t p = 0; p < static_cast<std::size_t>(x.height()) * x.width(); ++p) {
      k.axpy(1.0, g + p * cout, grads.d_bias.data(), cout);
    }
  }
  return grads;
}

NormResult norm_forward(const AdaptiveNorm& norm, const Tensor& x) {
  const int ch = x.channels();
  const std::size_t pixels = static_cast<std::size_t>(x.height()) * x.width();
  std::vector<double> mean(ch, 0.0), inv_std(ch, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < ch; ++c) mean[c] += x[p * ch + c];
  }
  for (double& m : mean) m /= static_cast<double>(pixels);
  std::vector<double> var(ch, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < ch; ++c) {
      const double d = x[p * ch + c] - mean[c];
      var[c] += d * d;
    }
  }
  for (int c = 0; c < ch; ++c) {
    inv_std[c] = 1.0 / std::sqrt(var[c] / static_cast<double>(pixels) + kNormVarianceFloor);
  }

  Tensor n = Tensor::zeros(x.shape());
  Tensor y = Tensor::zeros(x.shape());
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      n[i] = (x[i] - mean[c]) * inv_std[c];
      y[i] = norm.lambda * x[i] + norm.mu * n[i];
    }
  }
  return NormResult{std::move(y), NormTape{x, std::move(n), std::move(inv_std)}};
}

NormGrads norm_backward(const AdaptiveNorm& norm, const NormTape& tape, const Tensor& dy) {
  require_same_shape(tape.input, dy, "norm_backward");
  const int ch = dy.channels();
  const std::size_t pixels = static_cast<std::size_t>(dy.height()) * dy.width();
  const Tensor& x = tape.input;
  const Tensor& n = tape.normalized;

  NormGrads grads{Tensor::zeros(dy.shape()), 0.0, 0.0};
  std::vector<double> mean_dn(ch, 0.0), mean_dn_n(ch, 0.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      grads.d_lambda += dy[i] * x[i];
      grads.d_mu += dy[i] * n[i];
      mean_dn[c] += norm.mu * dy[i];
      mean_dn_n[c] += norm.mu * dy[i] * n[i];
    }
  }
  for (int c = 0; c < ch; ++c) {
    mean_dn[c] /= static_cast<double>(pixels);
    mean_dn_n[c] /= static_cast<double>(pixels);
  }
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t i = p * ch + c;
      const double dn = norm.mu * dy[i];
      grads.d_input[i] =
          norm.lambda * dy[i] + tape.inv_std[c] * (dn - mean_dn[c] - n[i] * mean_dn_n[c]);
    }
  }
  return grads;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : slope * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope) {
  require_same_shape(x, dy, "leaky_relu_backward");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x[i] > 0.0)) dx[i] *= slope;
  }
  return dx;
}

ConvNet::ConvNet(std::vector<ConvBlock> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw InvalidArgument("ConvNet needs at least one block");
  for (std::size_t b = 1; b < blocks_.size(); ++b) {
    if (blocks_[b].conv.in_channels != blocks_[b - 1].conv.out_channels) {
      throw InvalidArgument("ConvNet: block " + std::to_string(b) +
                            " input channels do not match previous output");
    }
  }
}

int ConvNet::in_channels() const { return blocks_.front().conv.in_channels; }
int ConvNet::out_channels() const { return blocks_.back().conv.out_channels; }

std::vector<ParamRef> ConvNet::parameters(const std::string& prefix) {
  std::vector<ParamRef> refs;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    ConvBlock& blk = blocks_[b];
    const std::string base = prefix + ".b" + std::to_string(b);
    refs.push_back({base + ".conv.w", blk.conv.weights});
    if (blk.conv.has_bias()) refs.push_back({base + ".conv.bias", blk.conv.bias});
    if (blk.norm_and_activation) {
      refs.push_back({base + ".norm.lambda", std::span<double>(&blk.norm.lambda, 1)});
      refs.push_back({base + ".norm.mu", std::span<double>(&blk.norm.mu, 1)});
    }
  }
  return refs;
}

ParamGrads ConvNet::zero_grads() const {
  ParamGrads grads;
  for (const ConvBlock& blk : blocks_) {
    grads.emplace_back(blk.conv.weights.size(), 0.0);
    if (blk.conv.has_bias()) grads.emplace_back(blk.conv.bias.size(), 0.0);
    if (blk.norm_and_activation) {
      grads.emplace_back(1, 0.0);
      grads.emplace_back(1, 0.0);
    }
  }
  return grads;
}

ConvNet::Result ConvNet::forward(const Tensor& x) const {
  Tape tape;
  tape.blocks.reserve(blocks_.size());
  Tensor act = x;
  for (const ConvBlock& blk : blocks_) {
    ConvResult conv = conv_forward(blk.conv, act);
    BlockTape bt{std::move(conv.tape), std::nullopt, Tensor::filled(1, 1, 1, 0.0)};
    if (blk.norm_and_activation) {
      NormResult nr = norm_forward(blk.norm, conv.output);
      act = leaky_relu(nr.output);
      bt.norm = std::move(nr.tape);
      bt.pre_activation = std::move(nr.output);
    } else {
      act = std::move(conv.output);
    }
    tape.blocks.push_back(std::move(bt));
  }
  return Result{std::move(act), std::move(tape)};
}

ConvNet::Backward ConvNet::backward(const Tape& tape, const Tensor& dy) const {
  if (tape.blocks.size() != blocks_.size()) throw InvalidArgument("ConvNet::backward: tape mismatch");
  std::vector<std::vector<std::vector<double>>> per_block(blocks_.size());
  Tensor grad = dy;
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    const ConvBlock& blk = blocks_[b];
    const BlockTape& bt = tape.blocks[b];
    std::vector<std::vector<double>> g;
    double d_lambda = 0.0, d_mu = 0.0;
    if (blk.norm_and_activation) {
      NormGrads ng = norm_backward(blk.norm, *bt.norm, leaky_relu_backward(bt.pre_activation, grad));
      grad = std::move(ng.d_input);
      d_lambda = ng.d_lambda;
      d_mu = ng.d_mu;
    }
    ConvGrads cg = conv_backward(blk.conv, bt.conv, grad);
    grad = std::move(cg.d_input);
    g.push_back(std::move(cg.d_weights));
    if (blk.conv.has_bias()) g.push_back(std::move(cg.d_bias));
    if (blk.norm_and_activation) {
      g.push_back({d_lambda});
      g.push_back({d_mu});
    }
    per_block[b] = std::move(g);
  }
  ParamGrads grads;
  for (auto& g : per_block) {
    for (auto& v : g) grads.push_back(std::move(v));
  }
  return Backward{std::move(grad), std::move(grads)};
}

void accumulate(ParamGrads& into, const ParamGrads& from) {
  if (into.size() != from.size()) throw InvalidArgument("accumulate: gradient layout mismatch");
  for (std::size_t i = 0; i < into.size(); ++i) {
    if (into[i].size() != from[i].size()) throw InvalidArgument("accumulate: gradient size mismatch");
    simd::active().axpy(1.0, from[i].data(), into[i].data(), into[i].size());
  }
}

namespace {

// Uniform in [-1, 1) from the top 53 bits; libstdc++ distributions are not
// specified bit-for-bit, and checkpoints should not depend on them.
double symmetric_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace

void initialize(ConvNet& net, InitScheme scheme, std::uint64_t seed, double noise) {
  std::mt19937_64 rng(seed);
  for (ConvBlock& blk : net.blocks()) {
    ConvLayer& l = blk.conv;
    const int taps = l.kernel * l.kernel;
    if (scheme == InitScheme::kXavierUniform) {
      const double limit = std::sqrt(6.0 / ((l.in_channels + l.out_channels) * taps));
      for (double& w : l.weights) w = limit * symmetric_unit(rng);
    } else {
      for (double& w : l.weights) w = noise * symmetric_unit(rng);
      const int centre = l.kernel / 2;
      for (int c = 0; c < std::min(l.in_channels, l.out_channels); ++c) {
        l.weight(c, c, centre, centre) += 1.0;
      }
    }
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
    blk.norm = AdaptiveNorm{};
  }
}

GuidanceNet::GuidanceNet(const GuidanceNetConfig& config, InitScheme scheme, std::uint64_t seed)
    : config_(config) {
  if (config.in_channels < 1 || config.out_channels < 1 || config.hidden_channels < 1) {
    throw InvalidArgument("GuidanceNet: channel counts must be >= 1");
  }
  std::vector<ConvBlock> blocks;
  blocks.push_back(ConvBlock{ConvLayer(config.in_channels, config.hidden_channels, config.kernel, 1,
                                       /*with_bias=*/false),
                             true, AdaptiveNorm{}});
  blocks.push_back(ConvBlock{ConvLayer(config.hidden_channels, config.out_channels, 1, 1,
                                       /*with_bias=*/true),
                             false, AdaptiveNorm{}});
  net_ = ConvNet(std::move(blocks));
  initialize(net_, scheme, seed);
}

ConvNet::Result gn_forward(const GuidanceNet& net, const Tensor& input) {
  if (input.channels() != net.config().in_channels) {
    throw InvalidArgument("gn_forward: input has " + std::to_string(input.channels()) +
                          " channels, expected " + std::to_string(net.config().in_channels));
  }
  return net.net().forward(input);
}

ConvNet::Backward gn_backward(const GuidanceNet& net, const ConvNet::Tape& tape,
                              const Tensor& d_guide) {
  return net.net().backward(tape, d_guide);
}

ConvNet make_context_net(int in_channels, int width, int out_channels,
                         const std::vector<int>& dilations) {
  std::vector<ConvBlock> blocks;
  int ch = in_channels;
  for (int d : dilations) {
    blocks.push_back(ConvBlock{ConvLayer(ch, width, 3, d, /*with_bias=*/false), true, AdaptiveNorm{}});
    ch = width;
  }
  blocks.push_back(ConvBlock{ConvLayer(ch, out_channels, 1, 1, /*with_bias=*/true), false,
                             AdaptiveNorm{}});
  return ConvNet(std::move(blocks));
}

}  // namespace dgf
