#pragma once

// Convolutional building blocks with hand-written backward passes: dilated
// same-size convolution, adaptive normalization and leaky ReLU, stacked into
// the learnable guidance transform F(I) and the low-resolution network C_l.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dgf/tensor.hpp"

namespace dgf {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormVarianceFloor = 1e-5;

/// Stride-1 cross-correlation with zero padding (kernel - 1) * dilation / 2,
/// so output spatial dims equal input dims.
struct ConvLayer {
  int kernel = 1;  // odd
  int dilation = 1;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;  // [out][in][ky][kx]
  std::vector<double> bias;     // empty: no bias

  ConvLayer() = default;
  ConvLayer(int in_ch, int out_ch, int kernel_size, int dilation_rate, bool with_bias);

  bool has_bias() const { return !bias.empty(); }
  double& weight(int o, int i, int ky, int kx) {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx];
  }
  double weight(int o, int i, int ky, int kx) const {
    return weights[((static_cast<std::size_t>(o) * in_channels + i) * kernel + ky) * kernel + kx];
  }
};

struct ConvTape {
  Tensor input;
};

struct ConvGrads {
  Tensor d_input;
  std::vector<double> d_weights;
  std::vector<double> d_bias;
};

struct ConvResult {
  Tensor output;
  ConvTape tape;
};

ConvResult conv_forward(const ConvLayer& layer, const Tensor& x);
ConvGrads conv_backward(const ConvLayer& layer, const ConvTape& tape, const Tensor& dy);

/// y = lambda * x + mu * standardize(x), where standardize subtracts the
/// per-channel spatial mean and divides by sqrt(var + kNormVarianceFloor).
struct AdaptiveNorm {
  double lambda = 1.0;
  double mu = 0.0;
};

struct NormTape {
  Tensor input;
  Tensor normalized;
  std::vector<double> inv_std;  // per channel
};

struct NormGrads {
  Tensor d_input;
  double d_lambda = 0.0;
  double d_mu = 0.0;
};

struct NormResult {
  Tensor output;
  NormTape tape;
};

NormResult norm_forward(const AdaptiveNorm& norm, const Tensor& x);
NormGrads norm_backward(const AdaptiveNorm& norm, const NormTape& tape, const Tensor& dy);

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope = kLeakySlope);

/// One convolution, optionally followed by adaptive normalization and leaky ReLU.
struct ConvBlock {
  ConvLayer conv;
  bool norm_and_activation = false;
  AdaptiveNorm norm;
};

/// Mutable view of one parameter array, named for checkpoints and error messages.
struct ParamRef {
  std::string name;
  std::span<double> values;
};

/// Gradients laid out exactly like the ParamRef list of the same network.
using ParamGrads = std::vector<std::vector<double>>;

/// Sequential stack of blocks. Parameters are owned here and shared by every
/// forward call, so applying the net twice and adding both backward results
/// accumulates gradients into the one parameter set.
class ConvNet {
 public:
  ConvNet() = default;
  explicit ConvNet(std::vector<ConvBlock> blocks);

  const std::vector<ConvBlock>& blocks() const { return blocks_; }
  std::vector<ConvBlock>& blocks() { return blocks_; }
  int in_channels() const;
  int out_channels() const;

  std::vector<ParamRef> parameters(const std::string& prefix);
  ParamGrads zero_grads() const;

  struct BlockTape {
    ConvTape conv;
    std::optional<NormTape> norm;
    Tensor pre_activation;  // norm output; only meaningful when norm is set
  };
  struct Tape {
    std::vector<BlockTape> blocks;
  };
  struct Result {
    Tensor output;
    Tape tape;
  };
  struct Backward {
    Tensor d_input;
    ParamGrads grads;
  };

  Result forward(const Tensor& x) const;
  Backward backward(const Tape& tape, const Tensor& dy) const;

 private:
  std::vector<ConvBlock> blocks_;
};

void accumulate(ParamGrads& into, const ParamGrads& from);

enum class InitScheme {
  kXavierUniform,  // weights ~ U(+-sqrt(6 / (fan_in + fan_out))), bias 0
  kNearIdentity,   // centre-tap identity on the first min(in, out) channels plus small noise
};

void initialize(ConvNet& net, InitScheme scheme, std::uint64_t seed, double noise = 1e-3);

/// F(I): conv1 (n_I -> C) -> adaptive norm -> leaky ReLU -> conv2 (C -> n_O, with bias).
struct GuidanceNetConfig {
  int in_channels = 3;
  int out_channels = 3;
  int hidden_channels = 64;
  int kernel = 1;
};

class GuidanceNet {
 public:
  GuidanceNet(const GuidanceNetConfig& config, InitScheme scheme, std::uint64_t seed);

  const GuidanceNetConfig& config() const { return config_; }
  ConvNet& net() { return net_; }
  const ConvNet& net() const { return net_; }
  ConvLayer& conv1() { return net_.blocks()[0].conv; }
  AdaptiveNorm& norm() { return net_.blocks()[0].norm; }
  ConvLayer& conv2() { return net_.blocks()[1].conv; }

  std::vector<ParamRef> parameters(const std::string& prefix = "f") {
    return net_.parameters(prefix);
  }

 private:
  GuidanceNetConfig config_;
  ConvNet net_;
};

ConvNet::Result gn_forward(const GuidanceNet& net, const Tensor& input);
ConvNet::Backward gn_backward(const GuidanceNet& net, const ConvNet::Tape& tape,
                              const Tensor& d_guide);

/// Small context-aggregation stack for C_l: 3x3 blocks with dilations
/// `dilations`, each with norm and activation, then a 1x1 projection with bias.
ConvNet make_context_net(int in_channels, int width, int out_channels,
                         const std::vector<int>& dilations);

}  // namespace dgf
