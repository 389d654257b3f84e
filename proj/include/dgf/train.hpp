#pragma once

// End-to-end deep guided filtering network: downsample the input, run the
// low-resolution network C_l, and restore full resolution with the guided
// filtering layer driven by a learned (or fixed) guidance transform.

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dgf/guidance_net.hpp"
#include "dgf/guided_layer.hpp"
#include "dgf/tensor.hpp"

namespace dgf {

enum class GuideMode {
  kLearned,      // G = F(I), trained jointly
  kChannelMean,  // G = per-pixel mean over input channels, repeated n_O times
};

struct DgfModelConfig {
  int in_channels = 3;
  int out_channels = 3;
  int context_width = 16;
  std::vector<int> context_dilations = {1, 2, 4, 1};
  int guide_hidden = 64;
  int guide_kernel = 1;
  GuideMode guide_mode = GuideMode::kLearned;
  GuidedFilterParams filter{1, 1e-8};
  int low_res_short_side = 64;  // <= 0 keeps full resolution
  InitScheme init = InitScheme::kNearIdentity;
  std::uint64_t seed = 0;
};

class DgfModel {
 public:
  explicit DgfModel(const DgfModelConfig& config);

  const DgfModelConfig& config() const { return config_; }
  ConvNet& context() { return context_; }
  const ConvNet& context() const { return context_; }
  std::optional<GuidanceNet>& guide() { return guide_; }
  const std::optional<GuidanceNet>& guide() const { return guide_; }
  const GuidedFilterParams& filter() const { return config_.filter; }

  /// C_l parameters (prefix "c_l") followed by F parameters (prefix "f").
  std::vector<ParamRef> parameters();
  ParamGrads zero_grads() const;

 private:
  DgfModelConfig config_;
  ConvNet context_;
  std::optional<GuidanceNet> guide_;
};

/// Low-resolution size with the given short side and the aspect ratio kept.
std::pair<int, int> low_res_dims(int height, int width, int short_side);

/// Channel-mean guidance map with `out_channels` identical channels.
Tensor channel_mean_guide(const Tensor& input, int out_channels);

struct DgfTape {
  Tensor input_low;
  ConvNet::Tape context;
  Tensor output_low;
  std::optional<ConvNet::Tape> guide_low;
  std::optional<ConvNet::Tape> guide_high;
  GuidedFilterTape filter;
};

struct DgfForward {
  Tensor output;
  DgfTape tape;
};

DgfForward dgf_forward(const DgfModel& model, const Tensor& input_high);

/// Parameter gradients of dot(d_output, O_h), laid out like model.parameters().
/// F's two call sites are accumulated low-resolution first.
ParamGrads dgf_backward(const DgfModel& model, const DgfTape& tape, const Tensor& d_output,
                        const BackwardOptions& options = {});

struct LossResult {
  double loss;
  Tensor grad;
};

/// Mean squared error and its gradient 2 (O - T) / n.
LossResult l2_loss(const Tensor& output, const Tensor& target);

enum class TrainMode {
  kEndToEnd,     // loss at full resolution, gradients through the guided layer
  kPostProcess,  // C_l fitted at low resolution; guided layer applied untrained
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 1;
  int steps = 500;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kEndToEnd;
};

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  long step = 0;
};

/// One bias-corrected Adam update. Moments are allocated on first use.
/// Throws TrainingError naming the parameter if a gradient is non-finite.
void adam_step(const std::vector<ParamRef>& params, const ParamGrads& grads, AdamState& state,
               const TrainConfig& config);

struct Sample {
  Tensor input;
  Tensor target;
};

struct TrainReport {
  std::vector<double> loss_history;  // training loss of the sample used at each step
  double initial_loss = 0.0;         // dataset mean before the first step
  double final_loss = 0.0;           // dataset mean after the last step
};

/// Mean full-resolution l2 loss over the dataset.
double evaluate_loss(const DgfModel& model, const std::vector<Sample>& dataset);

/// Batch-size-1 Adam training; sample order is a per-epoch shuffle seeded by
/// config.seed. Throws TrainingError on a non-finite loss or gradient.
TrainReport train_dgf(DgfModel& model, const std::vector<Sample>& dataset,
                      const TrainConfig& config);

}  // namespace dgf
