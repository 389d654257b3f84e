#include "dgf/train.hpp"

#include <cmath>
#include <random>
#include <string>

#include "dgf/error.hpp"
#include "dgf/filter_ops.hpp"

namespace dgf {

DgfModel::DgfModel(const DgfModelConfig& config)
    : config_(config),
      context_(make_context_net(config.in_channels, config.context_width, config.out_channels,
                                config.context_dilations)) {
  initialize(context_, config.init, config.seed);
  if (config.guide_mode == GuideMode::kLearned) {
    guide_.emplace(GuidanceNetConfig{config.in_channels, config.out_channels, config.guide_hidden,
                                     config.guide_kernel},
                   config.init, config.seed + 1);
  }
}

std::vector<ParamRef> DgfModel::parameters() {
  std::vector<ParamRef> params = context_.parameters("c_l");
  if (guide_) {
    for (ParamRef& p : guide_->parameters("f")) params.push_back(std::move(p));
  }
  return params;
}

ParamGrads DgfModel::zero_grads() const {
  ParamGrads grads = context_.zero_grads();
  if (guide_) {
    for (auto& g : guide_->net().zero_grads()) grads.push_back(std::move(g));
  }
  return grads;
}

std::pair<int, int> low_res_dims(int height, int width, int short_side) {
  const int shortest = std::min(height, width);
  if (short_side <= 0 || short_side >= shortest) return {height, width};
  auto scaled = [&](int dim) {
    return std::max(1, static_cast<int>(std::lround(static_cast<double>(dim) * short_side / shortest)));
  };
  return height <= width ? std::pair{short_side, scaled(width)}
                         : std::pair{scaled(height), short_side};
}

Tensor channel_mean_guide(const Tensor& input, int out_channels) {
  const int cin = input.channels();
  Tensor out = Tensor::zeros(Shape{input.height(), input.width(), out_channels});
  for (int y = 0; y < input.height(); ++y) {
    for (int x = 0; x < input.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < cin; ++c) s += input(y, x, c);
      s /= cin;
      for (int c = 0; c < out_channels; ++c) out(y, x, c) = s;
    }
  }
  return out;
}

DgfForward dgf_forward(const DgfModel& model, const Tensor& input_high) {
  const DgfModelConfig& cfg = model.config();
  if (input_high.channels() != cfg.in_channels) {
    throw InvalidArgument("dgf_forward: input has " + std::to_string(input_high.channels()) +
                          " channels, model expects " + std::to_string(cfg.in_channels));
  }
  const auto [lh, lw] = low_res_dims(input_high.height(), input_high.width(), cfg.low_res_short_side);
  Tensor input_low = bilinear_resize(input_high, lh, lw);
  ConvNet::Result ctx = model.context().forward(input_low);

  std::optional<ConvNet::Tape> guide_low_tape, guide_high_tape;
  Tensor guide_low = Tensor::filled(1, 1, 1, 0.0);
  Tensor guide_high = guide_low;
  if (model.guide()) {
    ConvNet::Result gl = gn_forward(*model.guide(), input_low);
    ConvNet::Result gh = gn_forward(*model.guide(), input_high);
    guide_low = std::move(gl.output);
    guide_high = std::move(gh.output);
    guide_low_tape = std::move(gl.tape);
    guide_high_tape = std::move(gh.tape);
  } else {
    guide_low = channel_mean_guide(input_low, cfg.out_channels);
    guide_high = channel_mean_guide(input_high, cfg.out_channels);
  }

  GuidedFilterResult gf = gf_forward_joint(guide_low, guide_high, ctx.output, cfg.filter);
  return DgfForward{std::move(gf.output),
                    DgfTape{std::move(input_low), std::move(ctx.tape), std::move(ctx.output),
                            std::move(guide_low_tape), std::move(guide_high_tape),
                            std::move(gf.tape)}};
}

ParamGrads dgf_backward(const DgfModel& model, const DgfTape& tape, const Tensor& d_output,
                        const BackwardOptions& options) {
  GuidedFilterGrads g = gf_backward(tape.filter, d_output, options);
  ParamGrads grads = model.context().backward(tape.context, g.d_target).grads;
  if (model.guide()) {
    const ConvNet& f = model.guide()->net();
    ParamGrads f_grads = f.backward(*tape.guide_low, *g.d_guide_low).grads;
    accumulate(f_grads, f.backward(*tape.guide_high, g.d_guide_high).grads);
    for (auto& v : f_grads) grads.push_back(std::move(v));
  }
  return grads;
}

LossResult l2_loss(const Tensor& output, const Tensor& target) {
  require_same_shape(output, target, "l2_loss");
  const Tensor diff = output - target;
  const double n = static_cast<double>(diff.size());
  return LossResult{dot(diff, diff) / n, diff * (2.0 / n)};
}

void adam_step(const std::vector<ParamRef>& params, const ParamGrads& grads, AdamState& state,
               const TrainConfig& config) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const ParamRef& p : params) {
      state.first_moment.emplace_back(p.values.size(), 0.0);
      state.second_moment.emplace_back(p.values.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw InvalidArgument("adam_step: state layout mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].values.size() || state.first_moment[k].size() != grads[k].size()) {
      throw InvalidArgument("adam_step: size mismatch for " + params[k].name);
    }
    for (double g : grads[k]) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient for parameter " + params[k].name);
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double correction2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::vector<double>& m = state.first_moment[k];
    std::vector<double>& v = state.second_moment[k];
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      const double g = grads[k][i];
      m[i] = AdamState::kBeta1 * m[i] + (1.0 - AdamState::kBeta1) * g;
      v[i] = AdamState::kBeta2 * v[i] + (1.0 - AdamState::kBeta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[k].values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + AdamState::kEpsilon);
    }
  }
}

double evaluate_loss(const DgfModel& model, const std::vector<Sample>& dataset) {
  if (dataset.empty()) throw InvalidArgument("evaluate_loss: empty dataset");
  double total = 0.0;
  for (const Sample& s : dataset) total += l2_loss(dgf_forward(model, s.input).output, s.target).loss;
  return total / static_cast<double>(dataset.size());
}

namespace {

void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
}

void require_finite_loss(double loss, int step) {
  if (!std::isfinite(loss)) {
    throw TrainingError("loss diverged (non-finite) at step " + std::to_string(step));
  }
}

}  // namespace

TrainReport train_dgf(DgfModel& model, const std::vector<Sample>& dataset,
                      const TrainConfig& config) {
  if (dataset.empty()) throw InvalidArgument("train_dgf: empty dataset");
  if (!(config.learning_rate >= 0.0)) throw InvalidArgument("train_dgf: learning rate must be >= 0");
  if (config.batch_size != 1) throw InvalidArgument("train_dgf: only batch size 1 is supported");
  if (config.steps < 0) throw InvalidArgument("train_dgf: steps must be >= 0");
  for (const Sample& s : dataset) {
    require_same_shape(dgf_forward(model, s.input).output, s.target, "train_dgf (output vs target)");
  }

  TrainReport report;
  report.initial_loss = evaluate_loss(model, dataset);
  report.loss_history.reserve(static_cast<std::size_t>(config.steps));

  std::vector<ParamRef> params = model.parameters();
  AdamState adam;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int step = 0; step < config.steps; ++step) {
    if (step % static_cast<int>(order.size()) == 0) shuffle(order, rng);
    const Sample& sample = dataset[order[step % order.size()]];

    double loss_value = 0.0;
    ParamGrads grads;
    try {
      DgfForward fwd = dgf_forward(model, sample.input);
      const LossResult loss = l2_loss(fwd.output, sample.target);
      loss_value = loss.loss;
      require_finite_loss(loss_value, step);
      if (config.mode == TrainMode::kEndToEnd) {
        grads = dgf_backward(model, fwd.tape, loss.grad);
      } else {
        const Tensor& low = fwd.tape.output_low;
        const LossResult low_loss =
            l2_loss(low, bilinear_resize(sample.target, low.height(), low.width()));
        grads = model.zero_grads();
        ParamGrads ctx = model.context().backward(fwd.tape.context, low_loss.grad).grads;
        for (std::size_t k = 0; k < ctx.size(); ++k) grads[k] = std::move(ctx[k]);
      }
    } catch (const std::domain_error& e) {
      // Non-finite intermediates surface as DomainError / DegenerateWindow.
      throw TrainingError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
    adam_step(params, grads, adam, config);
    report.loss_history.push_back(loss_value);
  }

  report.final_loss = evaluate_loss(model, dataset);
  require_finite_loss(report.final_loss, config.steps);
  return report;
}

}  // namespace dgf
