#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "../oracles/oracles.hpp"
#include "dgf/error.hpp"
#include "dgf/filter_ops.hpp"
#include "dgf/synthetic.hpp"
#include "dgf/train.hpp"

namespace dgf {
namespace {

DgfModelConfig tiny_config(GuideMode mode = GuideMode::kLearned) {
  DgfModelConfig mc;
  mc.context_width = 3;
  mc.context_dilations = {1, 2};
  mc.guide_hidden = 3;
  mc.low_res_short_side = 6;
  mc.guide_mode = mode;
  mc.filter = GuidedFilterParams{1, 1e-2};
  mc.init = InitScheme::kXavierUniform;
  mc.seed = 4;
  return mc;
}

std::vector<double> flatten(DgfModel& m) {
  std::vector<double> v;
  for (const ParamRef& p : m.parameters()) v.insert(v.end(), p.values.begin(), p.values.end());
  return v;
}

TEST(LowResDims, KeepsAspectRatio) {
  EXPECT_EQ(low_res_dims(128, 256, 64), (std::pair{64, 128}));
  EXPECT_EQ(low_res_dims(300, 100, 50), (std::pair{150, 50}));
  EXPECT_EQ(low_res_dims(40, 40, 64), (std::pair{40, 40}));
  EXPECT_EQ(low_res_dims(40, 30, 0), (std::pair{40, 30}));
}

TEST(ChannelMeanGuide, AveragesAndRepeats) {
  const Tensor in(1, 2, 3, {0.0, 0.3, 0.6, 1.0, 1.0, 0.4});
  const Tensor g = channel_mean_guide(in, 2);
  EXPECT_EQ(g.shape(), (Shape{1, 2, 2}));
  EXPECT_NEAR(g(0, 0, 0), 0.3, 1e-15);
  EXPECT_NEAR(g(0, 0, 1), 0.3, 1e-15);
  EXPECT_NEAR(g(0, 1, 1), 0.8, 1e-15);
}

TEST(L2Loss, ValueAndGradient) {
  const Tensor o(1, 2, 1, {1.0, 3.0});
  const Tensor t(1, 2, 1, {0.0, 1.0});
  const LossResult l = l2_loss(o, t);
  EXPECT_DOUBLE_EQ(l.loss, 2.5);
  EXPECT_EQ(l.grad.values(), (std::vector<double>{1.0, 2.0}));
  EXPECT_THROW(l2_loss(o, Tensor::zeros(Shape{2, 1, 1})), InvalidArgument);
}

TEST(Adam, MatchesTextbookUpdate) {
  std::vector<double> lib{0.5, -1.0, 2.0};
  std::vector<double> ref = lib;
  std::vector<ParamRef> params{{"p", lib}};
  AdamState state;
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  oracle::Adam adam{1e-2};
  for (int step = 0; step < 20; ++step) {
    const std::vector<double> g{std::sin(step), 0.1 * step - 1.0, step % 2 ? 3.0 : -0.5};
    adam_step(params, ParamGrads{g}, state, cfg);
    adam.step(ref, g);
  }
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(lib[i], ref[i], 1e-15);
  EXPECT_EQ(state.step, 20);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> v{1.0, 1.0};
  std::vector<ParamRef> params{{"p", v}};
  AdamState s;
  TrainConfig cfg;
  adam_step(params, ParamGrads{{5.0, -0.01}}, s, cfg);
  EXPECT_NEAR(v[0], 1.0 - 1e-4, 1e-12);
  EXPECT_NEAR(v[1], 1.0 + 1e-4, 1e-9);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  std::vector<double> v{1.0};
  std::vector<ParamRef> params{{"c_l.b0.conv.w", v}};
  AdamState s;
  try {
    adam_step(params, ParamGrads{{std::numeric_limits<double>::quiet_NaN()}}, s, TrainConfig{});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("c_l.b0.conv.w"), std::string::npos);
  }
  EXPECT_EQ(v[0], 1.0);
}

TEST(DgfModel, ParameterOrderContextThenGuide) {
  DgfModel m(tiny_config());
  const auto params = m.parameters();
  EXPECT_EQ(params.front().name.rfind("c_l.", 0), 0u);
  EXPECT_EQ(params.back().name.rfind("f.", 0), 0u);
  DgfModel fixed(tiny_config(GuideMode::kChannelMean));
  for (const ParamRef& p : fixed.parameters()) EXPECT_EQ(p.name.rfind("c_l.", 0), 0u);
}

TEST(DgfModel, ForwardShapesAndChannelCheck) {
  DgfModel m(tiny_config());
  const Tensor in = oracle::uniform(Shape{12, 16, 3}, 1);
  const DgfForward f = dgf_forward(m, in);
  EXPECT_EQ(f.output.shape(), in.shape());
  EXPECT_EQ(f.tape.input_low.shape(), (Shape{6, 8, 3}));
  EXPECT_THROW(dgf_forward(m, oracle::uniform(Shape{12, 16, 2}, 1)), InvalidArgument);
}

// Parameter gradients of the whole pipeline against central differences of
// the loss, measured relative to the largest gradient entry.
TEST(DgfModel, EndToEndGradientMatchesFiniteDifferences) {
  for (GuideMode mode : {GuideMode::kLearned, GuideMode::kChannelMean}) {
    DgfModel m(tiny_config(mode));
    const Tensor in = oracle::uniform(Shape{10, 12, 3}, 2);
    const Tensor target = oracle::uniform(Shape{10, 12, 3}, 3);
    const DgfForward f = dgf_forward(m, in);
    const ParamGrads g = dgf_backward(m, f.tape, l2_loss(f.output, target).grad);
    double scale = 0.0;
    for (const auto& v : g) {
      for (double x : v) scale = std::max(scale, std::abs(x));
    }
    std::vector<ParamRef> params = m.parameters();
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < params[k].values.size(); ++i) {
        double& p = params[k].values[i];
        const double orig = p;
        p = orig + h;
        const double up = l2_loss(dgf_forward(m, in).output, target).loss;
        p = orig - h;
        const double down = l2_loss(dgf_forward(m, in).output, target).loss;
        p = orig;
        worst = std::max(worst, std::abs((up - down) / (2 * h) - g[k][i]));
      }
    }
    EXPECT_LE(worst, 1e-6 * scale) << (mode == GuideMode::kLearned ? "learned" : "mean");
  }
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
  DgfModel m(tiny_config());
  const std::vector<double> before = flatten(m);
  const auto data = make_toy_dataset(ToyTask::kAffine, 1, 12, 12, 3, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.steps = 5;
  const TrainReport r = train_dgf(m, data, cfg);
  ASSERT_EQ(r.loss_history.size(), 5u);
  for (double l : r.loss_history) EXPECT_EQ(l, r.loss_history.front());
  EXPECT_EQ(r.initial_loss, r.final_loss);
  EXPECT_EQ(flatten(m), before);
}

TEST(Train, ZeroStepsReportsInitialLoss) {
  DgfModel m(tiny_config());
  const auto data = make_toy_dataset(ToyTask::kAffine, 2, 12, 12, 3, 1);
  TrainConfig cfg;
  cfg.steps = 0;
  const TrainReport r = train_dgf(m, data, cfg);
  EXPECT_TRUE(r.loss_history.empty());
  EXPECT_EQ(r.initial_loss, r.final_loss);
}

TEST(Train, SameSeedsGiveIdenticalHistories) {
  auto run = [](std::uint64_t seed) {
    DgfModel m(tiny_config());
    TrainConfig cfg;
    cfg.steps = 12;
    cfg.learning_rate = 1e-3;
    cfg.seed = seed;
    return train_dgf(m, make_toy_dataset(ToyTask::kGamma, 3, 12, 12, 3, 2), cfg).loss_history;
  };
  EXPECT_EQ(run(7), run(7));
  EXPECT_NE(run(7), run(8));
}

TEST(Train, LossDecreasesOnAffineTask) {
  DgfModelConfig mc = tiny_config();
  mc.init = InitScheme::kNearIdentity;
  DgfModel m(mc);
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.learning_rate = 1e-3;
  const TrainReport r = train_dgf(m, make_toy_dataset(ToyTask::kAffine, 2, 16, 16, 3, 3), cfg);
  EXPECT_LT(r.final_loss, 0.5 * r.initial_loss);
}

TEST(Train, PostProcessModeLeavesGuideUntouched) {
  DgfModel m(tiny_config());
  std::vector<double> guide_before;
  for (const ParamRef& p : m.guide()->parameters()) guide_before.insert(guide_before.end(), p.values.begin(), p.values.end());
  const std::vector<double> all_before = flatten(m);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.learning_rate = 1e-2;
  cfg.mode = TrainMode::kPostProcess;
  train_dgf(m, make_toy_dataset(ToyTask::kAffine, 2, 12, 12, 3, 4), cfg);
  std::vector<double> guide_after;
  for (const ParamRef& p : m.guide()->parameters()) guide_after.insert(guide_after.end(), p.values.begin(), p.values.end());
  EXPECT_EQ(guide_before, guide_after);
  EXPECT_NE(flatten(m), all_before);
}

TEST(Train, RejectsInvalidConfiguration) {
  DgfModel m(tiny_config());
  const auto data = make_toy_dataset(ToyTask::kAffine, 1, 12, 12, 3, 1);
  TrainConfig cfg;
  cfg.batch_size = 2;
  EXPECT_THROW(train_dgf(m, data, cfg), InvalidArgument);
  cfg.batch_size = 1;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(train_dgf(m, data, cfg), InvalidArgument);
  cfg.learning_rate = 1e-4;
  EXPECT_THROW(train_dgf(m, {}, cfg), InvalidArgument);
  const std::vector<Sample> bad{Sample{data[0].input, Tensor::zeros(Shape{6, 6, 3})}};
  EXPECT_THROW(train_dgf(m, bad, cfg), InvalidArgument);
}

TEST(Train, DegenerateGuideIsReported) {
  DgfModelConfig mc = tiny_config(GuideMode::kChannelMean);
  mc.filter.eps = 0.0;
  DgfModel m(mc);
  // A flat input makes every guide window degenerate once eps is zero.
  const std::vector<Sample> data{Sample{Tensor::filled(Shape{12, 12, 3}, 0.5), Tensor::filled(Shape{12, 12, 3}, 0.2)}};
  TrainConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(train_dgf(m, data, cfg), std::domain_error);
}

TEST(Synthetic, ImagesInUnitRangeAndSeeded) {
  const Tensor a = make_synthetic_image(20, 30, 3, 5);
  const Tensor b = make_synthetic_image(20, 30, 3, 5);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, make_synthetic_image(20, 30, 3, 6));
  for (double v : a.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Synthetic, TaskOperators) {
  const Tensor x(1, 1, 3, {0.0, 0.5, 1.0});
  EXPECT_EQ(apply_toy_task(ToyTask::kAffine, x).values(), (std::vector<double>{0.0, 0.5, 1.0}));
  const Tensor y(1, 1, 3, {0.4, 0.4, 0.4});
  const Tensor g = apply_toy_task(ToyTask::kGamma, y);
  EXPECT_DOUBLE_EQ(g[0], std::pow(0.4, 0.8));
  EXPECT_DOUBLE_EQ(g[1], 0.4);
  EXPECT_DOUBLE_EQ(g[2], std::pow(0.4, 1.25));
  const Tensor img = make_synthetic_image(9, 9, 1, 2);
  EXPECT_EQ(apply_toy_task(ToyTask::kSmooth, img), mean_filter(img, 2));
  EXPECT_EQ(toy_task_from_string("gamma"), ToyTask::kGamma);
  EXPECT_FALSE(toy_task_from_string("sharpen").has_value());
}

}  // namespace
}  // namespace dgf
