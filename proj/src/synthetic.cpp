#include "dgf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dgf/error.hpp"
#include "dgf/filter_ops.hpp"

namespace dgf {
namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace

std::optional<ToyTask> toy_task_from_string(std::string_view name) {
  if (name == "affine") return ToyTask::kAffine;
  if (name == "smooth") return ToyTask::kSmooth;
  if (name == "gamma") return ToyTask::kGamma;
  return std::nullopt;
}

Tensor make_synthetic_image(int height, int width, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr int kGrid = 4;
  std::vector<double> coarse(static_cast<std::size_t>(kGrid) * kGrid * channels);
  for (double& v : coarse) v = uniform(rng, 0.25, 0.75);
  Tensor img = bilinear_resize(Tensor(kGrid, kGrid, channels, std::move(coarse)), height, width);

  for (int k = 0; k < 3; ++k) {
    const int y0 = uniform_int(rng, 0, height - 1);
    const int x0 = uniform_int(rng, 0, width - 1);
    const int y1 = std::min(height, y0 + uniform_int(rng, 1, std::max(1, height / 2)));
    const int x1 = std::min(width, x0 + uniform_int(rng, 1, std::max(1, width / 2)));
    std::vector<double> offset(static_cast<std::size_t>(channels));
    for (double& o : offset) o = uniform(rng, -0.15, 0.15);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        for (int c = 0; c < channels; ++c) img(y, x, c) += offset[c];
      }
    }
  }
  for (double& v : img.data()) v = std::clamp(v + uniform(rng, -0.01, 0.01), 0.0, 1.0);
  return img;
}

Tensor apply_toy_task(ToyTask task, const Tensor& input) {
  switch (task) {
    case ToyTask::kAffine: {
      Tensor out = input;
      for (double& v : out.data()) v = std::clamp(1.5 * v - 0.25, 0.0, 1.0);
      return out;
    }
    case ToyTask::kSmooth:
      return mean_filter(input, 2);
    case ToyTask::kGamma: {
      static constexpr double kExponents[] = {0.8, 1.0, 1.25};
      Tensor out = input;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double e = kExponents[(i % static_cast<std::size_t>(out.channels())) % 3];
        out[i] = std::pow(std::max(out[i], 0.0), e);
      }
      return out;
    }
  }
  throw InvalidArgument("unknown toy task");
}

std::vector<Sample> make_toy_dataset(ToyTask task, int count, int height, int width, int channels,
                                     std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("make_toy_dataset: count must be >= 1");
  std::vector<Sample> data;
  data.reserve(static_cast<std::size_t>(count));
  std::mt19937_64 seeds(seed);
  for (int i = 0; i < count; ++i) {
    Tensor input = make_synthetic_image(height, width, channels, seeds());
    Tensor target = apply_toy_task(task, input);
    data.push_back(Sample{std::move(input), std::move(target)});
  }
  return data;
}

ToySetup toy_setup(std::uint64_t seed, GuideMode guide) {
  ToySetup setup;
  setup.model.context_width = 16;
  setup.model.low_res_short_side = 32;
  setup.model.guide_mode = guide;
  setup.model.seed = seed + 1;
  return setup;
}

ToyRun run_toy_training(ToyTask task, const TrainConfig& config, std::uint64_t seed, GuideMode guide) {
  const ToySetup setup = toy_setup(seed, guide);
  const std::vector<Sample> data = make_toy_dataset(task, setup.samples, setup.height, setup.width,
                                                    setup.model.in_channels, seed);
  DgfModel model(setup.model);
  TrainReport report = train_dgf(model, data, config);
  return ToyRun{std::move(model), std::move(report)};
}

}  // namespace dgf
