#pragma once

// Seeded synthetic images and closed-form image operators used as training
// targets for the toy tasks.

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dgf/tensor.hpp"
#include "dgf/train.hpp"

namespace dgf {

enum class ToyTask {
  kAffine,  // clip(1.5 x - 0.25, 0, 1)
  kSmooth,  // 5x5 box smoothing
  kGamma,   // per-channel power curve, exponents 0.8 / 1.0 / 1.25 cycled over channels
};

std::optional<ToyTask> toy_task_from_string(std::string_view name);

/// Piecewise-smooth image in [0, 1]: a bilinearly interpolated coarse colour
/// field, a few constant-offset rectangles (hard edges) and +-0.01 noise.
Tensor make_synthetic_image(int height, int width, int channels, std::uint64_t seed);

Tensor apply_toy_task(ToyTask task, const Tensor& input);

std::vector<Sample> make_toy_dataset(ToyTask task, int count, int height, int width, int channels,
                                     std::uint64_t seed);

/// Desk-scale training setup shared by the train-toy command and the tests:
/// four 64x64 RGB samples, C_l run at a 32-pixel short side.
struct ToySetup {
  int samples = 4;
  int height = 64;
  int width = 64;
  DgfModelConfig model;
};

ToySetup toy_setup(std::uint64_t seed, GuideMode guide = GuideMode::kLearned);

struct ToyRun {
  DgfModel model;
  TrainReport report;
};

/// Builds the dataset and model from `seed` and trains with `config`.
ToyRun run_toy_training(ToyTask task, const TrainConfig& config, std::uint64_t seed,
                        GuideMode guide = GuideMode::kLearned);

}  // namespace dgf
