#pragma once

// Differentiable guided filtering layer.
//
// Each channel is an independent scalar guided filter. Within every window the
// output is modelled as a * guide + b; a and b come from windowed first and
// second moments, then are either upsampled (joint variant) or smoothed once
// more (high-resolution variant) before being applied to the full-resolution
// guide.

#include <array>
#include <optional>
#include <string_view>
#include <utility>

#include "dgf/tensor.hpp"

namespace dgf {

struct GuidedFilterParams {
  int radius = 1;
  double eps = 1e-8;
};

/// A window counts as degenerate when var + eps <= kDegenerateRelTol * mean(g^2).
/// With eps = 0 this catches zero-variance windows whose variance is only
/// rounding noise of the summed-area table.
inline constexpr double kDegenerateRelTol = 1e-9;

enum class GuidedVariant {
  kJointUpsample,  // coefficients at low resolution, bilinearly upsampled
  kHighRes,        // coefficients at full resolution, mean-filtered again
};

/// Forward intermediates the backward pass reads. For the high-resolution
/// variant the "low" fields hold the full-resolution moments, a_low is the
/// unsmoothed coefficient field and a_high the smoothed one.
struct GuidedFilterTape {
  GuidedVariant variant;
  GuidedFilterParams params;
  Tensor guide_low;    // G_l
  Tensor target_low;   // O_l
  Tensor mean_guide;   // mean(G_l)
  Tensor mean_target;  // mean(O_l)
  Tensor var_guide;    // mean(G_l^2) - mean(G_l)^2
  Tensor cov;          // mean(G_l O_l) - mean(G_l) mean(O_l)
  Tensor a_low;
  Tensor b_low;
  Tensor guide_high;   // G_h
  Tensor a_high;       // coefficient multiplied into the output
};

struct GuidedFilterGrads {
  Tensor d_target;                  // dO_l (or dO_up for the high-res variant)
  std::optional<Tensor> d_guide_low;  // dG_l; absent for the high-res variant
  Tensor d_guide_high;              // dG_h
};

struct GuidedFilterResult {
  Tensor output;
  GuidedFilterTape tape;
};

/// Joint upsampling: O_h = up(A_l) * G_h + up(b_l).
/// guide_low and target_low share a shape; guide_high has the same channel
/// count and spatial dims no smaller than the low-resolution ones.
GuidedFilterResult gf_forward_joint(const Tensor& guide_low, const Tensor& guide_high,
                                    const Tensor& target_low, const GuidedFilterParams& p);

/// Refinement at full resolution: O_h = mean(A) * G_h + mean(b).
GuidedFilterResult gf_forward_highres(const Tensor& guide_high, const Tensor& target_up,
                                      const GuidedFilterParams& p);

/// Individual additive terms of the backward chain rule, named after the
/// gradient they contribute to and the quantity they come through.
enum class BackwardTerm : int {
  kBFromOutput,          // db   = up^T(dO)
  kAFromOutput,          // dA   = up^T(dO * G_h) ...
  kAFromB,               //        - db * mean(G)
  kCovFromA,             // dCov = dA / (var + eps)
  kVarFromA,             // dVar = -dA * cov / (var + eps)^2
  kMeanTargetFromB,      // dMeanO = db ...
  kMeanTargetFromCov,    //          - dCov * mean(G)
  kTargetFromCov,        // dO_l = mean^T(dCov) * G ...
  kTargetFromMean,       //        + mean^T(dMeanO)
  kMeanGuideFromB,       // dMeanG = -db * A ...
  kMeanGuideFromCov,     //          - dCov * mean(O)
  kMeanGuideFromVar,     //          - 2 dVar * mean(G)
  kGuideFromCov,         // dG_l = mean^T(dCov) * O ...
  kGuideFromVar,         //        + 2 mean^T(dVar) * G ...
  kGuideFromMean,        //        + mean^T(dMeanG)
  kGuideHighFromOutput,  // dG_h = dO * A_h
};
inline constexpr int kBackwardTermCount = 16;

std::string_view to_string(BackwardTerm t);
std::optional<BackwardTerm> backward_term_from_string(std::string_view name);

/// Test hook: flip the sign of one chain-rule term so gradient checks can be
/// shown to detect it.
struct BackwardOptions {
  std::optional<BackwardTerm> flip_sign;
};

GuidedFilterGrads gf_backward(const GuidedFilterTape& tape, const Tensor& d_output,
                              const BackwardOptions& options = {});

}  // namespace dgf
