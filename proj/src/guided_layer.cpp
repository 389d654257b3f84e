#include "dgf/guided_layer.hpp"

#include <cmath>
#include <string>

#include "dgf/error.hpp"
#include "dgf/filter_ops.hpp"
#include "dgf/simd.hpp"

namespace dgf {
namespace {

constexpr std::array<std::string_view, kBackwardTermCount> kTermNames = {
    "b_from_output",        "a_from_output",         "a_from_b",
    "cov_from_a",           "var_from_a",            "mean_target_from_b",
    "mean_target_from_cov", "target_from_cov",       "target_from_mean",
    "mean_guide_from_b",    "mean_guide_from_cov",   "mean_guide_from_var",
    "guide_from_cov",       "guide_from_var",        "guide_from_mean",
    "guide_high_from_output",
};

void require_params(const GuidedFilterParams& p) {
  if (p.radius < 0) throw InvalidArgument("guided filter radius must be >= 0");
  if (!(p.eps >= 0.0) || !std::isfinite(p.eps)) {
    throw InvalidArgument("guided filter eps must be finite and >= 0");
  }
}

struct Coefficients {
  Tensor mean_guide;
  Tensor mean_target;
  Tensor var_guide;
  Tensor cov;
  Tensor a;
  Tensor b;
};

// Windowed moments and the per-window least-squares fit target ~ a * guide + b.
Coefficients fit_local_linear(const Tensor& guide, const Tensor& target,
                              const GuidedFilterParams& p) {
  const int r = p.radius;
  Tensor mean_guide = mean_filter(guide, r);
  Tensor mean_target = mean_filter(target, r);
  const Tensor mean_gg = mean_filter(guide * guide, r);
  const Tensor mean_go = mean_filter(guide * target, r);

  const Shape s = guide.shape();
  std::vector<double> var(s.size()), cov(s.size()), a(s.size()), b(s.size());
  const bool degenerate = simd::active().linear_coeffs(
      mean_guide.data().data(), mean_target.data().data(), mean_gg.data().data(),
      mean_go.data().data(), p.eps, kDegenerateRelTol, var.data(), cov.data(), a.data(),
      b.data(), s.size());
  if (degenerate) {
    throw DegenerateWindow("guided filter: window with (near-)zero guidance variance and eps=" +
                           std::to_string(p.eps) + "; increase eps");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw DegenerateWindow("guided filter: non-finite linear coefficients");
    }
  }
  return Coefficients{std::move(mean_guide), std::move(mean_target),
                      Tensor(s, std::move(var)), Tensor(s, std::move(cov)),
                      Tensor(s, std::move(a)),   Tensor(s, std::move(b))};
}

Tensor apply_linear(const Tensor& a, const Tensor& guide, const Tensor& b) {
  std::vector<double> out(guide.size());
  simd::active().mul_add(a.data().data(), guide.data().data(), b.data().data(), out.data(),
                         out.size());
  return Tensor(guide.shape(), std::move(out));
}

}  // namespace

std::string_view to_string(BackwardTerm t) { return kTermNames[static_cast<int>(t)]; }

std::optional<BackwardTerm> backward_term_from_string(std::string_view name) {
  for (int i = 0; i < kBackwardTermCount; ++i) {
    if (kTermNames[i] == name) return static_cast<BackwardTerm>(i);
  }
  return std::nullopt;
}

GuidedFilterResult gf_forward_joint(const Tensor& guide_low, const Tensor& guide_high,
                                    const Tensor& target_low, const GuidedFilterParams& p) {
  require_params(p);
  require_same_shape(guide_low, target_low, "gf_forward_joint (guide_low vs target_low)");
  if (guide_high.channels() != guide_low.channels()) {
    throw InvalidArgument("gf_forward_joint: guide_high has " +
                          std::to_string(guide_high.channels()) + " channels, expected " +
                          std::to_string(guide_low.channels()));
  }
  if (guide_high.height() < guide_low.height() || guide_high.width() < guide_low.width()) {
    throw InvalidArgument("gf_forward_joint: high-resolution guide " +
                          to_string(guide_high.shape()) + " is smaller than " +
                          to_string(guide_low.shape()));
  }

  Coefficients k = fit_local_linear(guide_low, target_low, p);
  Tensor a_high = bilinear_resize(k.a, guide_high.height(), guide_high.width());
  const Tensor b_high = bilinear_resize(k.b, guide_high.height(), guide_high.width());
  Tensor output = apply_linear(a_high, guide_high, b_high);

  return GuidedFilterResult{
      std::move(output),
      GuidedFilterTape{GuidedVariant::kJointUpsample, p, guide_low, target_low,
                       std::move(k.mean_guide), std::move(k.mean_target), std::move(k.var_guide),
                       std::move(k.cov), std::move(k.a), std::move(k.b), guide_high,
                       std::move(a_high)}};
}

GuidedFilterResult gf_forward_highres(const Tensor& guide_high, const Tensor& target_up,
                                      const GuidedFilterParams& p) {
  require_params(p);
  require_same_shape(guide_high, target_up, "gf_forward_highres");

  Coefficients k = fit_local_linear(guide_high, target_up, p);
  Tensor a_high = mean_filter(k.a, p.radius);
  const Tensor b_high = mean_filter(k.b, p.radius);
  Tensor output = apply_linear(a_high, guide_high, b_high);

  return GuidedFilterResult{
      std::move(output),
      GuidedFilterTape{GuidedVariant::kHighRes, p, guide_high, target_up, std::move(k.mean_guide),
                       std::move(k.mean_target), std::move(k.var_guide), std::move(k.cov),
                       std::move(k.a), std::move(k.b), guide_high, std::move(a_high)}};
}

GuidedFilterGrads gf_backward(const GuidedFilterTape& tape, const Tensor& d_output,
                              const BackwardOptions& options) {
  require_same_shape(tape.guide_high, d_output, "gf_backward (dO_h vs O_h)");
  const int r = tape.params.radius;
  const bool joint = tape.variant == GuidedVariant::kJointUpsample;
  auto sgn = [&](BackwardTerm t) { return options.flip_sign == t ? -1.0 : 1.0; };

  const Tensor& g = tape.guide_low;
  const Tensor& o = tape.target_low;
  const Tensor& mg = tape.mean_guide;
  const Tensor& mo = tape.mean_target;

  // Adjoint of the operator taking the low-res coefficient fields to A_h, b_h.
  auto coeff_adjoint = [&](const Tensor& t) {
    return joint ? bilinear_resize_adjoint(t, g.height(), g.width()) : mean_filter_adjoint(t, r);
  };

  const Tensor db = coeff_adjoint(d_output) * sgn(BackwardTerm::kBFromOutput);
  const Tensor da = coeff_adjoint(d_output * tape.guide_high) * sgn(BackwardTerm::kAFromOutput) -
                    db * mg * sgn(BackwardTerm::kAFromB);

  const Tensor denom = add_scalar(tape.var_guide, tape.params.eps);
  const Tensor d_cov = da / denom * sgn(BackwardTerm::kCovFromA);
  const Tensor d_var = -(da * tape.cov / (denom * denom)) * sgn(BackwardTerm::kVarFromA);

  const Tensor d_mean_target = db * sgn(BackwardTerm::kMeanTargetFromB) -
                               d_cov * mg * sgn(BackwardTerm::kMeanTargetFromCov);
  const Tensor cov_back = mean_filter_adjoint(d_cov, r);
  Tensor d_target = cov_back * g * sgn(BackwardTerm::kTargetFromCov) +
                    mean_filter_adjoint(d_mean_target, r) * sgn(BackwardTerm::kTargetFromMean);

  const Tensor d_mean_guide = -(db * tape.a_low) * sgn(BackwardTerm::kMeanGuideFromB) -
                              d_cov * mo * sgn(BackwardTerm::kMeanGuideFromCov) -
                              d_var * mg * (2.0 * sgn(BackwardTerm::kMeanGuideFromVar));
  Tensor d_guide = cov_back * o * sgn(BackwardTerm::kGuideFromCov) +
                   mean_filter_adjoint(d_var, r) * g * (2.0 * sgn(BackwardTerm::kGuideFromVar)) +
                   mean_filter_adjoint(d_mean_guide, r) * sgn(BackwardTerm::kGuideFromMean);

  Tensor d_guide_high = d_output * tape.a_high * sgn(BackwardTerm::kGuideHighFromOutput);

  if (joint) {
    return GuidedFilterGrads{std::move(d_target), std::move(d_guide), std::move(d_guide_high)};
  }
  // The high-res variant reads one guide in both roles; its gradients add.
  axpy(1.0, d_guide, d_guide_high);
  return GuidedFilterGrads{std::move(d_target), std::nullopt, std::move(d_guide_high)};
}

}  // namespace dgf
