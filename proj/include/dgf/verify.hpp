#pragma once

// Numerical oracles: central finite differences, explicit operator matrices,
// and a seeded gradient checker that compares analytic backward passes with
// finite differences.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dgf/guided_layer.hpp"
#include "dgf/tensor.hpp"

namespace dgf {

/// Default central-difference step. With doubles on O(1) inputs it balances
/// O(h^2) truncation against O(ulp / h) cancellation.
inline constexpr double kFiniteDiffStep = 1e-6;

/// |a - n| / (|a| + |n| + 1e-8)
double relative_error(double analytic, double numeric);

/// Neumaier-compensated sum of a[i] * b[i]; used for scalar probes so that
/// finite differences are not dominated by summation rounding.
double compensated_dot(const Tensor& a, const Tensor& b);

using ScalarFn = std::function<double(const Tensor&)>;
using LinearOp = std::function<Tensor(const Tensor&)>;

/// (f(x + h e_i) - f(x - h e_i)) / 2h for every element i.
/// Throws OracleError if f returns a non-finite value.
Tensor finite_diff(const ScalarFn& f, const Tensor& x, double h = kFiniteDiffStep);

/// Explicit matrix of a linear operator: column j is op(e_j), flattened.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> entries;  // row-major

  double at(std::size_t r, std::size_t c) const { return entries[r * cols + c]; }
  DenseMatrix transposed() const;
};

DenseMatrix dense_operator(const LinearOp& op, Shape in_shape);

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

struct GradcheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t argmax = 0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  double worst() const;
  void append(const GradcheckReport& other);
  /// One line per entry: "name max_rel_err idx pass|fail".
  void print(std::ostream& os) const;
};

/// A function of several tensors with its analytic vector-Jacobian product.
struct GradcheckCase {
  std::string name;
  std::vector<std::string> input_names;
  std::vector<Tensor> inputs;
  std::function<Tensor(std::span<const Tensor>)> forward;
  // Gradient of dot(probe, forward(inputs)) with respect to each input.
  std::function<std::vector<Tensor>(std::span<const Tensor>, const Tensor& probe)> backward;
  // Optional extended-precision transcription of `forward` (same math, inputs
  // and output flattened). When present the finite differences are taken on
  // it, which removes double rounding from the numeric side of the check.
  std::function<std::vector<long double>(const std::vector<std::vector<long double>>&)>
      extended_forward;
};

/// Draws a uniform [-1, 1] probe from `seed`, then compares backward(probe)
/// with central differences of dot(probe, forward(.)).
GradcheckReport gradcheck(const GradcheckCase& c, std::uint64_t seed, double tolerance,
                          double h = kFiniteDiffStep);

struct GuidedCaseSpec {
  GuidedVariant variant = GuidedVariant::kJointUpsample;
  Shape low{6, 8, 2};
  int upscale = 2;  // joint variant: high-res dims = low dims * upscale
  GuidedFilterParams params{1, 1e-2};
  bool constant_guide = false;
  bool zero_inputs = false;
};

/// Random guided-layer instance; inputs drawn uniform [0, 1] from `seed`.
GradcheckCase guided_layer_case(const GuidedCaseSpec& spec, std::uint64_t seed,
                                const BackwardOptions& options = {});

/// The randomized guided-layer instances used for acceptance: `count`
/// joint-upsampling cases cycling r in {0, 1, 2} and eps in {1e-2, 1e-4},
/// low-res up to 12x16x2, high-res twice as large.
std::vector<GuidedCaseSpec> guided_instance_specs(std::uint64_t seed, int count);

/// Conv layer (input, weights, bias) and guidance net (input, every parameter).
GradcheckCase conv_case(int kernel, int dilation, std::uint64_t seed);
GradcheckCase guidance_net_case(std::uint64_t seed, int hidden = 4, int kernel = 3);

struct SuiteOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
  int guided_instances = 24;
  BackwardOptions mutation;  // applied to every guided-layer backward
};

/// Guided-layer instances of both variants plus conv and guidance-net checks.
GradcheckReport run_gradcheck_suite(const SuiteOptions& options);

}  // namespace dgf
