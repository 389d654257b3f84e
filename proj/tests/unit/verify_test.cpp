#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "../oracles/oracles.hpp"
#include "dgf/error.hpp"
#include "dgf/filter_ops.hpp"
#include "dgf/verify.hpp"

namespace dgf {
namespace {

TEST(RelativeError, Definition) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.0), 1.0 / (1.0 + 1e-8));
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, -2.0), 4.0 / (4.0 + 1e-8));
}

TEST(CompensatedDot, RecoversCancelledTerms) {
  const Tensor a(1, 1, 4, {1e16, 1.0, -1e16, 1.0});
  const Tensor ones = Tensor::filled(1, 1, 4, 1.0);
  EXPECT_EQ(compensated_dot(a, ones), 2.0);
}

TEST(FiniteDiff, LinearFunction) {
  const Tensor c = oracle::uniform(Shape{3, 4, 2}, 1, -1, 1);
  const Tensor x = oracle::uniform(Shape{3, 4, 2}, 2);
  const Tensor g = finite_diff([&](const Tensor& v) { return compensated_dot(c, v); }, x);
  EXPECT_LE(max_abs_diff(g, c), 1e-9);
}

TEST(FiniteDiff, Quadratic) {
  const Tensor x = oracle::uniform(Shape{4, 4, 1}, 3);
  const Tensor g = finite_diff([](const Tensor& v) { return compensated_dot(v, v); }, x, 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(relative_error(g[i], 2 * x[i]), 1e-6);
}

TEST(FiniteDiff, NonFiniteValueIsOracleError) {
  const Tensor x = Tensor::filled(1, 1, 1, 1.0);
  EXPECT_THROW(finite_diff([](const Tensor&) { return std::numeric_limits<double>::infinity(); }, x),
               OracleError);
  EXPECT_THROW(finite_diff([](const Tensor&) { return 0.0; }, x, 0.0), InvalidArgument);
}

TEST(DenseOperator, IdentityAndRowStochasticMean) {
  const DenseMatrix id = dense_operator([](const Tensor& t) { return t; }, Shape{2, 3, 1});
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(id.at(r, c), r == c ? 1.0 : 0.0);
  }
  const DenseMatrix m = dense_operator([](const Tensor& t) { return mean_filter(t, 1); }, Shape{3, 3, 1});
  ASSERT_EQ(m.rows, 9u);
  for (std::size_t r = 0; r < 9; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) s += m.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(DenseOperator, AdjointTransposeOnAllSmallShapes) {
  for (int h = 1; h <= 8; ++h) {
    for (int w = 1; w <= 8; ++w) {
      const Shape s{h, w, 1};
      const DenseMatrix f = dense_operator([](const Tensor& t) { return mean_filter(t, 1); }, s);
      const DenseMatrix a = dense_operator([](const Tensor& t) { return mean_filter_adjoint(t, 1); }, s);
      EXPECT_LE(max_abs_diff(f.transposed(), a), 1e-12);
      const int oh = 2 * h - 1 + (w % 2), ow = w + 3;
      const DenseMatrix bf = dense_operator([&](const Tensor& t) { return bilinear_resize(t, oh, ow); }, s);
      const DenseMatrix ba =
          dense_operator([&](const Tensor& t) { return bilinear_resize_adjoint(t, h, w); }, Shape{oh, ow, 1});
      EXPECT_LE(max_abs_diff(bf.transposed(), ba), 1e-12);
    }
  }
}

TEST(Gradcheck, DetectsWrongGradientAndLocalizesIt) {
  GradcheckCase c;
  c.name = "square";
  c.input_names = {"dx"};
  c.inputs = {oracle::uniform(Shape{2, 3, 1}, 4, 0.5, 1.0)};
  c.forward = [](std::span<const Tensor> in) { return in[0] * in[0]; };
  c.backward = [](std::span<const Tensor> in, const Tensor& p) {
    Tensor g = p * in[0] * 2.0;
    g[4] *= -1.0;
    return std::vector<Tensor>{g};
  };
  const GradcheckReport r = gradcheck(c, 1, 1e-5);
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.entries[0].argmax, 4u);
  EXPECT_GT(r.worst(), 0.99);
}

TEST(Gradcheck, ReportIsReproducibleAndPrintable) {
  GuidedCaseSpec spec;
  const GradcheckReport a = gradcheck(guided_layer_case(spec, 9), 10, 1e-5);
  const GradcheckReport b = gradcheck(guided_layer_case(spec, 9), 10, 1e-5);
  ASSERT_EQ(a.entries.size(), 3u);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].max_rel_err, b.entries[i].max_rel_err);
    EXPECT_EQ(a.entries[i].argmax, b.entries[i].argmax);
  }
  std::ostringstream os;
  a.print(os);
  std::istringstream is(os.str());
  std::string name, verdict;
  double err;
  std::size_t idx;
  int lines = 0;
  while (is >> name >> err >> idx >> verdict) {
    EXPECT_EQ(verdict, "pass");
    ++lines;
  }
  EXPECT_EQ(lines, 3);
}

TEST(Gradcheck, ExtendedAndDoubleOraclesAgree) {
  GuidedCaseSpec spec;
  spec.variant = GuidedVariant::kHighRes;
  GradcheckCase with_ext = guided_layer_case(spec, 3);
  GradcheckCase plain = with_ext;
  plain.extended_forward = nullptr;
  EXPECT_TRUE(gradcheck(with_ext, 1, 1e-5).passed());
  EXPECT_TRUE(gradcheck(plain, 1, 1e-3).passed());
}

TEST(InstanceSpecs, CoverRadiiAndEps) {
  const auto specs = guided_instance_specs(0, 24);
  ASSERT_EQ(specs.size(), 24u);
  bool seen[3][2] = {};
  for (const auto& s : specs) {
    EXPECT_LE(s.low.height, 12);
    EXPECT_LE(s.low.width, 16);
    EXPECT_LE(s.low.channels, 2);
    EXPECT_EQ(s.upscale, 2);
    seen[s.params.radius][s.params.eps == 1e-2 ? 0 : 1] = true;
  }
  for (auto& r : seen) EXPECT_TRUE(r[0] && r[1]);
  EXPECT_EQ(specs[0].low, (Shape{12, 16, 2}));
}

TEST(Suite, PassesAndMutationFails) {
  SuiteOptions o;
  o.guided_instances = 6;
  EXPECT_TRUE(run_gradcheck_suite(o).passed());
  o.mutation.flip_sign = BackwardTerm::kMeanGuideFromVar;
  EXPECT_FALSE(run_gradcheck_suite(o).passed());
}

}  // namespace
}  // namespace dgf
