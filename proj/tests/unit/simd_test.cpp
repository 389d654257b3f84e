#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "../oracles/oracles.hpp"
#include "dgf/filter_ops.hpp"
#include "dgf/guided_layer.hpp"
#include "dgf/simd.hpp"
#include "dgf/synthetic.hpp"
#include "dgf/train.hpp"

namespace dgf {
namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (simd::avx2_kernels() == nullptr || !simd::cpu_supports_avx2()) GTEST_SKIP() << "AVX2 unavailable";
    scalar_ = &simd::scalar_kernels();
    avx2_ = simd::avx2_kernels();
  }
  void TearDown() override { simd::set_active(simd::cpu_supports_avx2() ? simd::Isa::kAvx2 : simd::Isa::kScalar); }

  const simd::Kernels* scalar_ = nullptr;
  const simd::Kernels* avx2_ = nullptr;
};

// Lengths cover empty input, pure tails, and several full vectors plus tails;
// offsets make the pointers unaligned.
constexpr std::size_t kLengths[] = {0, 1, 3, 4, 5, 8, 13, 64, 101};

TEST_F(SimdEquivalence, BinaryKernelsBitwiseEqual) {
  using Fn = void (*)(const double*, const double*, double*, std::size_t);
  for (auto member : {&simd::Kernels::add, &simd::Kernels::sub, &simd::Kernels::mul, &simd::Kernels::div}) {
    for (std::size_t n : kLengths) {
      const auto a = random_vec(n + 1, n);
      const auto b = random_vec(n + 1, n + 100, 0.5, 2.0);
      std::vector<double> o1(n + 1), o2(n + 1);
      Fn f1 = scalar_->*member, f2 = avx2_->*member;
      f1(a.data() + 1, b.data() + 1, o1.data() + 1, n);
      f2(a.data() + 1, b.data() + 1, o2.data() + 1, n);
      EXPECT_TRUE(bitwise_equal(o1, o2)) << "n=" << n;
    }
  }
}

TEST_F(SimdEquivalence, ScaleAxpyDotBitwiseEqual) {
  for (std::size_t n : kLengths) {
    const auto a = random_vec(n + 1, 7 * n + 1);
    const auto b = random_vec(n + 1, 7 * n + 2);
    std::vector<double> o1(n + 1), o2(n + 1);
    scalar_->scale(a.data() + 1, 0.37, o1.data() + 1, n);
    avx2_->scale(a.data() + 1, 0.37, o2.data() + 1, n);
    EXPECT_TRUE(bitwise_equal(o1, o2));

    std::vector<double> y1 = b, y2 = b;
    scalar_->axpy(-1.3, a.data() + 1, y1.data() + 1, n);
    avx2_->axpy(-1.3, a.data() + 1, y2.data() + 1, n);
    EXPECT_TRUE(bitwise_equal(y1, y2));

    const double d1 = scalar_->dot(a.data() + 1, b.data() + 1, n);
    const double d2 = avx2_->dot(a.data() + 1, b.data() + 1, n);
    EXPECT_EQ(std::memcmp(&d1, &d2, sizeof d1), 0) << "n=" << n;
  }
}

TEST_F(SimdEquivalence, BoxDiffAndMulAddBitwiseEqual) {
  for (std::size_t n : kLengths) {
    const auto s11 = random_vec(n, 1), s01 = random_vec(n, 2), s10 = random_vec(n, 3), s00 = random_vec(n, 4);
    std::vector<double> o1(n), o2(n);
    scalar_->box_diff(s11.data(), s01.data(), s10.data(), s00.data(), o1.data(), n);
    avx2_->box_diff(s11.data(), s01.data(), s10.data(), s00.data(), o2.data(), n);
    EXPECT_TRUE(bitwise_equal(o1, o2));
    scalar_->mul_add(s11.data(), s01.data(), s10.data(), o1.data(), n);
    avx2_->mul_add(s11.data(), s01.data(), s10.data(), o2.data(), n);
    EXPECT_TRUE(bitwise_equal(o1, o2));
  }
}

TEST_F(SimdEquivalence, LinearCoeffsBitwiseEqualIncludingDegenerateFlag) {
  for (std::size_t n : kLengths) {
    const auto mg = random_vec(n, 11, 0, 1), mo = random_vec(n, 12, 0, 1);
    auto mgg = random_vec(n, 13, 0, 1);
    const auto mgo = random_vec(n, 14, 0, 1);
    for (std::size_t i = 0; i < n; ++i) mgg[i] += mg[i] * mg[i];
    for (double eps : {1e-2, 0.0}) {
      std::vector<double> v1(n), c1(n), a1(n), b1(n), v2(n), c2(n), a2(n), b2(n);
      const bool d1 = scalar_->linear_coeffs(mg.data(), mo.data(), mgg.data(), mgo.data(), eps, 1e-9,
                                             v1.data(), c1.data(), a1.data(), b1.data(), n);
      const bool d2 = avx2_->linear_coeffs(mg.data(), mo.data(), mgg.data(), mgo.data(), eps, 1e-9,
                                           v2.data(), c2.data(), a2.data(), b2.data(), n);
      EXPECT_EQ(d1, d2);
      EXPECT_TRUE(bitwise_equal(v1, v2) && bitwise_equal(c1, c2) && bitwise_equal(a1, a2) && bitwise_equal(b1, b2));
    }
  }
  // A zero-variance window in the tail and in the vector body must both be flagged.
  for (std::size_t pos : {1u, 6u}) {
    std::vector<double> mg(7, 0.5), mo(7, 0.5), mgg(7, 0.5), mgo(7, 0.25), v(7), c(7), a(7), b(7);
    mgg[pos] = 0.25;
    EXPECT_TRUE(avx2_->linear_coeffs(mg.data(), mo.data(), mgg.data(), mgo.data(), 0.0, 1e-9, v.data(),
                                     c.data(), a.data(), b.data(), 7));
    EXPECT_TRUE(scalar_->linear_coeffs(mg.data(), mo.data(), mgg.data(), mgo.data(), 0.0, 1e-9, v.data(),
                                       c.data(), a.data(), b.data(), 7));
  }
}

TEST_F(SimdEquivalence, GuidedFilterPipelineBitwiseEqual) {
  const Tensor gl = oracle::uniform(Shape{19, 23, 3}, 1);
  const Tensor ol = oracle::uniform(Shape{19, 23, 3}, 2);
  const Tensor gh = oracle::uniform(Shape{38, 46, 3}, 3);
  const Tensor d = oracle::uniform(Shape{38, 46, 3}, 4, -1, 1);
  auto run = [&](simd::Isa isa) {
    EXPECT_TRUE(simd::set_active(isa));
    const GuidedFilterResult f = gf_forward_joint(gl, gh, ol, GuidedFilterParams{2, 1e-3});
    const GuidedFilterGrads g = gf_backward(f.tape, d);
    const GuidedFilterResult fh = gf_forward_highres(gh, d * d, GuidedFilterParams{3, 1e-3});
    return std::vector<Tensor>{f.output, g.d_target, *g.d_guide_low, g.d_guide_high, fh.output,
                               box_sum(gh, 5)};
  };
  const auto s = run(simd::Isa::kScalar);
  const auto v = run(simd::Isa::kAvx2);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(s[i].values(), v[i].values())) << "output " << i;
  }
}

TEST_F(SimdEquivalence, TrainingLossHistoryBitwiseEqual) {
  auto run = [](simd::Isa isa) {
    simd::set_active(isa);
    DgfModelConfig mc;
    mc.context_width = 4;
    mc.guide_hidden = 4;
    mc.low_res_short_side = 8;
    DgfModel model(mc);
    TrainConfig tc;
    tc.steps = 5;
    tc.learning_rate = 1e-3;
    return train_dgf(model, make_toy_dataset(ToyTask::kAffine, 2, 16, 16, 3, 5), tc).loss_history;
  };
  EXPECT_TRUE(bitwise_equal(run(simd::Isa::kScalar), run(simd::Isa::kAvx2)));
}

TEST(SimdDispatch, ScalarAlwaysSelectable) {
  const simd::Isa before = simd::active().isa;
  EXPECT_TRUE(simd::set_active(simd::Isa::kScalar));
  EXPECT_EQ(simd::active().isa, simd::Isa::kScalar);
  EXPECT_EQ(simd::active().name, simd::scalar_kernels().name);
  simd::set_active(before);
}

TEST(SimdDispatch, DefaultsToBestAvailable) {
  if (simd::avx2_kernels() != nullptr && simd::cpu_supports_avx2()) {
    EXPECT_EQ(simd::active().isa, simd::Isa::kAvx2);
  } else {
    EXPECT_EQ(simd::active().isa, simd::Isa::kScalar);
    EXPECT_FALSE(simd::set_active(simd::Isa::kAvx2));
  }
}

}  // namespace
}  // namespace dgf
