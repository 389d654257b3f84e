#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "../oracles/oracles.hpp"
#include "dgf/cli.hpp"
#include "dgf/filter_ops.hpp"
#include "dgf/guided_layer.hpp"
#include "dgf/io.hpp"
#include "dgf/synthetic.hpp"

namespace dgf {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "dgf");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return Outcome{code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dgf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

Tensor quantize(const Tensor& t) {
  Tensor q = t;
  for (double& v : q.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return q;
}

TEST(Cli, NoSubcommandIsUsageError) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
}

TEST(Cli, HelpSucceeds) {
  const Outcome o = run({"--help"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("upsample"), std::string::npos);
}

TEST_F(CliTest, UpsampleJointMatchesLibraryAfterQuantization) {
  const Tensor guide = quantize(make_synthetic_image(24, 32, 3, 1));
  const Tensor low = quantize(apply_toy_task(ToyTask::kGamma, bilinear_resize(guide, 12, 16)));
  save_image(path("g.ppm"), guide);
  save_image(path("l.ppm"), low);
  const Outcome o = run({"upsample", "--guide", path("g.ppm"), "--low-res-output", path("l.ppm"), "--radius", "2",
                         "--eps", "1e-4", "--out", path("o.ppm")});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  EXPECT_TRUE(o.out.empty());
  const Tensor expected =
      gf_forward_joint(bilinear_resize(guide, 12, 16), guide, low, GuidedFilterParams{2, 1e-4}).output;
  EXPECT_EQ(load_image(path("o.ppm")), quantize(expected));
}

TEST_F(CliTest, UpsampleHighResToTensorFile) {
  const Tensor guide = make_synthetic_image(16, 16, 3, 2);
  const Tensor low = make_synthetic_image(8, 8, 3, 3);
  save_tensors(path("g.dgft"), {NamedTensor{"g", guide}});
  save_tensors(path("l.dgft"), {NamedTensor{"l", low}});
  const Outcome o = run({"upsample", "--guide", path("g.dgft"), "--low-res-output", path("l.dgft"), "--variant",
                         "highres", "--eps", "1e-3", "--out", path("o.dgft")});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  const Tensor expected = gf_forward_highres(guide, bilinear_resize(low, 16, 16), GuidedFilterParams{1, 1e-3}).output;
  EXPECT_EQ(load_tensors(path("o.dgft"))[0].tensor, expected);
}

TEST_F(CliTest, UpsampleConstantLowResGivesConstantImage) {
  save_image(path("g.ppm"), make_synthetic_image(20, 20, 3, 4));
  save_image(path("l.ppm"), Tensor::filled(Shape{5, 5, 3}, 100.0 / 255.0));
  ASSERT_EQ(run({"upsample", "--guide", path("g.ppm"), "--low-res-output", path("l.ppm"), "--out", path("o.ppm")}).code,
            cli::kExitOk);
  const Tensor out = load_image(path("o.ppm"));
  for (double v : out.data()) EXPECT_EQ(v, 100.0 / 255.0);
}

TEST_F(CliTest, UpsampleGrayGuideDrivesColourOutput) {
  save_image(path("g.pgm"), make_synthetic_image(10, 10, 1, 5));
  save_image(path("l.ppm"), make_synthetic_image(5, 5, 3, 6));
  EXPECT_EQ(run({"upsample", "--guide", path("g.pgm"), "--low-res-output", path("l.ppm"), "--eps", "1e-3", "--out",
                 path("o.ppm")}).code,
            cli::kExitOk);
}

TEST_F(CliTest, UpsampleErrors) {
  save_image(path("g.ppm"), make_synthetic_image(10, 10, 3, 5));
  save_image(path("big.ppm"), make_synthetic_image(20, 20, 3, 5));
  save_tensors(path("two.dgft"), {NamedTensor{"x", Tensor::filled(Shape{5, 5, 2}, 0.5)}});
  const Outcome missing =
      run({"upsample", "--guide", path("nope.ppm"), "--low-res-output", path("g.ppm"), "--out", path("o.ppm")});
  EXPECT_EQ(missing.code, cli::kExitUsage);
  EXPECT_FALSE(missing.err.empty());
  EXPECT_EQ(run({"upsample", "--guide", path("g.ppm"), "--out", path("o.ppm")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"upsample", "--guide", path("g.ppm"), "--low-res-output", path("g.ppm"), "--radius", "x", "--out",
                 path("o.ppm")}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"upsample", "--guide", path("g.ppm"), "--low-res-output", path("two.dgft"), "--out", path("o.ppm")}).code,
            cli::kExitMismatch);
  EXPECT_EQ(run({"upsample", "--guide", path("g.ppm"), "--low-res-output", path("big.ppm"), "--out", path("o.ppm")}).code,
            cli::kExitMismatch);
  EXPECT_EQ(run({"upsample", "--guide", path("g.ppm"), "--low-res-output", path("g.ppm"), "--variant", "other",
                 "--out", path("o.ppm")}).code,
            cli::kExitUsage);
}

TEST(Cli, GradcheckPassesAndMutationFails) {
  const Outcome ok = run({"gradcheck", "--seed", "3"});
  EXPECT_EQ(ok.code, cli::kExitOk) << ok.out;
  EXPECT_NE(ok.out.find("guided.joint.i0.dG_l"), std::string::npos);
  EXPECT_EQ(ok.out.find("fail"), std::string::npos);
  const Outcome bad = run({"gradcheck", "--seed", "3", "--mutate", "guide_from_var"});
  EXPECT_EQ(bad.code, cli::kExitFailure);
  EXPECT_NE(bad.out.find(" fail"), std::string::npos);
  EXPECT_EQ(run({"gradcheck", "--mutate", "nonsense"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"gradcheck", "--seed", "3", "--mutate", "guide_from_var", "--tol", "1e30"}).code, cli::kExitOk);
}

TEST(Cli, BenchCsvShape) {
  const Outcome o = run({"bench", "--sizes", "32,48", "--radii", "1,4", "--repeat", "1"});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  std::istringstream is(o.out);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "size,radius,ms_forward,ms_backward");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
  }
  EXPECT_EQ(rows, 4);
  const Outcome single = run({"bench", "--sizes", "16", "--radii", "1", "--repeat", "1", "--variant", "joint"});
  EXPECT_EQ(single.code, cli::kExitOk);
  EXPECT_EQ(std::count(single.out.begin(), single.out.end(), '\n'), 2);
}

TEST(Cli, BenchRejectsZeroRepeat) {
  EXPECT_EQ(run({"bench", "--sizes", "16", "--repeat", "0"}).code, cli::kExitUsage);
}

TEST_F(CliTest, TrainToyZeroStepsWritesInitialCheckpoint) {
  const Outcome o = run({"train-toy", "--task", "affine", "--steps", "0", "--seed", "1", "--checkpoint", path("c.dgft")});
  EXPECT_EQ(o.code, cli::kExitFailure);
  EXPECT_EQ(o.out, "step,loss\n");
  const auto tensors = load_tensors(path("c.dgft"));
  DgfModel fresh(toy_setup(1).model);
  const auto params = fresh.parameters();
  ASSERT_EQ(tensors.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(tensors[i].name, params[i].name);
    EXPECT_TRUE(std::equal(params[i].values.begin(), params[i].values.end(), tensors[i].tensor.data().begin()));
  }
}

TEST_F(CliTest, TrainToyIsDeterministic) {
  const Outcome a = run({"train-toy", "--task", "smooth", "--steps", "3", "--seed", "2", "--lr", "1e-3"});
  const Outcome b = run({"train-toy", "--task", "smooth", "--steps", "3", "--seed", "2", "--lr", "1e-3"});
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 4);
}

TEST(Cli, TrainToyBadTask) { EXPECT_EQ(run({"train-toy", "--task", "sharpen"}).code, cli::kExitUsage); }

}  // namespace
}  // namespace dgf
