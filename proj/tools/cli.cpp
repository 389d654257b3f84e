#include "dgf/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <random>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "dgf/error.hpp"
#include "dgf/filter_ops.hpp"
#include "dgf/guided_layer.hpp"
#include "dgf/io.hpp"
#include "dgf/simd.hpp"
#include "dgf/synthetic.hpp"
#include "dgf/train.hpp"
#include "dgf/verify.hpp"

namespace dgf::cli {
namespace {

struct UpsampleArgs {
  std::string guide;
  std::string low_res_output;
  int radius = 1;
  double eps = 1e-8;
  std::string variant = "joint";
  std::string out;
};

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double tol = 1e-5;
  std::string mutate;
};

struct BenchArgs {
  std::vector<int> sizes{512, 1024, 2048};
  std::vector<int> radii{1, 8, 32};
  int repeat = 5;
  int threads = 1;
  std::string variant = "highres";
};

struct TrainArgs {
  std::string task = "affine";
  int steps = 500;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string guide = "learned";
};

class Mismatch : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool wants_tensor_file(const std::string& path) {
  const std::string ext = std::filesystem::path(path).extension().string();
  return ext == ".dgft" || ext == ".bin";
}

Tensor repeat_channels(const Tensor& t, int channels) {
  Tensor out = Tensor::zeros(Shape{t.height(), t.width(), channels});
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      for (int c = 0; c < channels; ++c) out(y, x, c) = t(y, x, 0);
    }
  }
  return out;
}

int cmd_upsample(const UpsampleArgs& a, std::ostream& err) {
  Tensor guide = load_tensor_or_image(a.guide);
  const Tensor low = load_tensor_or_image(a.low_res_output);

  if (guide.channels() == 1 && low.channels() > 1) guide = repeat_channels(guide, low.channels());
  if (guide.channels() != low.channels()) {
    throw Mismatch("guide has " + std::to_string(guide.channels()) + " channels, low-res output has " +
                   std::to_string(low.channels()));
  }
  if (low.height() > guide.height() || low.width() > guide.width()) {
    throw Mismatch("low-res output " + to_string(low.shape()) + " is larger than guide " +
                   to_string(guide.shape()));
  }

  const GuidedFilterParams params{a.radius, a.eps};
  Tensor result = Tensor::filled(1, 1, 1, 0.0);
  if (a.variant == "joint") {
    const Tensor guide_low = bilinear_resize(guide, low.height(), low.width());
    result = gf_forward_joint(guide_low, guide, low, params).output;
  } else {
    result = gf_forward_highres(guide, bilinear_resize(low, guide.height(), guide.width()), params).output;
  }

  if (wants_tensor_file(a.out)) {
    save_tensors(a.out, {NamedTensor{"output", std::move(result)}});
  } else {
    if (result.channels() != 1 && result.channels() != 3) {
      throw Mismatch("cannot write a " + std::to_string(result.channels()) +
                     "-channel image; use a .dgft output");
    }
    save_image(a.out, result);
  }
  err << "wrote " << a.out << " (" << to_string(guide.shape()) << ")\n";
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  SuiteOptions options;
  options.seed = a.seed;
  options.tolerance = a.tol;
  if (!a.mutate.empty()) options.mutation.flip_sign = backward_term_from_string(a.mutate);
  const GradcheckReport report = run_gradcheck_suite(options);
  report.print(out);
  err << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << ": " << report.entries.size()
      << " checks, worst relative error " << report.worst() << "\n";
  return report.passed() ? kExitOk : kExitFailure;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Tensor random_image(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(size) * size * 3);
  for (double& x : v) x = u(rng);
  return Tensor(size, size, 3, std::move(v));
}

// Keep freed blocks in the heap so every size is timed with warm memory;
// otherwise glibc maps (and the kernel zero-faults) only the large buffers.
void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  if (a.threads > 1) err << "note: kernels are single-threaded; --threads " << a.threads << " has no effect\n";
  retain_freed_memory();
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  out << "size,radius,ms_forward,ms_backward\n";
  for (int size : a.sizes) {
    const Tensor guide = random_image(size, 1);
    const Tensor target = random_image(size, 2);
    const Tensor d_out = random_image(size, 3);
    const bool joint = a.variant == "joint";
    const Tensor guide_low = joint ? bilinear_resize(guide, size / 4, size / 4) : guide;
    const Tensor target_low = joint ? bilinear_resize(target, size / 4, size / 4) : target;
    for (int r : a.radii) {
      const GuidedFilterParams params{r, 1e-2};
      std::vector<double> fwd_ms, bwd_ms;
      // Iteration 0 is an untimed warm-up.
      for (int k = 0; k <= a.repeat; ++k) {
        auto t0 = clock::now();
        GuidedFilterResult res = joint ? gf_forward_joint(guide_low, guide, target_low, params)
                                       : gf_forward_highres(guide, target, params);
        const double fwd = ms_since(t0);
        t0 = clock::now();
        const GuidedFilterGrads g = gf_backward(res.tape, d_out);
        const double bwd = ms_since(t0);
        if (k == 0) continue;
        fwd_ms.push_back(fwd);
        bwd_ms.push_back(bwd);
      }
      out << size << ',' << r << ',' << std::fixed << std::setprecision(3) << median(fwd_ms) << ','
          << median(bwd_ms) << '\n'
          << std::defaultfloat;
      out.flush();
    }
  }
  err << "bench: variant " << a.variant << ", kernels " << simd::active().name << "\n";
  return kExitOk;
}

int cmd_train_toy(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const ToyTask task = *toy_task_from_string(a.task);
  TrainConfig config;
  config.learning_rate = a.lr;
  config.steps = a.steps;
  config.seed = a.seed;
  const GuideMode guide = a.guide == "mean" ? GuideMode::kChannelMean : GuideMode::kLearned;
  ToyRun run = run_toy_training(task, config, a.seed, guide);

  out << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < run.report.loss_history.size(); ++i) {
    out << i << ',' << run.report.loss_history[i] << '\n';
  }
  out << std::defaultfloat;

  if (!a.checkpoint.empty()) {
    std::vector<NamedTensor> tensors = model_tensors(run.model);
    if (!run.report.loss_history.empty()) {
      tensors.push_back(NamedTensor{"loss_history", Tensor(1, 1, static_cast<int>(run.report.loss_history.size()),
                                                           run.report.loss_history)});
    }
    save_tensors(a.checkpoint, tensors);
  }

  const double ratio = run.report.final_loss / run.report.initial_loss;
  err << "train-toy " << a.task << ": initial loss " << run.report.initial_loss << ", final loss "
      << run.report.final_loss << " (ratio " << ratio << ")\n";
  return run.report.final_loss <= 0.1 * run.report.initial_loss ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Differentiable guided filtering: joint upsampling, gradient checks, benchmarks, toy training"};
  app.name(args.empty() ? "dgf" : std::filesystem::path(args[0]).filename().string());
  app.require_subcommand(1);

  UpsampleArgs up;
  auto* upsample = app.add_subcommand("upsample", "Upsample a low-resolution output under a high-resolution guide");
  upsample->add_option("--guide", up.guide, "High-resolution guide (PPM/PGM or DGFT)")->required();
  upsample->add_option("--low-res-output", up.low_res_output, "Low-resolution output (PPM/PGM or DGFT)")->required();
  upsample->add_option("--radius", up.radius, "Window radius")->capture_default_str()->check(CLI::NonNegativeNumber);
  upsample->add_option("--eps", up.eps, "Regularization epsilon")->capture_default_str()->check(CLI::NonNegativeNumber);
  upsample->add_option("--variant", up.variant, "joint or highres")->capture_default_str()->check(CLI::IsMember({"joint", "highres"}));
  upsample->add_option("--out", up.out, "Output image (.dgft/.bin for a tensor file)")->required();

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
  gradcheck->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  gradcheck->add_option("--tol", gc.tol, "Maximum relative error")->capture_default_str()->check(CLI::PositiveNumber);
  std::vector<std::string> terms;
  for (int t = 0; t < kBackwardTermCount; ++t) terms.emplace_back(to_string(static_cast<BackwardTerm>(t)));
  gradcheck->add_option("--mutate", gc.mutate, "Flip the sign of one backward term (self-test)")
      ->check(CLI::IsMember(terms))
      ->group("");

  BenchArgs bn;
  auto* bench = app.add_subcommand("bench", "Time forward and backward passes; CSV to stdout");
  bench->add_option("--sizes", bn.sizes, "Comma-separated square sizes")->delimiter(',')->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--radii", bn.radii, "Comma-separated radii")->delimiter(',')->capture_default_str()->check(CLI::NonNegativeNumber);
  bench->add_option("--repeat", bn.repeat, "Runs per configuration (median reported)")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--threads", bn.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  bench->add_option("--variant", bn.variant, "joint or highres")->capture_default_str()->check(CLI::IsMember({"joint", "highres"}));

  TrainArgs tr;
  auto* train = app.add_subcommand("train-toy", "Train on a synthetic task; loss CSV to stdout");
  train->add_option("--task", tr.task, "affine, smooth or gamma")->capture_default_str()->check(CLI::IsMember({"affine", "smooth", "gamma"}));
  train->add_option("--steps", tr.steps, "Adam steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  train->add_option("--checkpoint", tr.checkpoint, "Write parameters to this DGFT file");
  train->add_option("--guide", tr.guide, "learned or mean (fixed channel-mean guide)")->capture_default_str()->check(CLI::IsMember({"learned", "mean"}));

  std::vector<const char*> argv;
  const std::string fallback = "dgf";
  argv.push_back(args.empty() ? fallback.c_str() : args[0].c_str());
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*upsample) return cmd_upsample(up, err);
    if (*gradcheck) return cmd_gradcheck(gc, out, err);
    if (*bench) return cmd_bench(bn, out, err);
    return cmd_train_toy(tr, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Mismatch& e) {
    err << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace dgf::cli
