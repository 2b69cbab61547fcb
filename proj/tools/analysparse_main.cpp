#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "analysparse/commands.hpp"

using namespace analysparse;

int main(int argc, char** argv) {
  CLI::App app{"Learn analysis-sparsity dictionaries by differentiating through a dual FISTA denoiser"};
  app.require_subcommand(1);

  CommandOptions common;
  std::string out_dir;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "key=value configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "overrides data.seed and train.seed");
  };

  auto* gen = app.add_subcommand("gen", "generate training and validation datasets");
  add_common(gen);
  auto* train = app.add_subcommand("train", "train a dictionary and write a report directory");
  add_common(train);
  auto* baseline = app.add_subcommand("baseline-train", "train with the smoothed-l1 inner solver");
  add_common(baseline);
  auto* experiment = app.add_subcommand("experiment", "run a multi-condition experiment");
  add_common(experiment);
  std::string kind;
  experiment->add_option("--kind", kind, "noise-sweep | ablation | baseline-compare | single-train");
  experiment->add_flag("--parallel", common.parallel, "run conditions concurrently");

  DenoiseOptions dn;
  auto* denoise = app.add_subcommand("denoise", "denoise one signal with a given dictionary");
  denoise->add_option("--dict", dn.dict, "dictionary CSV (p x m)")->required();
  denoise->add_option("--signal", dn.signal, "signal CSV (one row or one column)")->required();
  denoise->add_option("--out", dn.out, "output directory")->required();
  denoise->add_option("--tol", dn.tol, "stopping tolerance");
  denoise->add_option("--max-itr1", dn.max_itr1, "iteration budget");
  denoise->add_option("--seed", dn.seed, "seed of the random start point");

  GradcheckOptions gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare AD and finite-difference gradients");
  gradcheck->add_option("--p", gc.p, "signal length");
  gradcheck->add_option("--m", gc.m, "dictionary width");
  gradcheck->add_option("--iterations", gc.iterations, "unrolled inner iterations");
  gradcheck->add_option("--seeds", gc.seeds, "number of random instances");
  gradcheck->add_option("--fd-step", gc.h, "finite-difference step");
  gradcheck->add_option("--band", gc.exclusion_band, "clamp-boundary exclusion band");
  gradcheck->add_option("--tolerance", gc.tolerance, "maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::kOk : exit_code::kConfigError;
  }

  auto finish_common = [&](CLI::App* sub) {
    if (sub->count("--out")) common.out = out_dir;
    if (sub->count("--seed")) common.seed = seed;
  };

  if (*gen) {
    finish_common(gen);
    return cmd_gen(common, std::cout, std::cerr);
  }
  if (*train) {
    finish_common(train);
    return cmd_train(common, std::cout, std::cerr);
  }
  if (*baseline) {
    finish_common(baseline);
    return cmd_baseline_train(common, std::cout, std::cerr);
  }
  if (*experiment) {
    finish_common(experiment);
    return cmd_experiment(common, kind.empty() ? std::nullopt : std::optional<std::string>(kind),
                          std::cout, std::cerr);
  }
  if (*denoise) return cmd_denoise(dn, std::cout, std::cerr);
  if (*gradcheck) return cmd_gradcheck(gc, std::cout, std::cerr);
  return exit_code::kConfigError;
}
