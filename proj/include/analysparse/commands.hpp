#pragma once

// Subcommands of the command-line runner, callable in-process. Each returns
// a process exit code.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "analysparse/autodiff.hpp"
#include "analysparse/baseline.hpp"
#include "analysparse/config.hpp"
#include "analysparse/datagen.hpp"
#include "analysparse/learner.hpp"

namespace analysparse {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kValidationFailure = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kDivergence = 3;
}  // namespace exit_code

enum class ExperimentKind { NoiseSweep, Ablation, BaselineCompare, SingleTrain };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& text);

/// Every resolved setting of a run.
struct ExperimentConfig {
  DataConfig data;
  std::size_t val_L = 256;
  std::optional<std::filesystem::path> train_path;  // load instead of generating
  std::optional<std::filesystem::path> val_path;
  TrainConfig train;
  std::vector<double> eta2_grid;  // empty: use train.eta2
  std::vector<double> baseline_grid;  // empty: use baseline.eta2
  SmoothedConfig baseline;
  ExperimentKind kind = ExperimentKind::SingleTrain;
  std::vector<double> sigmas = {0.05, 1.0, 4.0};
  std::filesystem::path output_dir;

  /// Resolved settings as key=value pairs, suitable for re-running.
  KeyValues to_key_values() const;
};

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  bool parallel = false;
};

/// Parses and validates. `required` lists keys that must be present.
ExperimentConfig parse_experiment_config(const KeyValues& kv, const std::vector<std::string>& required);

int cmd_gen(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_train(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_baseline_train(const CommandOptions& opts, std::ostream& log, std::ostream& err);
int cmd_experiment(const CommandOptions& opts, const std::optional<std::string>& kind,
                   std::ostream& log, std::ostream& err);

struct DenoiseOptions {
  std::filesystem::path dict;
  std::filesystem::path signal;
  std::filesystem::path out;
  double tol = 1e-4;
  std::size_t max_itr1 = 10000;
  std::uint64_t seed = 0;
};

int cmd_denoise(const DenoiseOptions& opts, std::ostream& log, std::ostream& err);

struct GradcheckOptions {
  std::size_t p = 8;
  std::size_t m = 8;
  std::size_t iterations = 50;
  std::size_t seeds = 20;
  double h = 1e-6;
  double exclusion_band = 1e-5;
  double tolerance = 1e-4;
};

/// Gradient of ||w_hat(D, y) - w||^2 with respect to D for one random
/// instance (piecewise-constant w, noisy y, Gaussian D and start point) with
/// a fixed number of inner iterations, checked against central differences.
GradCheckResult gradcheck_instance(std::size_t p, std::size_t m, std::size_t iterations,
                                   std::uint64_t seed, double h, double exclusion_band);

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& log, std::ostream& err);

/// Writes a full training report for an already-trained run.
MatchReport emit_run(const std::filesystem::path& dir, const TrainReport& report,
                     const ExperimentConfig& cfg, const std::vector<Eta2Trial>& trials);

}  // namespace analysparse
