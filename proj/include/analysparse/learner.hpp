#pragma once

// Outer loop: projected stochastic gradient descent on the dictionary, with
// gradients obtained by differentiating through the unrolled inner solver.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "analysparse/batch.hpp"
#include "analysparse/datagen.hpp"
#include "analysparse/denoiser.hpp"
#include "analysparse/inner_solver.hpp"

namespace analysparse {

enum class Projection {
  CenterColumns,  // columns summing to zero
  None,
};

std::string to_string(Projection p);
Projection parse_projection(const std::string& text);

struct ReferenceLosses {
  double zero = 0.0;        // D = 0, i.e. w_hat = y
  double tv_lambda = 0.0;   // grid-searched lambda for lambda * D_TV
  double tv = 0.0;
  bool has_tv = false;      // only when m == p
};

struct TrainConfig {
  std::size_t m = 64;
  double eta2 = 1.0;
  std::size_t max_itr2 = 100;
  std::size_t batch_sz = 64;
  Projection projection = Projection::CenterColumns;
  DenoiseConfig denoise_cfg = training_denoise_config();
  DenoiseConfig eval_cfg = evaluation_denoise_config();
  double init_std = 1e-2;
  std::uint64_t seed = 0;
  /// Validation loss every this many iterations (0: only at the end).
  std::size_t validation_every = 0;
  /// Compute the D = 0 and lambda * D_TV validation references.
  bool compute_references = true;
  /// Precomputed references; skips recomputation when set.
  std::optional<ReferenceLosses> references;
  Execution execution = Execution::Parallel;
  /// Abort (as diverged) when a validation loss exceeds the D = 0 reference,
  /// i.e. the run is doing worse than not denoising at all.
  bool abort_worse_than_zero = false;

  void validate() const;
};

struct ValidationPoint {
  /// Number of completed outer iterations when evaluated.
  std::size_t iteration = 0;
  /// Loss with the evaluation inner budget.
  double loss = 0.0;
  /// Loss with the training inner budget.
  double loss_train_budget = 0.0;
};

struct TrainReport {
  std::string method;
  Projection projection = Projection::CenterColumns;
  double eta2 = 0.0;
  std::vector<double> train_loss;
  std::vector<ValidationPoint> val_loss;
  /// max_c |sum of column c| of the iterate after each update.
  std::vector<double> max_column_sum;
  ReferenceLosses references;
  Tensor initial_D;
  Tensor final_D;
  double wall_time = 0.0;

  double final_val_loss() const { return val_loss.empty() ? 0.0 : val_loss.back().loss; }
};

struct MatchReport {
  std::vector<std::pair<std::size_t, std::size_t>> assignment;  // (learned, reference)
  std::vector<double> cosines;
  double mean_abs_cosine = 0.0;
};

struct LambdaSearch {
  double lambda = 0.0;
  double loss = 0.0;
  std::vector<std::pair<double, double>> table;  // (lambda, loss) per grid point
};

/// Subtracts each column's mean; the Euclidean projection onto zero-sum columns.
Tensor center_columns(const Tensor& D);
double max_abs_column_sum(const Tensor& D);

/// Sum over the batch of ||w_hat(D, y_l) - w_l||^2 recorded on `tape` as one
/// scalar node. Item k draws its start point from item_rng.derive(k).
Var batch_mse(Tape& tape, Var D, std::span<const SignalPair* const> batch,
              const DenoiseConfig& cfg, double eta1, const Rng& item_rng);

/// Runs the outer loop with any inner solver. `train_solver` is
/// differentiated; `eval_solver` and `eval_train_budget` produce validation
/// losses.
std::pair<Tensor, TrainReport> train_with_solver(const Dataset& train_set, const Dataset& val_set,
                                                 const TrainConfig& cfg,
                                                 const InnerSolver& train_solver,
                                                 const InnerSolver& eval_solver,
                                                 const InnerSolver& eval_train_budget);

/// Projected AD learner with the dual-FISTA inner solver.
std::pair<Tensor, TrainReport> train(const Dataset& train_set, const Dataset& val_set,
                                     const TrainConfig& cfg);

struct Eta2Trial {
  double eta2 = 0.0;
  bool diverged = false;
  std::string error;
  double final_val_loss = 0.0;
};

struct TunedRun {
  Tensor D_hat;
  TrainReport report;
  std::vector<Eta2Trial> trials;
};

/// Trains once per outer step size and keeps the run with the lowest final
/// validation loss. Diverged candidates are recorded and skipped; with more
/// than one candidate, a run whose validation loss exceeds the D = 0
/// reference is abandoned as unstable.
TunedRun tune_eta2(const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                   const std::vector<double>& grid);

/// {2^k : k = -10, ..., 4}.
std::vector<double> default_lambda_grid();

/// Smallest-loss lambda for the dictionary lambda * D_base over `grid`; ties
/// go to the smaller lambda.
LambdaSearch grid_search_lambda(const Dataset& val_set, const Tensor& D_base,
                                const std::vector<double>& grid, const DenoiseConfig& cfg,
                                std::uint64_t seed);

ReferenceLosses reference_losses(const Dataset& val_set, std::size_t m, const DenoiseConfig& cfg,
                                 std::uint64_t seed);

/// Orders columns by the row of their largest-magnitude entry (the later row
/// on exact ties), then by descending l2 norm, then lexicographically.
Tensor sort_columns(const Tensor& D);

/// D / max|D_ij|. Throws ZeroOperatorError for D = 0.
Tensor rescale_unit(const Tensor& D);

/// Greedy pairing of learned and reference columns by descending |cosine|.
MatchReport match_columns(const Tensor& D_hat, const Tensor& D_ref);

}  // namespace analysparse
