#pragma once

// Per-item work of one outer iteration. Each item gets its own tape and its
// own derived Rng stream, so items are independent; the parallel kernel runs
// them under OpenMP and reduces in ascending item order, which makes its
// result bit-identical to the serial loop for any thread count.

#include <cstddef>
#include <span>

#include "analysparse/datagen.hpp"
#include "analysparse/inner_solver.hpp"

namespace analysparse {

enum class Execution { Serial, Parallel };

struct BatchGradient {
  /// Sum over the batch of ||w_hat - w||^2.
  double loss = 0.0;
  /// Gradient of `loss` with respect to D.
  Tensor grad;
};

/// Item k of `batch` draws its randomness from item_rng.derive(k).
BatchGradient batch_gradient(const Tensor& D, std::span<const SignalPair* const> batch,
                             const InnerSolver& solver, double prepared, const Rng& item_rng,
                             Execution exec = Execution::Parallel);

/// Reference path: the whole batch recorded on a single tape as one summed
/// loss and differentiated once.
BatchGradient batch_gradient_single_tape(const Tensor& D,
                                         std::span<const SignalPair* const> batch,
                                         const InnerSolver& solver, double prepared,
                                         const Rng& item_rng);

/// Mean over `pairs` of ||w_hat - w||^2, without recording.
double mean_reconstruction_loss(const Tensor& D, std::span<const SignalPair> pairs,
                                const InnerSolver& solver, double prepared, const Rng& item_rng,
                                Execution exec = Execution::Parallel);

/// Worker count honoring the ANALYSPARSE_THREADS cap.
int worker_count();

}  // namespace analysparse
