#include "analysparse/batch.hpp"

#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"

namespace analysparse {

Var FistaSolver::record(Tape& tape, Var D, const Tensor& y, double eta1, Rng& rng) const {
  const Tensor q0 = draw_start(D.value().cols(), rng);
  return denoise_recorded(tape, D, y, q0, eta1, cfg_);
}

Tensor FistaSolver::reconstruct(const Tensor& D, const Tensor& y, double eta1, Rng& rng) const {
  const Tensor q0 = draw_start(D.cols(), rng);
  return denoise(D, y, q0, eta1, cfg_).w_hat;
}

int worker_count() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* env = std::getenv("ANALYSPARSE_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0 && cap < n) n = cap;
  }
  return n;
}

namespace {

struct ItemGradient {
  double loss = 0.0;
  Tensor grad;
};

ItemGradient item_gradient(const Tensor& D, const SignalPair& pair, const InnerSolver& solver,
                           double prepared, Rng rng) {
  Tape tape;
  const Var Dv = tape.input(D, true);
  const Var w_hat = solver.record(tape, Dv, pair.y, prepared, rng);
  const Var loss = tape.sqdist(w_hat, pair.w);
  ItemGradient out;
  out.loss = loss.value()[0];
  out.grad = std::move(tape.backward(loss).at(Dv.id()));
  return out;
}

// Runs body(k) for k in [0, n), in parallel when requested, and rethrows the
// first failure (lowest index) after all items finish.
template <class Body>
void for_each_item(std::size_t n, Execution exec, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  if (exec == Execution::Parallel) {
    const int workers = worker_count();
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
      try {
        body(static_cast<std::size_t>(k));
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
  } else {
    for (std::size_t k = 0; k < n; ++k) {
      try {
        body(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

BatchGradient batch_gradient(const Tensor& D, std::span<const SignalPair* const> batch,
                             const InnerSolver& solver, double prepared, const Rng& item_rng,
                             Execution exec) {
  if (batch.empty()) throw Error("batch_gradient: empty batch");
  std::vector<ItemGradient> items(batch.size());
  for_each_item(batch.size(), exec, [&](std::size_t k) {
    items[k] = item_gradient(D, *batch[k], solver, prepared, item_rng.derive(k));
  });

  BatchGradient out;
  out.grad = Tensor(D.rows(), D.cols());
  for (const auto& item : items) {
    out.loss += item.loss;
    kernel::axpy(1.0, item.grad.values(), out.grad.values());
  }
  return out;
}

BatchGradient batch_gradient_single_tape(const Tensor& D,
                                         std::span<const SignalPair* const> batch,
                                         const InnerSolver& solver, double prepared,
                                         const Rng& item_rng) {
  if (batch.empty()) throw Error("batch_gradient: empty batch");
  Tape tape;
  const Var Dv = tape.input(D, true);
  Var total;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    Rng rng = item_rng.derive(k);
    const Var w_hat = solver.record(tape, Dv, batch[k]->y, prepared, rng);
    const Var item = tape.sqdist(w_hat, batch[k]->w);
    total = k == 0 ? item : tape.add(total, item);
  }
  BatchGradient out;
  out.loss = total.value()[0];
  out.grad = std::move(tape.backward(total).at(Dv.id()));
  return out;
}

double mean_reconstruction_loss(const Tensor& D, std::span<const SignalPair> pairs,
                                const InnerSolver& solver, double prepared, const Rng& item_rng,
                                Execution exec) {
  if (pairs.empty()) return 0.0;
  std::vector<double> losses(pairs.size());
  for_each_item(pairs.size(), exec, [&](std::size_t k) {
    Rng rng = item_rng.derive(k);
    const Tensor w_hat = solver.reconstruct(D, pairs[k].y, prepared, rng);
    losses[k] = squared_norm(sub(w_hat, pairs[k].w));
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(pairs.size());
}

}  // namespace analysparse
