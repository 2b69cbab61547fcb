#pragma once

// Unconstrained benchmark learner: the l1 penalty of the inner problem is
// replaced by the smooth surrogate sum_i sqrt(v_i^2 + eps^2), the inner
// problem is solved by gradient descent, and the dictionary is learned by
// differentiating through that descent with no projection.

#include <cstddef>
#include <utility>
#include <vector>

#include "analysparse/autodiff.hpp"
#include "analysparse/datagen.hpp"
#include "analysparse/inner_solver.hpp"
#include "analysparse/learner.hpp"

namespace analysparse {

struct SmoothedConfig {
  double epsilon = 1e-3;
  double inner_tol = 1e-6;
  std::size_t inner_max_iter = 5000;
  double eta2 = 1.0;
  std::size_t max_itr2 = 100;
  std::size_t batch_sz = 64;

  void validate() const;
};

/// sum_i sqrt(v_i^2 + eps^2).
double smoothed_l1(const Tensor& v, double epsilon);
/// v_i / sqrt(v_i^2 + eps^2).
Tensor smoothed_l1_gradient(const Tensor& v, double epsilon);

/// 1/2 ||y - w||^2 + smoothed_l1(D^T w, eps).
double smoothed_objective(const Tensor& D, const Tensor& y, const Tensor& w, double epsilon);
Tensor smoothed_objective_gradient(const Tensor& D, const Tensor& y, const Tensor& w,
                                   double epsilon);

/// 1 / (1 + 1.01 ||D^T D||_2 / eps); 1 for D = 0.
double smoothed_step(const Tensor& D, double epsilon);

struct SmoothedResult {
  Tensor w_hat;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Gradient descent from w = y until ||grad||_inf < inner_tol or
/// inner_max_iter steps. When `objective_trace` is non-null it receives the
/// objective at every iterate, starting with w = y.
SmoothedResult denoise_smoothed(const Tensor& D, const Tensor& y, const SmoothedConfig& cfg,
                                std::vector<double>* objective_trace = nullptr);

/// Same iteration recorded on `tape`; forward values match denoise_smoothed.
Var denoise_smoothed_recorded(Tape& tape, Var D, const Tensor& y, double step,
                              const SmoothedConfig& cfg);

class SmoothedSolver final : public InnerSolver {
 public:
  explicit SmoothedSolver(SmoothedConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  double prepare(const Tensor& D) const override { return smoothed_step(D, cfg_.epsilon); }
  Var record(Tape& tape, Var D, const Tensor& y, double step, Rng& rng) const override;
  Tensor reconstruct(const Tensor& D, const Tensor& y, double step, Rng& rng) const override;
  std::string name() const override { return "smoothed-l1"; }

 private:
  SmoothedConfig cfg_;
};

/// Outer loop of `shared` (m, seed, init_std, validation cadence, references)
/// with eta2, max_itr2 and batch_sz from `cfg`, the smoothed inner solver and
/// no projection.
std::pair<Tensor, TrainReport> train_smoothed(const Dataset& train_set, const Dataset& val_set,
                                              const SmoothedConfig& cfg,
                                              const TrainConfig& shared);

}  // namespace analysparse
