#pragma once

// Analysis-sparsity denoising
//
//     w_hat = argmin_w  1/2 ||y - w||^2 + ||D^T w||_1
//
// solved through its dual, a least-squares problem over the l-infinity unit
// ball,
//
//     z_hat = argmin_{||z||_inf <= 1}  1/2 ||D z - y||^2,   w_hat = y - D z_hat,
//
// with FISTA. The iteration exists in a plain form and a tape-recorded form;
// both execute the same floating-point operations in the same order.

#include <cstddef>
#include <vector>

#include "analysparse/autodiff.hpp"
#include "analysparse/rng.hpp"
#include "analysparse/tensor.hpp"

namespace analysparse {

struct DenoiseConfig {
  double eta1_safety = 0.95;
  double tol = 1e-4;
  std::size_t max_itr1 = 10000;
  bool record = false;
  /// Run exactly max_itr1 iterations, ignoring tol.
  bool fixed_iterations = false;

  void validate() const;
};

/// Inner settings used while training (bounded unroll depth).
DenoiseConfig training_denoise_config();
/// Inner settings used for validation and reference losses.
DenoiseConfig evaluation_denoise_config();

/// Factor applied to the power-iteration estimate of ||D^T D||_2 before use.
inline constexpr double kLipschitzInflation = 1.01;

struct FistaResult {
  Tensor z_hat;
  std::size_t iterations = 0;
  bool converged = false;
};

struct DenoiseResult {
  Tensor w_hat;
  Tensor z_hat;
  std::size_t iterations = 0;
  bool converged = false;
  /// Dual value 1/2 ||y||^2 - 1/2 ||D z_hat - y||^2 (a lower bound on the primal).
  double dual_objective = 0.0;
  /// 1/2 ||y - w_hat||^2 + ||D^T w_hat||_1.
  double primal_objective = 0.0;

  double duality_gap() const { return primal_objective - dual_objective; }
};

/// eta1_safety / (1.01 * ||D^T D||_2). Throws ZeroOperatorError for D = 0.
double step_size(const Tensor& D, const DenoiseConfig& cfg);

/// t_{i+1} = (1 + sqrt(1 + 4 t_i^2)) / 2.
double next_momentum(double t);

/// 1/2 ||D z - y||^2, the function FISTA minimizes over the box.
double dual_residual(const Tensor& D, const Tensor& y, const Tensor& z);
double primal_objective(const Tensor& D, const Tensor& y, const Tensor& w);

/// FISTA on the dual from start point q0 with step eta1. When `residual_trace`
/// is non-null it receives 1/2 ||D z_k - y||^2 after every iteration.
///
/// Throws DivergenceError if an iterate is non-finite or the objective breaks
/// the FISTA worst-case bound F(z_k) - F* <= 2 ||q0 - z*||^2 / (eta1 (k+1)^2),
/// which cannot happen for a step below 1/L.
FistaResult fista_dual(const Tensor& D, const Tensor& y, const Tensor& q0, double eta1,
                       const DenoiseConfig& cfg, std::vector<double>* residual_trace = nullptr);

/// Draws q0 iid N(0, 1) from rng and uses step_size(D, cfg).
FistaResult fista_dual(const Tensor& D, const Tensor& y, const DenoiseConfig& cfg, Rng& rng);

/// w = y - D z.
Tensor primal_from_dual(const Tensor& D, const Tensor& y, const Tensor& z_hat);

/// Full inner solve with diagnostics. D = 0 is allowed and returns w_hat = y.
DenoiseResult denoise(const Tensor& D, const Tensor& y, const DenoiseConfig& cfg, Rng& rng);
DenoiseResult denoise(const Tensor& D, const Tensor& y, const Tensor& q0, double eta1,
                      const DenoiseConfig& cfg);

struct RecordedInfo {
  std::size_t iterations = 0;
  bool converged = false;
};

/// Records the FISTA iteration and the primal recovery on `tape`, with D as
/// a differentiable node. Stopping decisions read raw values and are not
/// differentiated. The forward values match denoise() bit for bit for the
/// same q0 and eta1.
Var denoise_recorded(Tape& tape, Var D, const Tensor& y, const Tensor& q0, double eta1,
                     const DenoiseConfig& cfg, RecordedInfo* info = nullptr);

/// Draws a start point iid N(0, 1).
Tensor draw_start(std::size_t m, Rng& rng);

}  // namespace analysparse
