#pragma once

#include <string>

#include "analysparse/autodiff.hpp"
#include "analysparse/denoiser.hpp"
#include "analysparse/rng.hpp"
#include "analysparse/tensor.hpp"

namespace analysparse {

/// Reconstruction map w_hat(D, y) that the outer loop differentiates.
/// Implementations are stateless, so one instance can serve many threads.
class InnerSolver {
 public:
  virtual ~InnerSolver() = default;

  /// Constant shared by every item of one outer iteration, such as a step
  /// size derived from the current dictionary. Not differentiated.
  virtual double prepare(const Tensor& D) const = 0;

  /// Records w_hat(D, y) on `tape` with D a differentiable node.
  virtual Var record(Tape& tape, Var D, const Tensor& y, double prepared, Rng& rng) const = 0;

  /// Plain evaluation of w_hat(D, y).
  virtual Tensor reconstruct(const Tensor& D, const Tensor& y, double prepared, Rng& rng) const = 0;

  virtual std::string name() const = 0;
};

/// Dual FISTA with a fresh N(0, 1) start drawn from the item stream.
class FistaSolver final : public InnerSolver {
 public:
  explicit FistaSolver(DenoiseConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  double prepare(const Tensor& D) const override { return step_size(D, cfg_); }
  Var record(Tape& tape, Var D, const Tensor& y, double eta1, Rng& rng) const override;
  Tensor reconstruct(const Tensor& D, const Tensor& y, double eta1, Rng& rng) const override;
  std::string name() const override { return "fista-dual"; }

  const DenoiseConfig& config() const { return cfg_; }

 private:
  DenoiseConfig cfg_;
};

}  // namespace analysparse
