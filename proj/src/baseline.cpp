#include "analysparse/baseline.hpp"

#include <cmath>

#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"

namespace analysparse {

void SmoothedConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("baseline.epsilon must be positive");
  if (!(inner_tol > 0.0)) throw ConfigError("baseline.inner_tol must be positive");
  if (inner_max_iter < 1) throw ConfigError("baseline.inner_max_iter must be at least 1");
  if (!(eta2 >= 0.0)) throw ConfigError("baseline.eta2 must be non-negative");
  if (batch_sz < 1) throw ConfigError("baseline.batch_sz must be at least 1");
}

double smoothed_l1(const Tensor& v, double epsilon) {
  const double eps2 = epsilon * epsilon;
  double acc = 0.0;
  for (double x : v.values()) acc += std::sqrt(x * x + eps2);
  return acc;
}

Tensor smoothed_l1_gradient(const Tensor& v, double epsilon) {
  const double eps2 = epsilon * epsilon;
  Tensor g = v;
  for (auto& x : g.values()) x = x / std::sqrt(x * x + eps2);
  return g;
}

double smoothed_objective(const Tensor& D, const Tensor& y, const Tensor& w, double epsilon) {
  return 0.5 * squared_norm(sub(y, w)) + smoothed_l1(matvec_t(D, w), epsilon);
}

Tensor smoothed_objective_gradient(const Tensor& D, const Tensor& y, const Tensor& w,
                                   double epsilon) {
  const Tensor s = smoothed_l1_gradient(matvec_t(D, w), epsilon);
  return add(sub(w, y), matvec(D, s));
}

double smoothed_step(const Tensor& D, double epsilon) {
  if (is_zero(D)) return 1.0;
  return 1.0 / (1.0 + kLipschitzInflation * spectral_norm_sq(D) / epsilon);
}

namespace {

// The gradient (w - y) + D s(D^T w) built with the tape's element-wise rules.
Tensor plain_gradient(const Tensor& D, const Tensor& y, const Tensor& w, double eps) {
  Tensor v(D.cols(), 1);
  kernel::gemv_t(D, w.values(), v.values());
  const double eps2 = eps * eps;
  for (auto& x : v.values()) x = x / std::sqrt(x * x + eps2);
  Tensor Ds(D.rows(), 1);
  kernel::gemv(D, v.values(), Ds.values());
  Tensor r = w;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= y[i];
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += Ds[i];
  return r;
}

void check_finite(const Tensor& w, std::size_t k) {
  if (!all_finite(w)) throw DivergenceError("non-finite smoothed iterate", k);
}

}  // namespace

SmoothedResult denoise_smoothed(const Tensor& D, const Tensor& y, const SmoothedConfig& cfg,
                                std::vector<double>* objective_trace) {
  cfg.validate();
  if (!y.is_vector() || y.rows() != D.rows()) throw DimensionError("denoise_smoothed: y has wrong length");
  const double step = smoothed_step(D, cfg.epsilon);
  SmoothedResult out;
  Tensor w = y;
  if (objective_trace) objective_trace->push_back(smoothed_objective(D, y, w, cfg.epsilon));
  for (std::size_t k = 0; k < cfg.inner_max_iter; ++k) {
    Tensor g = plain_gradient(D, y, w, cfg.epsilon);
    if (linf_norm(g) < cfg.inner_tol) {
      out.converged = true;
      break;
    }
    for (auto& v : g.values()) v *= step;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= g[i];
    out.iterations = k + 1;
    check_finite(w, out.iterations);
    if (objective_trace) objective_trace->push_back(smoothed_objective(D, y, w, cfg.epsilon));
  }
  if (!out.converged) {
    out.converged = linf_norm(plain_gradient(D, y, w, cfg.epsilon)) < cfg.inner_tol;
  }
  out.w_hat = std::move(w);
  return out;
}

Var denoise_smoothed_recorded(Tape& tape, Var D, const Tensor& y, double step,
                              const SmoothedConfig& cfg) {
  cfg.validate();
  const Var y_leaf = tape.input(y, false);
  Var w = y_leaf;
  for (std::size_t k = 0; k < cfg.inner_max_iter; ++k) {
    const Var s = tape.smooth_sign(tape.matvec_t(D, w), cfg.epsilon);
    const Var g = tape.add(tape.sub(w, y_leaf), tape.matvec(D, s));
    if (linf_norm(g.value()) < cfg.inner_tol) break;
    w = tape.sub(w, tape.scale(g, step));
    check_finite(w.value(), k + 1);
  }
  return w;
}

Var SmoothedSolver::record(Tape& tape, Var D, const Tensor& y, double step, Rng&) const {
  return denoise_smoothed_recorded(tape, D, y, step, cfg_);
}

Tensor SmoothedSolver::reconstruct(const Tensor& D, const Tensor& y, double, Rng&) const {
  return denoise_smoothed(D, y, cfg_).w_hat;
}

std::pair<Tensor, TrainReport> train_smoothed(const Dataset& train_set, const Dataset& val_set,
                                              const SmoothedConfig& cfg,
                                              const TrainConfig& shared) {
  cfg.validate();
  TrainConfig outer = shared;
  outer.eta2 = cfg.eta2;
  outer.max_itr2 = cfg.max_itr2;
  outer.batch_sz = cfg.batch_sz;
  outer.projection = Projection::None;
  const SmoothedSolver solver(cfg);
  return train_with_solver(train_set, val_set, outer, solver, solver, solver);
}

}  // namespace analysparse
