#include "analysparse/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"

namespace analysparse {

void DenoiseConfig::validate() const {
  if (!(eta1_safety > 0.0 && eta1_safety < 1.0)) throw ConfigError("eta1_safety must be in (0, 1)");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  if (max_itr1 < 1) throw ConfigError("max_itr1 must be at least 1");
}

DenoiseConfig training_denoise_config() {
  DenoiseConfig cfg;
  cfg.max_itr1 = 1000;
  cfg.record = true;
  return cfg;
}

DenoiseConfig evaluation_denoise_config() {
  DenoiseConfig cfg;
  cfg.max_itr1 = 10000;
  return cfg;
}

double step_size(const Tensor& D, const DenoiseConfig& cfg) {
  return cfg.eta1_safety / (kLipschitzInflation * spectral_norm_sq(D));
}

double next_momentum(double t) { return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t)); }

double dual_residual(const Tensor& D, const Tensor& y, const Tensor& z) {
  Tensor Dz(D.rows(), 1);
  kernel::gemv(D, z.values(), Dz.values());
  double acc = 0.0;
  for (std::size_t i = 0; i < Dz.size(); ++i) {
    const double r = Dz[i] - y[i];
    acc += r * r;
  }
  return 0.5 * acc;
}

double primal_objective(const Tensor& D, const Tensor& y, const Tensor& w) {
  return 0.5 * squared_norm(sub(y, w)) + l1_norm(matvec_t(D, w));
}

Tensor draw_start(std::size_t m, Rng& rng) { return gaussian(m, 1, 0.0, 1.0, rng); }

namespace {

// Plain arithmetic with the exact element-wise formulas used by Tape.
struct PlainOps {
  using Handle = Tensor;

  const Tensor& value(const Tensor& h) const { return h; }
  Tensor matvec(const Tensor& A, const Tensor& x) const {
    Tensor out(A.rows(), 1);
    kernel::gemv(A, x.values(), out.values());
    return out;
  }
  Tensor matvec_t(const Tensor& A, const Tensor& x) const {
    Tensor out(A.cols(), 1);
    kernel::gemv_t(A, x.values(), out.values());
    return out;
  }
  Tensor add(const Tensor& a, const Tensor& b) const {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
  }
  Tensor sub(const Tensor& a, const Tensor& b) const {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
  }
  Tensor scale(const Tensor& a, double c) const {
    Tensor out = a;
    for (auto& v : out.values()) v *= c;
    return out;
  }
  Tensor clamp1(const Tensor& a) const {
    Tensor out = a;
    for (auto& v : out.values()) v = std::clamp(v, -1.0, 1.0);
    return out;
  }
};

struct TapeOps {
  using Handle = Var;
  Tape& tape;

  const Tensor& value(Var h) const { return h.value(); }
  Var matvec(Var A, Var x) const { return tape.matvec(A, x); }
  Var matvec_t(Var A, Var x) const { return tape.matvec_t(A, x); }
  Var add(Var a, Var b) const { return tape.add(a, b); }
  Var sub(Var a, Var b) const { return tape.sub(a, b); }
  Var scale(Var a, double c) const { return tape.scale(a, c); }
  Var clamp1(Var a) const { return tape.clamp1(a); }
};

template <class Handle>
struct Iterates {
  Handle z;
  std::size_t iterations = 0;
  bool converged = false;
};

constexpr std::size_t kEnvelopeCheckEvery = 10;

template <class Ops>
Iterates<typename Ops::Handle> run_fista(const Ops& ops, typename Ops::Handle D,
                                         typename Ops::Handle y, typename Ops::Handle q0,
                                         double eta1, const DenoiseConfig& cfg,
                                         std::vector<double>* residual_trace) {
  using Handle = typename Ops::Handle;
  // Copies: tape storage may reallocate while recording.
  const Tensor D_raw = ops.value(D);
  const Tensor y_raw = ops.value(y);
  const std::size_t m = D_raw.cols();

  if (!(eta1 > 0.0) || !std::isfinite(eta1)) throw DivergenceError("invalid FISTA step size", 0);

  // Envelope for the worst-case FISTA rate, with ||q0 - z*|| <= ||q0|| + sqrt(m).
  const double radius = frobenius_norm(ops.value(q0)) + std::sqrt(static_cast<double>(m));
  const double envelope = 2.0 * radius * radius / eta1;
  double best = std::numeric_limits<double>::infinity();

  auto check = [&](const Tensor& z, std::size_t k, bool envelope_due) {
    for (double v : z.values()) {
      if (!std::isfinite(v)) throw DivergenceError("non-finite FISTA iterate", k);
    }
    if (!envelope_due && residual_trace == nullptr) return;
    const double F = dual_residual(D_raw, y_raw, z);
    if (!std::isfinite(F)) throw DivergenceError("non-finite dual objective", k);
    if (residual_trace != nullptr) residual_trace->push_back(F);
    if (!envelope_due) return;
    best = std::min(best, F);
    const double kp1 = static_cast<double>(k + 1);
    const double slack = 1e-10 * (1.0 + std::abs(best));
    if (F - best > envelope / (kp1 * kp1) + slack) {
      throw DivergenceError("FISTA left its convergence envelope; step size exceeds 1/L", k);
    }
  };

  Handle q = q0;
  Handle z_prev;
  Handle z;
  double t = 1.0;
  Iterates<Handle> out;
  for (std::size_t k = 1; k <= cfg.max_itr1; ++k) {
    Handle residual = ops.sub(ops.matvec(D, q), y);
    Handle grad = ops.matvec_t(D, residual);
    z = ops.clamp1(ops.sub(q, ops.scale(grad, eta1)));
    out.iterations = k;

    const Tensor& z_raw = ops.value(z);
    // Two consecutive iterates per window, so an alternating overshoot cycle
    // cannot hide behind a fixed check phase.
    check(z_raw, k, k % kEnvelopeCheckEvery <= 1 && k > 1);

    if (k == 1) {
      z_prev = z;  // first momentum step is a no-op
    } else if (!cfg.fixed_iterations) {
      const Tensor& zp_raw = ops.value(z_prev);
      double diff = 0.0;
      for (std::size_t i = 0; i < m; ++i) diff = std::max(diff, std::abs(z_raw[i] - zp_raw[i]));
      const double denom = linf_norm(zp_raw);
      const bool done = denom > 0.0 ? diff / denom < cfg.tol : diff < cfg.tol;
      if (done) {
        out.converged = true;
        break;
      }
    }
    if (k == cfg.max_itr1) break;

    const double t_next = next_momentum(t);
    const double beta = (t - 1.0) / t_next;
    q = ops.add(z, ops.scale(ops.sub(z, z_prev), beta));
    z_prev = z;
    t = t_next;
  }
  if (out.iterations % kEnvelopeCheckEvery > 1) {
    // Final envelope check on the returned iterate.
    const std::size_t k = out.iterations;
    const double F = dual_residual(D_raw, y_raw, ops.value(z));
    best = std::min(best, F);
    const double kp1 = static_cast<double>(k + 1);
    if (F - best > envelope / (kp1 * kp1) + 1e-10 * (1.0 + std::abs(best))) {
      throw DivergenceError("FISTA left its convergence envelope; step size exceeds 1/L", k);
    }
  }
  out.z = z;
  return out;
}

void require_conforming(const Tensor& D, const Tensor& y, const Tensor& q0) {
  if (!y.is_vector() || y.rows() != D.rows()) throw DimensionError("denoise: y has wrong length");
  if (!q0.is_vector() || q0.rows() != D.cols()) throw DimensionError("denoise: q0 has wrong length");
}

}  // namespace

FistaResult fista_dual(const Tensor& D, const Tensor& y, const Tensor& q0, double eta1,
                       const DenoiseConfig& cfg, std::vector<double>* residual_trace) {
  cfg.validate();
  require_conforming(D, y, q0);
  const PlainOps ops;
  auto it = run_fista(ops, D, y, q0, eta1, cfg, residual_trace);
  return FistaResult{std::move(it.z), it.iterations, it.converged};
}

FistaResult fista_dual(const Tensor& D, const Tensor& y, const DenoiseConfig& cfg, Rng& rng) {
  const Tensor q0 = draw_start(D.cols(), rng);
  return fista_dual(D, y, q0, step_size(D, cfg), cfg);
}

Tensor primal_from_dual(const Tensor& D, const Tensor& y, const Tensor& z_hat) {
  if (z_hat.rows() != D.cols() || y.rows() != D.rows()) {
    throw DimensionError("primal_from_dual: shape mismatch");
  }
  const PlainOps ops;
  return ops.sub(y, ops.matvec(D, z_hat));
}

namespace {

DenoiseResult finish(const Tensor& D, const Tensor& y, FistaResult fista) {
  DenoiseResult r;
  r.w_hat = primal_from_dual(D, y, fista.z_hat);
  r.z_hat = std::move(fista.z_hat);
  r.iterations = fista.iterations;
  r.converged = fista.converged;
  r.dual_objective = 0.5 * squared_norm(y) - dual_residual(D, y, r.z_hat);
  r.primal_objective = primal_objective(D, y, r.w_hat);
  return r;
}

}  // namespace

DenoiseResult denoise(const Tensor& D, const Tensor& y, const Tensor& q0, double eta1,
                      const DenoiseConfig& cfg) {
  return finish(D, y, fista_dual(D, y, q0, eta1, cfg));
}

DenoiseResult denoise(const Tensor& D, const Tensor& y, const DenoiseConfig& cfg, Rng& rng) {
  if (!y.is_vector() || y.rows() != D.rows()) throw DimensionError("denoise: y has wrong length");
  const Tensor q0 = draw_start(D.cols(), rng);
  if (is_zero(D)) {
    DenoiseResult r;
    r.w_hat = y;
    r.z_hat = Tensor(D.cols(), 1);
    r.converged = true;
    r.dual_objective = 0.0;
    r.primal_objective = 0.0;
    return r;
  }
  return denoise(D, y, q0, step_size(D, cfg), cfg);
}

Var denoise_recorded(Tape& tape, Var D, const Tensor& y, const Tensor& q0, double eta1,
                     const DenoiseConfig& cfg, RecordedInfo* info) {
  cfg.validate();
  require_conforming(D.value(), y, q0);
  const TapeOps ops{tape};
  const Var y_leaf = tape.input(y, false);
  const Var q_leaf = tape.input(q0, false);
  auto it = run_fista(ops, D, y_leaf, q_leaf, eta1, cfg, nullptr);
  if (info != nullptr) *info = RecordedInfo{it.iterations, it.converged};
  return tape.sub(y_leaf, tape.matvec(D, it.z));
}

}  // namespace analysparse
