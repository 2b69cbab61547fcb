#pragma once

// Reverse-mode differentiation over the small closed set of vector operations
// that an unrolled dual-FISTA (or smoothed gradient descent) denoiser needs.
//
// A Tape records nodes in execution order. Each node keeps its forward value;
// backward rules read the values of their input nodes, which the append-only
// tape never mutates. backward() seeds the scalar loss and sweeps the nodes
// in reverse, accumulating transpose Jacobian-vector products.

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "analysparse/tensor.hpp"

namespace analysparse {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;

  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  bool requires_grad() const;
  const Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(const Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind {
  Input,
  MatVec,       // A x
  MatVecT,      // A^T x
  Add,
  Sub,
  Scale,        // c * a, c constant
  Clamp1,       // entrywise projection onto [-1, 1]
  SqDist,       // ||a - w||^2, w constant
  SmoothSign,   // a / sqrt(a^2 + eps^2), eps constant
};

/// Leaf id -> accumulated gradient, for every leaf that requires grad.
using GradientMap = std::unordered_map<std::size_t, Tensor>;

class Tape {
 public:
  static constexpr std::size_t kDefaultMemoryCap = std::size_t{1} << 30;

  explicit Tape(std::size_t memory_cap_bytes = kDefaultMemoryCap);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Tensor value, bool requires_grad);
  Var matvec(Var A, Var x);
  Var matvec_t(Var A, Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var clamp1(Var a);
  Var sqdist(Var a, const Tensor& target);
  Var smooth_sign(Var a, double eps);

  /// Seeds the scalar loss adjoint with `seed` and sweeps in reverse.
  /// A recording may be differentiated only once.
  GradientMap backward(Var loss, double seed = 1.0);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  OpKind kind(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t memory_bytes() const noexcept { return bytes_; }

  /// Values entering every Clamp1 node, in recording order. Used to detect
  /// when a perturbation moves an iterate across the projection boundary.
  std::vector<const Tensor*> clamp_inputs() const;

 private:
  struct Node {
    OpKind op;
    std::size_t a;
    std::size_t b;
    double c;
    bool requires_grad;
    Tensor value;
    Tensor target;  // SqDist only
  };

  Var push(Node node);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::size_t bytes_ = 0;
  std::size_t cap_;
  bool consumed_ = false;
};

/// Value of a recordable function together with the clamp-boundary trace it
/// produced, used by the finite-difference harness.
struct Probe {
  double value = 0.0;
  std::vector<Tensor> clamp_trace;
  std::size_t tape_size = 0;
};

/// A function that records a scalar loss on the tape from the input leaf.
using RecordableFn = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  /// max_i |ad_i - fd_i| / max(||ad||_inf, ||fd||_inf) over checked coordinates.
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  Tensor ad_gradient;
  Tensor fd_gradient;
};

/// Central differences against the AD gradient of `f` at x. A coordinate is
/// skipped when its +-h perturbation moves any clamp input into, out of, or
/// across the band [1 - band, 1 + band] in magnitude, or changes the number
/// of recorded nodes.
GradCheckResult grad_check(const RecordableFn& f, const Tensor& x, double h,
                           double exclusion_band);

/// Same comparison with the gradient supplied by the caller and values
/// obtained from `probe`. Lets tests feed a deliberately wrong gradient.
GradCheckResult compare_gradient(const Tensor& ad_gradient,
                                 const std::function<Probe(const Tensor&)>& probe,
                                 const Tensor& x, double h, double exclusion_band);

/// Records f at x on a fresh tape and returns its value and clamp trace.
Probe probe_recordable(const RecordableFn& f, const Tensor& x);

}  // namespace analysparse
