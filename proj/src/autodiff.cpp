#include "analysparse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"

namespace analysparse {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw TapeError("Var is not bound to a tape");
  return tape_->value(*this);
}

bool Var::requires_grad() const {
  if (tape_ == nullptr) throw TapeError("Var is not bound to a tape");
  return tape_->requires_grad(*this);
}

Tape::Tape(std::size_t memory_cap_bytes) : cap_(memory_cap_bytes) {}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw TapeError("Var belongs to another tape");
  return nodes_[v.id_];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
OpKind Tape::kind(Var v) const { return node(v).op; }

Var Tape::push(Node n) {
  if (consumed_) throw TapeError("cannot record on a tape after backward");
  bytes_ += sizeof(Node) + (n.value.size() + n.target.size()) * sizeof(double);
  if (bytes_ > cap_) {
    throw UnrollBudgetError("tape memory " + std::to_string(bytes_) + " bytes exceeds cap of " +
                            std::to_string(cap_));
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value, bool requires_grad) {
  return push(Node{OpKind::Input, 0, 0, 0.0, requires_grad, std::move(value), {}});
}

Var Tape::matvec(Var A, Var x) {
  const Tensor& a = node(A).value;
  const Tensor& v = node(x).value;
  if (!v.is_vector() || a.cols() != v.rows()) throw DimensionError("matvec: shape mismatch");
  Tensor out(a.rows(), 1);
  kernel::gemv(a, v.values(), out.values());
  const bool rg = node(A).requires_grad || node(x).requires_grad;
  return push(Node{OpKind::MatVec, A.id(), x.id(), 0.0, rg, std::move(out), {}});
}

Var Tape::matvec_t(Var A, Var x) {
  const Tensor& a = node(A).value;
  const Tensor& v = node(x).value;
  if (!v.is_vector() || a.rows() != v.rows()) throw DimensionError("matvec_t: shape mismatch");
  Tensor out(a.cols(), 1);
  kernel::gemv_t(a, v.values(), out.values());
  const bool rg = node(A).requires_grad || node(x).requires_grad;
  return push(Node{OpKind::MatVecT, A.id(), x.id(), 0.0, rg, std::move(out), {}});
}

Var Tape::add(Var a, Var b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  if (!va.same_shape(vb)) throw DimensionError("add: shape mismatch");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(Node{OpKind::Add, a.id(), b.id(), 0.0, rg, std::move(out), {}});
}

Var Tape::sub(Var a, Var b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  if (!va.same_shape(vb)) throw DimensionError("sub: shape mismatch");
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(Node{OpKind::Sub, a.id(), b.id(), 0.0, rg, std::move(out), {}});
}

Var Tape::scale(Var a, double c) {
  Tensor out = node(a).value;
  for (auto& v : out.values()) v *= c;
  return push(Node{OpKind::Scale, a.id(), 0, c, node(a).requires_grad, std::move(out), {}});
}

Var Tape::clamp1(Var a) {
  Tensor out = node(a).value;
  for (auto& v : out.values()) v = std::clamp(v, -1.0, 1.0);
  return push(Node{OpKind::Clamp1, a.id(), 0, 0.0, node(a).requires_grad, std::move(out), {}});
}

Var Tape::sqdist(Var a, const Tensor& target) {
  const Tensor& va = node(a).value;
  if (!va.same_shape(target)) throw DimensionError("sqdist: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - target[i];
    acc += d * d;
  }
  return push(
      Node{OpKind::SqDist, a.id(), 0, 0.0, node(a).requires_grad, Tensor(1, 1, acc), target});
}

Var Tape::smooth_sign(Var a, double eps) {
  Tensor out = node(a).value;
  const double eps2 = eps * eps;
  for (auto& v : out.values()) v = v / std::sqrt(v * v + eps2);
  return push(Node{OpKind::SmoothSign, a.id(), 0, eps, node(a).requires_grad, std::move(out), {}});
}

GradientMap Tape::backward(Var loss, double seed) {
  const Node& root = node(loss);
  if (root.value.size() != 1) throw TapeError("backward: loss must be scalar");
  if (consumed_) throw TapeError("backward: recording already differentiated");
  consumed_ = true;

  std::vector<Tensor> adj(nodes_.size());
  auto grad_of = [&](std::size_t id) -> Tensor& {
    Tensor& g = adj[id];
    if (g.empty() && !nodes_[id].value.empty()) {
      g = Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
    }
    return g;
  };

  grad_of(loss.id())[0] = seed;

  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (!n.requires_grad || adj[k].empty()) continue;
    const Tensor& g = adj[k];
    switch (n.op) {
      case OpKind::Input:
        break;
      case OpKind::MatVec: {
        const Node& A = nodes_[n.a];
        const Node& x = nodes_[n.b];
        if (A.requires_grad) kernel::ger(1.0, g.values(), x.value.values(), grad_of(n.a));
        if (x.requires_grad) {
          Tensor tmp(x.value.rows(), 1);
          kernel::gemv_t(A.value, g.values(), tmp.values());
          kernel::axpy(1.0, tmp.values(), grad_of(n.b).values());
        }
        break;
      }
      case OpKind::MatVecT: {
        const Node& A = nodes_[n.a];
        const Node& x = nodes_[n.b];
        if (A.requires_grad) kernel::ger(1.0, x.value.values(), g.values(), grad_of(n.a));
        if (x.requires_grad) {
          Tensor tmp(x.value.rows(), 1);
          kernel::gemv(A.value, g.values(), tmp.values());
          kernel::axpy(1.0, tmp.values(), grad_of(n.b).values());
        }
        break;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        const double sign = n.op == OpKind::Add ? 1.0 : -1.0;
        if (nodes_[n.a].requires_grad) kernel::axpy(1.0, g.values(), grad_of(n.a).values());
        if (nodes_[n.b].requires_grad) kernel::axpy(sign, g.values(), grad_of(n.b).values());
        break;
      }
      case OpKind::Scale:
        kernel::axpy(n.c, g.values(), grad_of(n.a).values());
        break;
      case OpKind::Clamp1: {
        const Tensor& in = nodes_[n.a].value;
        Tensor& ga = grad_of(n.a);
        for (std::size_t i = 0; i < in.size(); ++i) {
          if (std::abs(in[i]) <= 1.0) ga[i] += g[i];
        }
        break;
      }
      case OpKind::SqDist: {
        const Tensor& in = nodes_[n.a].value;
        Tensor& ga = grad_of(n.a);
        const double s = 2.0 * g[0];
        for (std::size_t i = 0; i < in.size(); ++i) ga[i] += s * (in[i] - n.target[i]);
        break;
      }
      case OpKind::SmoothSign: {
        const Tensor& in = nodes_[n.a].value;
        Tensor& ga = grad_of(n.a);
        const double eps2 = n.c * n.c;
        for (std::size_t i = 0; i < in.size(); ++i) {
          const double r = in[i] * in[i] + eps2;
          ga[i] += g[i] * eps2 / (r * std::sqrt(r));
        }
        break;
      }
    }
  }

  GradientMap grads;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const Node& n = nodes_[k];
    if (n.op != OpKind::Input || !n.requires_grad) continue;
    grads.emplace(k, adj[k].empty() ? Tensor(n.value.rows(), n.value.cols()) : std::move(adj[k]));
  }
  return grads;
}

std::vector<const Tensor*> Tape::clamp_inputs() const {
  std::vector<const Tensor*> out;
  for (const auto& n : nodes_) {
    if (n.op == OpKind::Clamp1) out.push_back(&nodes_[n.a].value);
  }
  return out;
}

Probe probe_recordable(const RecordableFn& f, const Tensor& x) {
  Tape tape;
  const Var leaf = tape.input(x, false);
  const Var out = f(tape, leaf);
  Probe p;
  p.value = out.value()[0];
  for (const Tensor* t : tape.clamp_inputs()) p.clamp_trace.push_back(*t);
  p.tape_size = tape.size();
  return p;
}

namespace {

// -1 strictly inside, 0 within the band around the boundary, +1 strictly outside.
int boundary_state(double v, double band) {
  const double d = std::abs(v) - 1.0;
  if (d < -band) return -1;
  if (d > band) return 1;
  return 0;
}

bool crosses_boundary(const Probe& base, const Probe& other, double band) {
  if (base.tape_size != other.tape_size) return true;
  if (base.clamp_trace.size() != other.clamp_trace.size()) return true;
  for (std::size_t k = 0; k < base.clamp_trace.size(); ++k) {
    const Tensor& a = base.clamp_trace[k];
    const Tensor& b = other.clamp_trace[k];
    for (std::size_t i = 0; i < a.size(); ++i) {
      const int sa = boundary_state(a[i], band);
      if (sa != boundary_state(b[i], band)) return true;
      // Already within the band and moved by the perturbation: the one-sided
      // slopes differ there, so the central difference is meaningless.
      if (sa == 0 && a[i] != b[i]) return true;
    }
  }
  return false;
}

}  // namespace

GradCheckResult compare_gradient(const Tensor& ad_gradient,
                                 const std::function<Probe(const Tensor&)>& probe,
                                 const Tensor& x, double h, double exclusion_band) {
  if (!(h > 0.0)) throw Error("grad_check: step h must be positive");
  if (!ad_gradient.same_shape(x)) throw DimensionError("grad_check: gradient shape mismatch");

  GradCheckResult result;
  result.ad_gradient = ad_gradient;
  result.fd_gradient = Tensor(x.rows(), x.cols());
  std::vector<bool> checked(x.size(), false);

  const Probe base = probe(x);
  Tensor xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const Probe plus = probe(xp);
    xp[i] = x[i] - h;
    const Probe minus = probe(xp);
    xp[i] = x[i];
    result.fd_gradient[i] = (plus.value - minus.value) / (2.0 * h);
    if (crosses_boundary(base, plus, exclusion_band) ||
        crosses_boundary(base, minus, exclusion_band)) {
      ++result.skipped;
      continue;
    }
    checked[i] = true;
    ++result.checked;
  }

  double ad_max = 0.0;
  double fd_max = 0.0;
  double err_max = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!checked[i]) continue;
    ad_max = std::max(ad_max, std::abs(ad_gradient[i]));
    fd_max = std::max(fd_max, std::abs(result.fd_gradient[i]));
    err_max = std::max(err_max, std::abs(ad_gradient[i] - result.fd_gradient[i]));
  }
  const double denom = std::max(ad_max, fd_max);
  result.max_rel_error = denom > 0.0 ? err_max / denom : err_max;
  return result;
}

GradCheckResult grad_check(const RecordableFn& f, const Tensor& x, double h,
                           double exclusion_band) {
  Tensor ad;
  {
    Tape tape;
    const Var leaf = tape.input(x, true);
    const Var loss = f(tape, leaf);
    ad = tape.backward(loss).at(leaf.id());
  }
  return compare_gradient(
      ad, [&](const Tensor& at) { return probe_recordable(f, at); }, x, h, exclusion_band);
}

}  // namespace analysparse
