#include "analysparse/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "analysparse/errors.hpp"

namespace analysparse {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

constexpr std::uint64_t kPowerSeed = 0x5EED;

}  // namespace

namespace kernel {

void gemv(const Tensor& A, std::span<const double> x, std::span<double> out) {
  const std::size_t rows = A.rows();
  const std::size_t cols = A.cols();
  const double* a = A.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

void gemv_t(const Tensor& A, std::span<const double> x, std::span<double> out) {
  const std::size_t rows = A.rows();
  const std::size_t cols = A.cols();
  const double* a = A.values().data();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = a + r * cols;
    const double xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * xr;
  }
}

void ger(double alpha, std::span<const double> u, std::span<const double> v, Tensor& A) {
  const std::size_t cols = A.cols();
  double* a = A.values().data();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    const double ur = alpha * u[r];
    double* row = a + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ur * v[c];
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace kernel

Tensor matmul(const Tensor& A, const Tensor& B) {
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(A.cols()) + " and " +
                         std::to_string(B.rows()));
  }
  Tensor C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    for (std::size_t k = 0; k < A.cols(); ++k) {
      const double aik = A(i, k);
      for (std::size_t j = 0; j < B.cols(); ++j) C(i, j) += aik * B(k, j);
    }
  }
  return C;
}

Tensor transpose(const Tensor& A) {
  Tensor T(A.cols(), A.rows());
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) T(c, r) = A(r, c);
  return T;
}

Tensor matvec(const Tensor& A, const Tensor& x) {
  if (!x.is_vector() || A.cols() != x.rows()) throw DimensionError("matvec: shape mismatch");
  Tensor out(A.rows(), 1);
  kernel::gemv(A, x.values(), out.values());
  return out;
}

Tensor matvec_t(const Tensor& A, const Tensor& x) {
  if (!x.is_vector() || A.rows() != x.rows()) throw DimensionError("matvec_t: shape mismatch");
  Tensor out(A.cols(), 1);
  kernel::gemv_t(A, x.values(), out.values());
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (auto& v : out.values()) v *= c;
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return acc;
}

double frobenius_norm(const Tensor& a) { return std::sqrt(squared_norm(a)); }

double linf_norm(const Tensor& v) {
  double m = 0.0;
  for (double x : v.values()) m = std::max(m, std::abs(x));
  return m;
}

double l1_norm(const Tensor& v) {
  double acc = 0.0;
  for (double x : v.values()) acc += std::abs(x);
  return acc;
}

bool is_zero(const Tensor& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](double v) { return v == 0.0; });
}

bool all_finite(const Tensor& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor gaussian(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng) {
  Tensor out(rows, cols);
  for (auto& v : out.values()) v = mean + std * rng.normal();
  return out;
}

double spectral_norm_sq(const Tensor& D, double tol, std::size_t max_iter) {
  if (D.empty() || is_zero(D)) throw ZeroOperatorError("spectral_norm_sq: zero operator");
  const std::size_t m = D.cols();
  Tensor v(m, 1);
  Tensor Dv(D.rows(), 1);
  Tensor w(m, 1);

  Rng rng(kPowerSeed, Stream::Power);
  auto restart = [&] {
    double norm = 0.0;
    while (norm == 0.0) {
      for (auto& x : v.values()) x = rng.normal();
      norm = frobenius_norm(v);
    }
    for (auto& x : v.values()) x /= norm;
  };
  restart();

  double lambda = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    kernel::gemv(D, v.values(), Dv.values());
    const double rayleigh = squared_norm(Dv);
    kernel::gemv_t(D, Dv.values(), w.values());
    const double wn = frobenius_norm(w);
    if (wn == 0.0) {
      // Start vector landed in the null space.
      restart();
      continue;
    }
    for (std::size_t i = 0; i < m; ++i) v[i] = w[i] / wn;
    const bool done = it > 0 && std::abs(rayleigh - lambda) <= tol * rayleigh;
    lambda = rayleigh;
    if (done) break;
  }
  kernel::gemv(D, v.values(), Dv.values());
  return std::max(lambda, squared_norm(Dv));
}

}  // namespace analysparse
