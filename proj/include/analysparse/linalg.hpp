#pragma once

#include <cstddef>
#include <span>

#include "analysparse/rng.hpp"
#include "analysparse/tensor.hpp"

namespace analysparse {

// Raw kernels shared by the plain and tape-recorded code paths. Keeping one
// implementation guarantees both paths produce bit-identical iterates.
namespace kernel {

/// out = A x
void gemv(const Tensor& A, std::span<const double> x, std::span<double> out);
/// out = A^T x
void gemv_t(const Tensor& A, std::span<const double> x, std::span<double> out);
/// A += alpha * u v^T
void ger(double alpha, std::span<const double> u, std::span<const double> v, Tensor& A);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace kernel

Tensor matmul(const Tensor& A, const Tensor& B);
Tensor transpose(const Tensor& A);
/// A x for a column vector x.
Tensor matvec(const Tensor& A, const Tensor& x);
/// A^T x for a column vector x.
Tensor matvec_t(const Tensor& A, const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);
double frobenius_norm(const Tensor& a);
/// Max absolute entry; 0 for an empty tensor.
double linf_norm(const Tensor& v);
double l1_norm(const Tensor& v);
bool is_zero(const Tensor& a);
bool all_finite(const Tensor& a);

Tensor gaussian(std::size_t rows, std::size_t cols, double mean, double std, Rng& rng);

/// Largest eigenvalue of D^T D (the squared spectral norm of D) by power
/// iteration from a seeded random unit vector. Stops when the Rayleigh
/// quotient changes by less than tol relative.
double spectral_norm_sq(const Tensor& D, double tol = 1e-9, std::size_t max_iter = 10000);

}  // namespace analysparse
