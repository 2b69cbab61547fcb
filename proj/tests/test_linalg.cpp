#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"
#include "analysparse/rng.hpp"

using namespace analysparse;

namespace {

Tensor triple_loop(const Tensor& A, const Tensor& B) {
  Tensor C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      long double acc = 0.0L;
      for (std::size_t k = 0; k < A.cols(); ++k) acc += static_cast<long double>(A(i, k)) * B(k, j);
      C(i, j) = static_cast<double>(acc);
    }
  return C;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Eigen::MatrixXd to_eigen(const Tensor& A) {
  Eigen::MatrixXd M(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t c = 0; c < A.cols(); ++c) M(r, c) = A(r, c);
  return M;
}

}  // namespace

TEST_CASE("matmul agrees with a long-double triple loop") {
  Rng rng(11, Stream::Data);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(9), k = 1 + rng.uniform_index(9), m = 1 + rng.uniform_index(9);
    const Tensor A = gaussian(n, k, 0.0, 1.0, rng);
    const Tensor B = gaussian(k, m, 0.0, 1.0, rng);
    CHECK(max_abs_diff(matmul(A, B), triple_loop(A, B)) < 1e-12);
  }
}

TEST_CASE("matmul is associative and matvec is consistent with it") {
  Rng rng(12, Stream::Data);
  const Tensor A = gaussian(5, 4, 0.0, 1.0, rng);
  const Tensor B = gaussian(4, 6, 0.0, 1.0, rng);
  const Tensor C = gaussian(6, 3, 0.0, 1.0, rng);
  CHECK(max_abs_diff(matmul(matmul(A, B), C), matmul(A, matmul(B, C))) < 1e-12);
  const Tensor x = gaussian(4, 1, 0.0, 1.0, rng);
  CHECK(max_abs_diff(matvec(A, x), matmul(A, x)) < 1e-14);
  const Tensor y = gaussian(5, 1, 0.0, 1.0, rng);
  CHECK(max_abs_diff(matvec_t(A, y), matmul(transpose(A), y)) < 1e-14);
}

TEST_CASE("identity and transpose basics") {
  const Tensor A = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(matmul(Tensor::identity(2), A) == A);
  CHECK(matmul(A, Tensor::identity(3)) == A);
  CHECK(transpose(transpose(A)) == A);
  CHECK(transpose(A)(2, 1) == 6.0);
}

TEST_CASE("dimension mismatches throw") {
  const Tensor A(2, 3);
  CHECK_THROWS_AS(matmul(A, Tensor(2, 2)), DimensionError);
  CHECK_THROWS_AS(matvec(A, Tensor(2, 1)), DimensionError);
  CHECK_THROWS_AS(add(A, Tensor(3, 2)), DimensionError);
}

TEST_CASE("norms") {
  const Tensor v = Tensor::vector({3, -4, 0});
  CHECK(squared_norm(v) == 25.0);
  CHECK(frobenius_norm(v) == 5.0);
  CHECK(linf_norm(v) == 4.0);
  CHECK(l1_norm(v) == 7.0);
  CHECK(linf_norm(Tensor()) == 0.0);
  CHECK(dot(v, Tensor::vector({1, 1, 1})) == -1.0);
  CHECK(is_zero(Tensor(3, 3)));
  CHECK_FALSE(all_finite(Tensor::vector({1.0, std::nan("")})));
}

TEST_CASE("spectral_norm_sq matches an eigensolver") {
  Rng rng(21, Stream::Data);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = 2 + rng.uniform_index(15), m = 2 + rng.uniform_index(15);
    const Tensor D = gaussian(p, m, 0.0, 1.0, rng);
    const Eigen::MatrixXd M = to_eigen(D);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M.transpose() * M);
    const double oracle = es.eigenvalues().maxCoeff();
    CHECK(std::abs(spectral_norm_sq(D) - oracle) / oracle < 1e-6);
  }
}

TEST_CASE("spectral_norm_sq scales quadratically") {
  Rng rng(22, Stream::Data);
  const Tensor D = gaussian(8, 8, 0.0, 1.0, rng);
  const double base = spectral_norm_sq(D);
  for (double c : {0.5, 3.0, -2.0}) {
    CHECK(spectral_norm_sq(scale(D, c)) == doctest::Approx(c * c * base).epsilon(1e-7));
  }
}

TEST_CASE("spectral_norm_sq of known operators") {
  CHECK(spectral_norm_sq(Tensor::identity(5)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spectral_norm_sq(scale(Tensor::identity(4), 3.0)) == doctest::Approx(9.0).epsilon(1e-12));
  // Rank one: ||u v^T||^2 = ||u||^2 ||v||^2.
  Tensor R(3, 2);
  const double u[3] = {1, 2, 2};
  const double v[2] = {3, 4};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) R(i, j) = u[i] * v[j];
  CHECK(spectral_norm_sq(R) == doctest::Approx(225.0).epsilon(1e-9));
  CHECK_THROWS_AS(spectral_norm_sq(Tensor(3, 3)), ZeroOperatorError);
}

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(42, Stream::Data), b(42, Stream::Data), c(42, Stream::Init), d(43, Stream::Data);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    seen.insert(x);
  }
  CHECK(seen.size() == 100);
  Rng a2(42, Stream::Data);
  CHECK(a2.next_u64() != c.next_u64());
  CHECK(Rng(42, Stream::Data).next_u64() != d.next_u64());
  CHECK(Rng(42, Stream::Data).derive(0).next_u64() != Rng(42, Stream::Data).derive(1).next_u64());
  CHECK(Rng(42, Stream::Data).derive(5).next_u64() == Rng(42, Stream::Data).derive(5).next_u64());
  CHECK(stream_name(Stream::Baseline) == "baseline");
}

TEST_CASE("gaussian draws have the requested moments") {
  Rng rng(5, Stream::Data);
  const std::size_t n = 200000;
  const Tensor g = gaussian(n, 1, 2.0, 3.0, rng);
  double mean = 0.0;
  for (double x : g.values()) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : g.values()) var += (x - mean) * (x - mean);
  var /= (n - 1);
  // Standard errors: 3/sqrt(n) for the mean, 9*sqrt(2/(n-1)) for the variance.
  CHECK(std::abs(mean - 2.0) < 4.0 * 3.0 / std::sqrt(double(n)));
  CHECK(std::abs(var - 9.0) < 4.0 * 9.0 * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("uniform draws are in range and unbiased") {
  Rng rng(6, Stream::Data);
  const int n = 100000;
  double mean = 0.0;
  std::vector<int> counts(7, 0);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    mean += u;
    ++counts[rng.uniform_index(7)];
  }
  mean /= n;
  CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  const double expect = n / 7.0, se = std::sqrt(n * (1.0 / 7.0) * (6.0 / 7.0));
  for (int c : counts) CHECK(std::abs(c - expect) < 4.0 * se);
}
