#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "dlor/errors.hpp"

namespace dlor {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = DenseMatrix<double>;
using Vector = DenseVector<double>;
using Index = Eigen::Index;

/// Thin SVD A = U diag(sigma) V^T with sigma nonincreasing.
struct SvdResult {
  Matrix u;      // m x k
  Vector sigma;  // k, nonincreasing, >= 0
  Matrix vt;     // k x n
};

SvdResult svd(const Matrix& a);

/// Number of singular values above rel_tol * sigma_max.
Index numerical_rank(const Matrix& a, double rel_tol = 1e-9);

/// Solves a x = b for square full-rank a. One step of iterative refinement
/// keeps the residual near machine level even for condition numbers ~1e8.
Matrix lu_solve(const Matrix& a, const Matrix& b);
Vector lu_solve(const Matrix& a, const Vector& b);

Matrix inverse(const Matrix& a);
double det(const Matrix& a);

template <typename Derived>
double frob_norm(const Eigen::MatrixBase<Derived>& a) {
  return a.norm();
}

/// Singularity threshold: pivots at or below this are treated as zero.
double pivot_tolerance(const Matrix& a);
bool is_invertible(const Matrix& a);

/// sigma_max / sigma_min, +inf when rank deficient.
double condition_estimate(const Matrix& a);

void require_finite(const Matrix& a, const char* context);
void require_finite(const Vector& a, const char* context);

/// Deterministic 64-bit generator (splitmix64). Splittable so each
/// experiment run owns an independent stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Child generator for a named substream; independent of later draws here.
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64();
  double uniform01();  // [0, 1)
  double uniform();    // [-1, 1)
  double gaussian();   // N(0, 1), Box-Muller
 private:
  std::uint64_t state_;
};

enum class Dist { Uniform, Gaussian };

/// Entries drawn row-major; bit-identical for identical (seed, dims, dist).
Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, Dist dist = Dist::Uniform);
Vector random_vector(Index len, std::uint64_t seed, Dist dist = Dist::Uniform);
Matrix random_matrix(Index rows, Index cols, Rng& rng, Dist dist = Dist::Uniform);
Vector random_vector(Index len, Rng& rng, Dist dist = Dist::Uniform);

}  // namespace dlor
