#include "dlor/linalg.hpp"

#include <cmath>
#include <limits>

namespace dlor {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

}  // namespace

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix64(state_ ^ mix64(stream + 0xD1B54A32D192ED03ULL)));
}

std::uint64_t Rng::next_u64() {
  state_ += kGamma;
  return mix64(state_);
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform() { return 2.0 * uniform01() - 1.0; }

double Rng::gaussian() {
  // u1 in (0, 1] so the log is finite.
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

SvdResult svd(const Matrix& a) {
  if (a.size() == 0) throw DimensionMismatch("svd: empty matrix");
  Eigen::JacobiSVD<Matrix> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success)
    throw SvdFailure("svd: Jacobi sweeps did not converge");
  SvdResult r{dec.matrixU(), dec.singularValues(), dec.matrixV().transpose()};
  require_finite(r.u, "svd.u");
  require_finite(r.sigma, "svd.sigma");
  require_finite(r.vt, "svd.vt");
  return r;
}

Index numerical_rank(const Matrix& a, double rel_tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> dec(a);
  const Vector& s = dec.singularValues();
  if (s.size() == 0 || s[0] <= 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s[i] > rel_tol * s[0]) ++r;
  return r;
}

double pivot_tolerance(const Matrix& a) {
  return 1e-12 * a.cwiseAbs().maxCoeff();
}

Matrix lu_solve(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols()) throw DimensionMismatch("lu_solve: matrix not square");
  if (a.rows() != b.rows()) throw DimensionMismatch("lu_solve: rhs rows mismatch");
  Eigen::PartialPivLU<Matrix> lu(a);
  const double smallest = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (smallest <= pivot_tolerance(a))
    throw SingularMatrix("lu_solve: matrix singular to tolerance", smallest);
  Matrix x = lu.solve(b);
  x += lu.solve(b - a * x);
  require_finite(x, "lu_solve");
  return x;
}

Vector lu_solve(const Matrix& a, const Vector& b) {
  Matrix x = lu_solve(a, Matrix(b));
  return Vector(x.col(0));
}

Matrix inverse(const Matrix& a) {
  return lu_solve(a, Matrix(Matrix::Identity(a.rows(), a.cols())));
}

double det(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("det: matrix not square");
  return a.determinant();
}

bool is_invertible(const Matrix& a) {
  if (a.rows() != a.cols() || a.size() == 0) return false;
  Eigen::PartialPivLU<Matrix> lu(a);
  const double smallest = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  return smallest > pivot_tolerance(a);
}

double condition_estimate(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> dec(a);
  const Vector& s = dec.singularValues();
  if (s.size() == 0) return std::numeric_limits<double>::infinity();
  const double smin = s[s.size() - 1];
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

void require_finite(const Matrix& a, const char* context) {
  if (!a.allFinite()) throw Error(std::string(context) + ": non-finite entries");
}

void require_finite(const Vector& a, const char* context) {
  if (!a.allFinite()) throw Error(std::string(context) + ": non-finite entries");
}

Matrix random_matrix(Index rows, Index cols, Rng& rng, Dist dist) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = dist == Dist::Uniform ? rng.uniform() : rng.gaussian();
  return m;
}

Vector random_vector(Index len, Rng& rng, Dist dist) {
  Matrix m = random_matrix(len, 1, rng, dist);
  return Vector(m.col(0));
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed, Dist dist) {
  Rng rng(seed);
  return random_matrix(rows, cols, rng, dist);
}

Vector random_vector(Index len, std::uint64_t seed, Dist dist) {
  Rng rng(seed);
  return random_vector(len, rng, dist);
}

}  // namespace dlor
