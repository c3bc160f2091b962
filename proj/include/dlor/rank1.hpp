#pragma once

#include <cstdint>

#include "dlor/activation.hpp"
#include "dlor/linalg.hpp"

namespace dlor {

/// Two-layer net with both weight matrices rank-1 and a scalar readout:
/// f(x) = v2^T rho(u1 (v1^T x) + b1) + b2.
struct Rank1Net {
  Vector v1;  // d, input projection
  Vector u1;  // N
  Vector b1;  // N
  Vector v2;  // N, readout
  double b2 = 0.0;
  ActivationSpec activation;
};

/// Rank-1 hidden layer with a full outer layer:
/// f(x) = W2 rho(u1 (v1^T x) + b1) + b2.
struct FullOuterNet {
  Vector v1;
  Vector u1;
  Vector b1;
  Matrix w2;  // k x N
  Vector b2;  // k
  ActivationSpec activation;
};

/// Scalar projection v1^T x accumulated in index order. Constructions and
/// forward passes must share this routine so threshold comparisons agree
/// bit for bit.
double project(const Vector& v1, const Vector& x);

double forward(const Rank1Net& net, const Vector& x);
Vector forward_cols(const Rank1Net& net, const Matrix& x_cols);
Vector forward(const FullOuterNet& net, const Vector& x);
Matrix forward_cols(const FullOuterNet& net, const Matrix& x_cols);

/// Samples a unit projection vector whose projections of the given columns
/// are pairwise distinct (min gap > 1e-10 * spread). Retries up to 64 draws.
Vector distinct_projection(const Matrix& x_cols, std::uint64_t seed);

/// Heaviside thermometer construction: thresholds at midpoints of the sorted
/// projections, telescoping readout weights. Zero interpolation error, exact
/// in floating point.
Rank1Net thermometer_interpolate(const Matrix& x_cols, const Vector& z,
                                 std::uint64_t seed = 42);

/// General-activation exact interpolation: builds the evaluation matrix
/// H_{i,j} = rho(s y_j - s t_i), checks its condition, solves for the
/// readout. Max error <= 1e-6 * max(1, |z|_inf) on return.
Rank1Net scalar_interpolate(const Matrix& x_cols, const Vector& z,
                            const ActivationSpec& activation, std::uint64_t seed);

/// Full outer layer memorization of k-dimensional targets, W2 = Z H^{-1}.
/// Exact for heaviside (per-row telescoping), <= 1e-6 relative otherwise.
FullOuterNet full_outer_memorize(const Matrix& x_cols, const Matrix& z_matrix,
                                 const ActivationSpec& activation, std::uint64_t seed);

struct CollinearityWitness {
  bool collinear = false;
  double max_line_distance = 0.0;  // max point distance to the best-fit line
  double rms_line_distance = 0.0;  // sqrt(sum d_i^2 / (M-1))
};

/// Fits the total-least-squares line to the target columns and reports how
/// far they sit from it. Non-collinear targets certify that no rank-1-outer
/// network can interpolate them.
CollinearityWitness affine_collapse_witness(const Matrix& z_matrix);

struct BlindnessResult {
  Vector x_perp;
  double delta = 0.0;
};

/// Draws a random direction, projects it onto the null space of v1^T and
/// measures |f(x + x_perp) - f(x)|.
template <typename F>
BlindnessResult blindness_check(const Vector& v1, F&& f, const Vector& x,
                                std::uint64_t seed) {
  if (v1.size() < 2) throw DimensionMismatch("blindness_check: need dim >= 2");
  if (v1.size() != x.size()) throw DimensionMismatch("blindness_check: dim mismatch");
  Rng rng(seed);
  Vector raw = random_vector(v1.size(), rng, Dist::Gaussian);
  Vector x_perp = raw - v1 * (v1.dot(raw) / v1.squaredNorm());
  const double base = f(x);
  const double moved = f(Vector(x + x_perp));
  return {x_perp, std::abs(moved - base)};
}

BlindnessResult blindness_check(const Rank1Net& net, const Vector& x, std::uint64_t seed);

}  // namespace dlor
