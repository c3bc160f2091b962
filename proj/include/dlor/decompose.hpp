#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dlor/linalg.hpp"

namespace dlor {

/// Scaled identity plus low-rank update: alpha I + u v^T with u, v in N x r.
struct DlorComponent {
  Index n = 0;
  double alpha = 0.0;
  Matrix u;  // N x r
  Matrix v;  // N x r

  Index rank_bound() const { return u.cols(); }
  Matrix dense() const;
  long param_count() const { return 1 + 2 * static_cast<long>(n) * u.cols(); }
};

/// W = sum of summands. Betas are the zero-sum ensemble coefficients
/// (1, ..., 1, -(L-1)); absent for a single part.
struct AdditiveSplit {
  std::vector<Matrix> summands;
  std::optional<Vector> betas;
};

/// W = M_L * ... * M_1, components stored first-applied-first
/// (components[0] = M_1). Residual is |product - W|_F / |W|_F.
struct MultiplicativeFactorization {
  std::vector<DlorComponent> components;
  double alpha = 0.0;
  Matrix basis_z;
  double residual = 0.0;

  Index depth() const { return static_cast<Index>(components.size()); }
  Matrix product() const;
};

/// Zero-sum coefficients (1, ..., 1, -(L-1)). The last entry is the negated
/// sum of the rest, so the total is exactly zero in floating point.
Vector zero_sum_betas(int num_parts);

/// SVD split with singular triplets assigned round-robin so spectral mass
/// balances across the parts. num_parts == 1 returns the trivial split with
/// betas absent.
AdditiveSplit additive_split(const Matrix& w, int num_parts);

/// Exact factorization of an invertible W into ceil(N/r) DLoR components via
/// partial products of a randomly sampled basis. Resamples the basis until
/// every mixed-block matrix is well conditioned.
MultiplicativeFactorization multiplicative_factorize(const Matrix& w, int rank_cap,
                                                     double alpha, std::uint64_t seed);

struct PadSpec {
  Index in_dim = 0;
  Index out_dim = 0;
  Index dim = 0;
  bool trivial() const { return in_dim == dim && out_dim == dim; }
};

struct EmbeddedMatrix {
  Matrix w_square;
  PadSpec pad;
};

/// Embeds a rectangular map into the upper-left block of a D x D matrix,
/// D = max(m, n). The free diagonal is filled with eps_pad so the square
/// matrix stays invertible for the multiplicative path; padded input
/// coordinates are zero, so the embedded map agrees with W exactly.
EmbeddedMatrix embed_rectangular(const Matrix& w, double eps_pad = 1e-6);

Vector pad_input(const Vector& x, const PadSpec& pad);
Vector truncate_output(const Vector& y, const PadSpec& pad);

/// Returns w unchanged when invertible, otherwise w + eps I with eps grown
/// geometrically until the pivots clear the tolerance.
Matrix perturb_to_invertible(const Matrix& w, double epsilon);

/// True when the singular values of (w - diag_scale I) vanish beyond index r
/// (relative threshold tol against max(1, sigma_1)).
bool is_dlor_shape(const Matrix& w, double diag_scale, Index r, double tol = 1e-9);

}  // namespace dlor
