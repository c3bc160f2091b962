#include "dlor/decompose.hpp"

#include <cmath>
#include <limits>

namespace dlor {

namespace {

constexpr int kBasisRetries = 64;
constexpr double kBasisAccept = 1e8;   // hard gate on mixed-block condition

}  // namespace

Matrix DlorComponent::dense() const {
  return alpha * Matrix::Identity(n, n) + u * v.transpose();
}

Matrix MultiplicativeFactorization::product() const {
  if (components.empty()) throw Error("factorization has no components");
  const Index n = components.front().n;
  Matrix p = Matrix::Identity(n, n);
  for (const auto& comp : components) p = comp.dense() * p;
  return p;
}

Vector zero_sum_betas(int num_parts) {
  if (num_parts < 2)
    throw BetaDegenerate("zero-sum betas need at least two nonzero parts");
  Vector betas = Vector::Ones(num_parts);
  double s = 0.0;
  for (int l = 0; l + 1 < num_parts; ++l) s += betas[l];
  betas[num_parts - 1] = -s;  // exact: small integer arithmetic
  return betas;
}

AdditiveSplit additive_split(const Matrix& w, int num_parts) {
  if (num_parts < 1) throw Error("additive_split: num_parts must be positive");
  AdditiveSplit out;
  out.summands.assign(num_parts, Matrix::Zero(w.rows(), w.cols()));
  auto s = svd(w);
  for (Index i = 0; i < s.sigma.size(); ++i) {
    const int part = static_cast<int>(i % num_parts);
    out.summands[part] += s.sigma[i] * s.u.col(i) * s.vt.row(i);
  }
  if (num_parts >= 2) out.betas = zero_sum_betas(num_parts);
  return out;
}

MultiplicativeFactorization multiplicative_factorize(const Matrix& w, int rank_cap,
                                                     double alpha, std::uint64_t seed) {
  const Index n = w.rows();
  if (w.rows() != w.cols() || n == 0)
    throw DimensionMismatch("multiplicative_factorize: matrix must be square");
  if (alpha == 0.0) throw Error("multiplicative_factorize: alpha must be nonzero");
  if (rank_cap < 1 || rank_cap > n)
    throw Error("multiplicative_factorize: rank cap out of range");
  {
    Eigen::PartialPivLU<Matrix> lu(w);
    const double smallest = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (smallest <= pivot_tolerance(w))
      throw SingularMatrix("multiplicative_factorize: input singular to tolerance", smallest);
  }

  const Index depth = (n + rank_cap - 1) / rank_cap;
  std::vector<Index> widths(depth, rank_cap);
  widths[depth - 1] = n - (depth - 1) * rank_cap;

  const double alpha_pow_l = std::pow(alpha, static_cast<double>(depth));
  const Matrix err = w - alpha_pow_l * Matrix::Identity(n, n);

  auto build_with_basis = [&](const Matrix& z) {
    const Matrix z_inv = inverse(z);
    const Matrix ez = err * z;

    MultiplicativeFactorization out;
    out.alpha = alpha;
    out.basis_z = z;
    out.components.reserve(depth);

    Matrix running = Matrix::Zero(n, n);  // sum of C_j D_j^T so far
    Matrix p_prev = Matrix::Identity(n, n);
    Index col = 0;
    for (Index k = 1; k <= depth; ++k) {
      const Index rk = widths[k - 1];
      const Matrix c_k = ez.middleCols(col, rk);
      const Matrix d_k = z_inv.middleRows(col, rk).transpose();  // N x rk
      col += rk;

      DlorComponent comp;
      comp.n = n;
      comp.alpha = alpha;
      comp.u = std::pow(alpha, static_cast<double>(k - depth)) * c_k;
      comp.v = lu_solve(Matrix(p_prev.transpose()), d_k);  // (P_{k-1}^{-1})^T D_k
      out.components.push_back(comp);

      running += c_k * d_k.transpose();
      Matrix p_k = std::pow(alpha, static_cast<double>(k - depth)) *
                   (alpha_pow_l * Matrix::Identity(n, n) + running);
      if (!is_invertible(p_k))
        throw PartialProductSingular("multiplicative_factorize: partial product " +
                                     std::to_string(k) + " singular");
      p_prev = p_k;
    }

    const Matrix prod = out.product();
    const double wn = frob_norm(w);
    out.residual = frob_norm(prod - w) / (wn > 0.0 ? wn : 1.0);
    return out;
  };

  // Basis search: a random basis works generically. A draw is accepted when
  // every mixed-block matrix clears the condition gate and the assembled
  // product meets the residual contract; the small-alpha deep cases carry
  // alpha^(1-L) amplification, so an unlucky draw can round past 1e-8.
  Rng rng(seed);
  double best_cond = std::numeric_limits<double>::infinity();
  double best_residual = std::numeric_limits<double>::infinity();
  int worst_block = 0;
  for (int attempt = 0; attempt < kBasisRetries; ++attempt) {
    Matrix z = random_matrix(n, n, rng, Dist::Gaussian);
    double worst = condition_estimate(z);
    int worst_k = 0;
    Matrix wz = w * z;
    for (Index k = 1; k < depth && worst <= kBasisAccept; ++k) {
      const Index split = k * rank_cap;
      Matrix mixed(n, n);
      mixed.leftCols(split) = wz.leftCols(split);
      mixed.rightCols(n - split) = z.rightCols(n - split);
      const double c = condition_estimate(mixed);
      if (c > worst) {
        worst = c;
        worst_k = static_cast<int>(k);
      }
    }
    if (worst < best_cond) {
      best_cond = worst;
      worst_block = worst_k;
    }
    if (!(worst <= kBasisAccept)) continue;
    MultiplicativeFactorization out = build_with_basis(z);
    if (out.residual <= 1e-8) return out;
    best_residual = std::min(best_residual, out.residual);
  }
  if (!(best_cond <= kBasisAccept))
    throw BasisSearchFailed("multiplicative_factorize: basis search exhausted", worst_block,
                            best_cond);
  throw Error("multiplicative_factorize: residual " + std::to_string(best_residual) +
              " exceeds 1e-8 after basis retries");
}

EmbeddedMatrix embed_rectangular(const Matrix& w, double eps_pad) {
  const Index m = w.rows();
  const Index n = w.cols();
  const Index d = std::max(m, n);
  EmbeddedMatrix out;
  out.w_square = Matrix::Zero(d, d);
  out.w_square.topLeftCorner(m, n) = w;
  for (Index i = std::min(m, n); i < d; ++i) out.w_square(i, i) = eps_pad;
  out.pad = {n, m, d};
  return out;
}

Vector pad_input(const Vector& x, const PadSpec& pad) {
  if (x.size() != pad.in_dim) throw DimensionMismatch("pad_input: size mismatch");
  Vector out = Vector::Zero(pad.dim);
  out.head(pad.in_dim) = x;
  return out;
}

Vector truncate_output(const Vector& y, const PadSpec& pad) {
  if (y.size() != pad.dim) throw DimensionMismatch("truncate_output: size mismatch");
  return y.head(pad.out_dim);
}

Matrix perturb_to_invertible(const Matrix& w, double epsilon) {
  if (w.rows() != w.cols()) throw DimensionMismatch("perturb_to_invertible: not square");
  if (is_invertible(w)) return w;
  for (double e = epsilon; e < 1e30; e *= 10.0) {
    Matrix candidate = w + e * Matrix::Identity(w.rows(), w.cols());
    if (is_invertible(candidate)) return candidate;
  }
  throw Error("perturb_to_invertible: exhausted perturbation growth");  // unreachable
}

bool is_dlor_shape(const Matrix& w, double diag_scale, Index r, double tol) {
  if (w.rows() != w.cols()) return false;
  if (r >= std::min(w.rows(), w.cols())) return true;
  const Matrix low = w - diag_scale * Matrix::Identity(w.rows(), w.cols());
  Eigen::JacobiSVD<Matrix> dec(low);
  const Vector& s = dec.singularValues();
  const double ref = std::max(1.0, s.size() > 0 ? s[0] : 0.0);
  for (Index i = r; i < s.size(); ++i)
    if (s[i] > tol * ref) return false;
  return true;
}

}  // namespace dlor
