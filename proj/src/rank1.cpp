#include "dlor/rank1.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace dlor {

namespace {

constexpr int kRetries = 64;
constexpr double kConditionLimit = 1e10;

std::vector<Index> sorted_order(const Vector& y) {
  std::vector<Index> order(y.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return y[a] < y[b]; });
  return order;
}

/// Telescoping readout weight targeting fl(prefix + w) == target. Exact
/// whenever the difference is representable (same binade, or targets on a
/// shared dyadic grid); otherwise the nearest achievable value, since
/// fl(prefix + w) is quantized by ulp(w). Callers track the achieved prefix
/// so per-step rounding never accumulates.
double telescope_step(double prefix, double target) {
  double w = target - prefix;
  double r = prefix + w;
  double best_w = w;
  double best_err = std::abs(r - target);
  for (int i = 0; i < 8 && best_err > 0.0; ++i) {
    w += target - r;
    r = prefix + w;
    const double err = std::abs(r - target);
    if (err < best_err) {
      best_err = err;
      best_w = w;
    }
  }
  for (int dir = 0; dir < 2 && best_err > 0.0; ++dir) {
    w = best_w;
    for (int i = 0; i < 4; ++i) {
      w = std::nextafter(w, dir == 0 ? std::numeric_limits<double>::infinity()
                                     : -std::numeric_limits<double>::infinity());
      r = prefix + w;
      const double err = std::abs(r - target);
      if (err < best_err) {
        best_err = err;
        best_w = w;
      }
    }
  }
  return best_w;
}

/// Scale factor applied to the projections before building the evaluation
/// matrix. Spreading the sorted projections to O(1) gaps keeps the shifted
/// activation rows far from linear dependence.
double projection_scale(const Vector& y_sorted_gapmin) {
  const double min_gap = y_sorted_gapmin[0];
  if (min_gap <= 0.0) return 1.0;
  const double s = 4.0 / min_gap;
  return std::clamp(s, 1e-9, 1e12);
}

struct EvalMatrix {
  Matrix h;          // N x M, h(i, j) = rho(s y_j - s t_i)
  Vector thresholds; // scaled domain
  double scale;
};

/// Midpoint thresholds over the scaled sorted projections, optionally
/// jittered within each gap on retry.
EvalMatrix build_eval_matrix(const Vector& y, const ActivationSpec& act, double scale,
                             Rng* jitter) {
  const Index m = y.size();
  auto order = sorted_order(y);
  Vector ys(m);
  for (Index i = 0; i < m; ++i) ys[i] = scale * y[order[i]];
  const double spread = ys[m - 1] - ys[0];
  const double delta = std::max(1e-6, 1e-3 * spread);

  Vector t(m);
  t[0] = ys[0] - delta;
  for (Index i = 1; i < m; ++i) t[i] = 0.5 * (ys[i - 1] + ys[i]);
  if (jitter) {
    t[0] -= 0.5 * delta * jitter->uniform01();
    for (Index i = 1; i < m; ++i) {
      const double gap = ys[i] - ys[i - 1];
      t[i] += 0.4 * gap * jitter->uniform();
    }
  }

  Matrix h(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) h(i, j) = eval(act, scale * y[j] - t[i]);
  return {h, t, scale};
}

Vector projections(const Matrix& x_cols, const Vector& v1) {
  Vector y(x_cols.cols());
  for (Index j = 0; j < x_cols.cols(); ++j) y[j] = project(v1, Vector(x_cols.col(j)));
  return y;
}

double min_adjacent_gap(const Vector& y) {
  auto order = sorted_order(y);
  double g = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < order.size(); ++i)
    g = std::min(g, y[order[i]] - y[order[i - 1]]);
  return g;
}

}  // namespace

double project(const Vector& v1, const Vector& x) {
  if (v1.size() != x.size()) throw DimensionMismatch("project: dim mismatch");
  double s = 0.0;
  for (Index i = 0; i < v1.size(); ++i) s += v1[i] * x[i];
  return s;
}

double forward(const Rank1Net& net, const Vector& x) {
  const double s = project(net.v1, x);
  double acc = 0.0;
  for (Index i = 0; i < net.u1.size(); ++i)
    acc += net.v2[i] * eval(net.activation, net.u1[i] * s + net.b1[i]);
  return acc + net.b2;
}

Vector forward_cols(const Rank1Net& net, const Matrix& x_cols) {
  Vector out(x_cols.cols());
  for (Index j = 0; j < x_cols.cols(); ++j) out[j] = forward(net, Vector(x_cols.col(j)));
  return out;
}

Vector forward(const FullOuterNet& net, const Vector& x) {
  const double s = project(net.v1, x);
  Vector hidden(net.u1.size());
  for (Index i = 0; i < net.u1.size(); ++i)
    hidden[i] = eval(net.activation, net.u1[i] * s + net.b1[i]);
  Vector out(net.w2.rows());
  for (Index r = 0; r < net.w2.rows(); ++r) {
    double acc = 0.0;
    for (Index i = 0; i < hidden.size(); ++i) acc += net.w2(r, i) * hidden[i];
    out[r] = acc + net.b2[r];
  }
  return out;
}

Matrix forward_cols(const FullOuterNet& net, const Matrix& x_cols) {
  Matrix out(net.w2.rows(), x_cols.cols());
  for (Index j = 0; j < x_cols.cols(); ++j) out.col(j) = forward(net, Vector(x_cols.col(j)));
  return out;
}

Vector distinct_projection(const Matrix& x_cols, std::uint64_t seed) {
  const Index d = x_cols.rows();
  const Index m = x_cols.cols();
  if (d < 1 || m < 1) throw DimensionMismatch("distinct_projection: empty input");
  Rng rng(seed);
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    Vector v = random_vector(d, rng, Dist::Gaussian);
    const double n = v.norm();
    if (n == 0.0) continue;
    v /= n;
    if (m == 1) return v;
    Vector y = projections(x_cols, v);
    const double spread = y.maxCoeff() - y.minCoeff();
    if (spread <= 0.0) continue;
    if (min_adjacent_gap(y) > 1e-10 * spread) return v;
  }
  throw ProjectionDegenerate(
      "no projection separated the inputs after 64 draws (duplicated columns?)");
}

Rank1Net thermometer_interpolate(const Matrix& x_cols, const Vector& z, std::uint64_t seed) {
  const Index m = x_cols.cols();
  if (z.size() != m) throw DimensionMismatch("thermometer_interpolate: target size");
  Rank1Net net;
  net.activation = make_activation(Act::Heaviside);
  net.v1 = x_cols.rows() == 1 ? Vector::Ones(1) : distinct_projection(x_cols, seed);
  net.u1 = Vector::Ones(m);

  Vector y = projections(x_cols, net.v1);
  auto order = sorted_order(y);
  const double spread = m > 1 ? y[order[m - 1]] - y[order[0]] : 0.0;
  const double delta = std::max(1e-6, 1e-3 * spread);

  Vector t(m);
  t[0] = y[order[0]] - delta;
  for (Index j = 1; j < m; ++j) t[j] = 0.5 * (y[order[j - 1]] + y[order[j]]);

  net.b1 = -t;
  net.v2.resize(m);
  double prefix = 0.0;
  for (Index j = 0; j < m; ++j) {
    net.v2[j] = telescope_step(prefix, z[order[j]]);
    prefix += net.v2[j];
  }
  net.b2 = 0.0;
  return net;
}

Rank1Net scalar_interpolate(const Matrix& x_cols, const Vector& z,
                            const ActivationSpec& activation, std::uint64_t seed) {
  const Index m = x_cols.cols();
  if (z.size() != m) throw DimensionMismatch("scalar_interpolate: target size");
  if (activation.name == Act::Heaviside)
    throw Error("scalar_interpolate requires a continuous activation");
  if (activation.mean_periodic)
    throw Error("scalar_interpolate requires a non-mean-periodic activation");

  Rank1Net net;
  net.activation = activation;
  net.v1 = distinct_projection(x_cols, seed);
  Vector y = projections(x_cols, net.v1);
  Vector gap(1);
  gap[0] = m > 1 ? min_adjacent_gap(y) : 1.0;
  const double scale = m > 1 ? projection_scale(gap) : 1.0;

  const double tol = 1e-6 * std::max(1.0, z.cwiseAbs().maxCoeff());
  Rng rng(Rng(seed).split(1).next_u64());
  double best_cond = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    Rng jitter = rng.split(attempt);
    EvalMatrix em = build_eval_matrix(y, activation, scale, attempt == 0 ? nullptr : &jitter);
    const double cond = condition_estimate(em.h);
    best_cond = std::min(best_cond, cond);
    if (!(cond <= kConditionLimit)) continue;
    Vector v2;
    try {
      v2 = lu_solve(Matrix(em.h.transpose()), z);
    } catch (const SingularMatrix&) {
      continue;
    }
    net.u1 = Vector::Constant(m, em.scale);
    net.b1 = -em.thresholds;
    net.v2 = v2;
    net.b2 = 0.0;
    const Vector got = forward_cols(net, x_cols);
    if ((got - z).cwiseAbs().maxCoeff() <= tol) return net;
  }
  throw EvaluationMatrixSingular("scalar_interpolate: no well-conditioned evaluation matrix",
                                 best_cond);
}

FullOuterNet full_outer_memorize(const Matrix& x_cols, const Matrix& z_matrix,
                                 const ActivationSpec& activation, std::uint64_t seed) {
  const Index m = x_cols.cols();
  const Index k = z_matrix.rows();
  if (z_matrix.cols() != m) throw DimensionMismatch("full_outer_memorize: target cols");

  FullOuterNet net;
  net.activation = activation;
  net.b2 = Vector::Zero(k);

  if (activation.name == Act::Heaviside) {
    // Interlaced thresholds give the triangular 0/1 hidden matrix; each
    // output row is then an independent telescoping readout.
    net.v1 = x_cols.rows() == 1 ? Vector::Ones(1) : distinct_projection(x_cols, seed);
    net.u1 = Vector::Ones(m);
    Vector y = projections(x_cols, net.v1);
    auto order = sorted_order(y);
    const double spread = m > 1 ? y[order[m - 1]] - y[order[0]] : 0.0;
    const double delta = std::max(1e-6, 1e-3 * spread);
    Vector t(m);
    t[0] = y[order[0]] - delta;
    for (Index j = 1; j < m; ++j) t[j] = 0.5 * (y[order[j - 1]] + y[order[j]]);
    net.b1 = -t;
    net.w2 = Matrix::Zero(k, m);
    for (Index r = 0; r < k; ++r) {
      double prefix = 0.0;
      for (Index j = 0; j < m; ++j) {
        net.w2(r, j) = telescope_step(prefix, z_matrix(r, order[j]));
        prefix += net.w2(r, j);
      }
    }
    return net;
  }

  if (activation.mean_periodic)
    throw Error("full_outer_memorize requires a non-mean-periodic activation");

  net.v1 = distinct_projection(x_cols, seed);
  Vector y = projections(x_cols, net.v1);
  Vector gap(1);
  gap[0] = m > 1 ? min_adjacent_gap(y) : 1.0;
  const double scale = m > 1 ? projection_scale(gap) : 1.0;
  const double tol = 1e-6 * std::max(1.0, z_matrix.cwiseAbs().maxCoeff());

  Rng rng(Rng(seed).split(2).next_u64());
  double best_cond = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    Rng jitter = rng.split(attempt);
    EvalMatrix em = build_eval_matrix(y, activation, scale, attempt == 0 ? nullptr : &jitter);
    const double cond = condition_estimate(em.h);
    best_cond = std::min(best_cond, cond);
    if (!(cond <= kConditionLimit)) continue;
    Matrix w2t;
    try {
      w2t = lu_solve(Matrix(em.h.transpose()), Matrix(z_matrix.transpose()));
    } catch (const SingularMatrix&) {
      continue;
    }
    net.u1 = Vector::Constant(m, em.scale);
    net.b1 = -em.thresholds;
    net.w2 = w2t.transpose();
    const Matrix got = forward_cols(net, x_cols);
    if ((got - z_matrix).cwiseAbs().maxCoeff() <= tol) return net;
  }
  throw EvaluationMatrixSingular("full_outer_memorize: no well-conditioned evaluation matrix",
                                 best_cond);
}

CollinearityWitness affine_collapse_witness(const Matrix& z_matrix) {
  const Index k = z_matrix.rows();
  const Index m = z_matrix.cols();
  if (k < 2) throw DimensionMismatch("affine_collapse_witness: need k >= 2");
  CollinearityWitness w;
  if (m <= 2) {
    w.collinear = true;  // two points always define a line
    return w;
  }
  const Vector mean = z_matrix.rowwise().mean();
  Matrix centered = z_matrix.colwise() - mean;
  auto s = svd(centered);
  const Vector dir = s.u.col(0);

  double spread = 0.0;
  double sumsq = 0.0;
  for (Index j = 0; j < m; ++j) {
    const Vector c = centered.col(j);
    spread = std::max(spread, c.norm());
    const Vector resid = c - dir * dir.dot(c);
    const double d = resid.norm();
    w.max_line_distance = std::max(w.max_line_distance, d);
    sumsq += d * d;
  }
  w.rms_line_distance = std::sqrt(sumsq / static_cast<double>(m - 1));
  w.collinear = w.max_line_distance <= 1e-9 * spread;
  return w;
}

BlindnessResult blindness_check(const Rank1Net& net, const Vector& x, std::uint64_t seed) {
  return blindness_check(net.v1, [&](const Vector& p) { return forward(net, p); }, x, seed);
}

}  // namespace dlor
