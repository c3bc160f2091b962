#include <doctest.h>

#include <cmath>

#include "dlor/rank1.hpp"

using namespace dlor;

namespace {

// Targets quantized to 32 fractional bits. Pairwise differences and prefix
// sums of such values are exactly representable, so the telescoping readout
// can reproduce them bit for bit.
Vector grid_targets(Index n, std::uint64_t seed) {
  Vector z = random_vector(n, seed, Dist::Gaussian);
  for (Index i = 0; i < n; ++i) z[i] = std::ldexp(std::round(std::ldexp(z[i], 32)), -32);
  return z;
}

// Independent check of a rank-1 forward pass via Eigen expressions.
double forward_oracle(const Rank1Net& net, const Vector& x) {
  const double s = net.v1.dot(x);
  Vector pre = net.u1 * s + net.b1;
  return net.v2.dot(eval_vec(net.activation, pre)) + net.b2;
}

// Brute-force total-least-squares line fit in 2D: lines through the centroid
// parameterized by angle, sum of squared distances minimized over a fine
// grid followed by local refinement. No SVD anywhere.
struct BruteLine {
  double max_dist;
  double rms_dist;
};

BruteLine brute_force_line_fit(const Matrix& z) {
  const Index m = z.cols();
  Vector mean = z.rowwise().mean();
  auto cost = [&](double theta) {
    const double nx = -std::sin(theta), ny = std::cos(theta);
    double acc = 0.0;
    for (Index j = 0; j < m; ++j) {
      const double d = (z(0, j) - mean[0]) * nx + (z(1, j) - mean[1]) * ny;
      acc += d * d;
    }
    return acc;
  };
  double best_theta = 0.0, best = cost(0.0);
  for (int i = 1; i < 20000; ++i) {
    const double theta = M_PI * i / 20000.0;
    const double c = cost(theta);
    if (c < best) {
      best = c;
      best_theta = theta;
    }
  }
  for (double step = M_PI / 20000.0; step > 1e-14; step /= 2.0) {
    for (double cand : {best_theta - step, best_theta + step}) {
      const double c = cost(cand);
      if (c < best) {
        best = c;
        best_theta = cand;
      }
    }
  }
  const double nx = -std::sin(best_theta), ny = std::cos(best_theta);
  double worst = 0.0, acc = 0.0;
  for (Index j = 0; j < m; ++j) {
    const double d = std::abs((z(0, j) - mean[0]) * nx + (z(1, j) - mean[1]) * ny);
    worst = std::max(worst, d);
    acc += d * d;
  }
  return {worst, std::sqrt(acc / static_cast<double>(m - 1))};
}

}  // namespace

TEST_SUITE("rank1") {

TEST_CASE("distinct projection on a line and in general position") {
  Matrix x(1, 3);
  x << 0, 1, 2;
  Vector v = distinct_projection(x, 5);
  CHECK(v.size() == 1);
  CHECK(v[0] != 0.0);

  Matrix x3 = random_matrix(3, 20, 7);
  Vector v3 = distinct_projection(x3, 7);
  Vector y(20);
  for (Index j = 0; j < 20; ++j) y[j] = project(v3, Vector(x3.col(j)));
  for (Index i = 0; i < 20; ++i)
    for (Index j = i + 1; j < 20; ++j) CHECK(y[i] != y[j]);
}

TEST_CASE("distinct projection rejects duplicated columns") {
  Matrix x = random_matrix(4, 6, 11);
  x.col(5) = x.col(2);
  CHECK_THROWS_AS(distinct_projection(x, 3), ProjectionDegenerate);
}

TEST_CASE("thermometer telescoping weights on the worked example") {
  Matrix x(1, 3);
  x << 0, 1, 2;
  Vector z(3);
  z << 5, -1, 3;
  Rank1Net net = thermometer_interpolate(x, z);
  CHECK(net.v2[0] == 5.0);
  CHECK(net.v2[1] == -6.0);
  CHECK(net.v2[2] == 4.0);
  for (Index j = 0; j < 3; ++j) CHECK(forward(net, Vector(x.col(j))) == z[j]);
}

TEST_CASE("thermometer single point") {
  Matrix x(1, 1);
  x << 0.7;
  Vector z(1);
  z << -2.5;
  Rank1Net net = thermometer_interpolate(x, z);
  CHECK(net.v2[0] == z[0]);
  CHECK(forward(net, Vector(x.col(0))) == z[0]);
}

TEST_CASE("thermometer is exact on random data") {
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 16;
    Matrix x = random_matrix(1, m, 300 + trial);
    Vector z = grid_targets(m, 400 + trial);
    Rank1Net net = thermometer_interpolate(x, z, 3);
    for (Index j = 0; j < m; ++j)
      CHECK(forward(net, Vector(x.col(j))) == z[j]);  // exactly zero error
  }
}

TEST_CASE("thermometer on full-precision targets stays at the ulp floor") {
  // With arbitrary 53-bit targets the reachable telescoping values are
  // quantized by the jump sizes; errors stay within a few ulps of the data.
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 24;
    Matrix x = random_matrix(1, m, 1300 + trial);
    Vector z = random_vector(m, 1400 + trial, Dist::Gaussian);
    Rank1Net net = thermometer_interpolate(x, z, 3);
    Vector got = forward_cols(net, x);
    CHECK((got - z).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("thermometer hidden matrix is lower-triangular ones after sorting") {
  const Index m = 9;
  Matrix x = random_matrix(2, m, 21);
  Vector z = random_vector(m, 22);
  Rank1Net net = thermometer_interpolate(x, z, 9);
  // Recover sorted order of the projections, then check the encoding.
  std::vector<std::pair<double, Index>> proj;
  for (Index j = 0; j < m; ++j) proj.push_back({project(net.v1, Vector(x.col(j))), j});
  std::sort(proj.begin(), proj.end());
  for (Index rank = 0; rank < m; ++rank) {
    const Vector xi = x.col(proj[rank].second);
    const double s = project(net.v1, xi);
    for (Index i = 0; i < m; ++i) {
      const double hval = eval(net.activation, net.u1[i] * s + net.b1[i]);
      CHECK(hval == (i <= rank ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("scalar interpolation with smooth activations") {
  SUBCASE("constant targets") {
    Matrix x = random_matrix(2, 12, 31);
    Vector z = Vector::Constant(12, 4.0);
    Rank1Net net = scalar_interpolate(x, z, make_activation(Act::Softplus), 31);
    Vector got = forward_cols(net, x);
    CHECK((got - z).cwiseAbs().maxCoeff() <= 1e-6 * 4.0);
  }
  SUBCASE("single point") {
    Matrix x(1, 1);
    x << 0.3;
    Vector z(1);
    z << 7.0;
    Rank1Net net = scalar_interpolate(x, z, make_activation(Act::Tanh), 1);
    CHECK(forward(net, Vector(x.col(0))) == doctest::Approx(7.0).epsilon(1e-12));
  }
  SUBCASE("random eight points with sigmoid") {
    Matrix x = random_matrix(3, 8, 11);
    Vector z = random_vector(8, 12, Dist::Gaussian);
    Rank1Net net = scalar_interpolate(x, z, make_activation(Act::Sigmoid), 11);
    Vector got = forward_cols(net, x);
    CHECK((got - z).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, z.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("scalar interpolation across 50 seeded datasets") {
  const Act acts[] = {Act::Softplus, Act::Sigmoid, Act::Tanh};
  for (int trial = 0; trial < 50; ++trial) {
    Rng shape(6000 + trial);
    const Index d = 1 + static_cast<Index>(shape.next_u64() % 8);
    const Index m = 2 + static_cast<Index>(shape.next_u64() % 31);
    Matrix x = random_matrix(d, m, 7000 + trial);
    Vector z = random_vector(m, 8000 + trial, Dist::Gaussian);
    auto act = make_activation(acts[trial % 3]);
    Rank1Net net = scalar_interpolate(x, z, act, 9000 + trial);
    Vector got = forward_cols(net, x);
    CHECK((got - z).cwiseAbs().maxCoeff() <=
          1e-6 * std::max(1.0, z.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("scalar interpolation rejects heaviside") {
  Matrix x = random_matrix(1, 4, 2);
  Vector z = random_vector(4, 3);
  CHECK_THROWS(scalar_interpolate(x, z, make_activation(Act::Heaviside), 2));
}

TEST_CASE("full outer layer memorization") {
  SUBCASE("non-collinear targets that defeat a rank-1 outer layer") {
    Matrix x = random_matrix(2, 3, 17);
    Matrix z(2, 3);
    z << 0, 1, 0, 0, 0, 1;
    FullOuterNet net = full_outer_memorize(x, z, make_activation(Act::Softplus), 17);
    CHECK((forward_cols(net, x) - z).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SUBCASE("zero targets give zero weights") {
    Matrix x = random_matrix(2, 5, 19);
    Matrix z = Matrix::Zero(3, 5);
    FullOuterNet net = full_outer_memorize(x, z, make_activation(Act::Sigmoid), 19);
    CHECK(frob_norm(net.w2) == 0.0);
    CHECK((forward_cols(net, x) - z).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("heaviside with interlaced thresholds is exact") {
    Matrix x = random_matrix(4, 10, 23);
    Matrix z(3, 10);
    for (Index r = 0; r < 3; ++r) z.row(r) = grid_targets(10, 24 + r).transpose();
    FullOuterNet net = full_outer_memorize(x, z, make_activation(Act::Heaviside), 23);
    Matrix got = forward_cols(net, x);
    for (Index r = 0; r < 3; ++r)
      for (Index j = 0; j < 10; ++j) CHECK(got(r, j) == z(r, j));
  }
}

TEST_CASE("affine collapse witness") {
  SUBCASE("collinear points") {
    Matrix z(2, 3);
    z << 0, 1, 2, 0, 1, 2;
    auto w = affine_collapse_witness(z);
    CHECK(w.collinear);
  }
  SUBCASE("two points always collinear") {
    Matrix z = random_matrix(3, 2, 5);
    CHECK(affine_collapse_witness(z).collinear);
  }
  SUBCASE("canonical non-collinear triple against the brute-force oracle") {
    Matrix z(2, 3);
    z << 0, 1, 0, 0, 0, 1;
    auto w = affine_collapse_witness(z);
    CHECK_FALSE(w.collinear);
    auto oracle = brute_force_line_fit(z);
    CHECK(w.max_line_distance == doctest::Approx(oracle.max_dist).epsilon(1e-9));
    CHECK(w.rms_line_distance == doctest::Approx(oracle.rms_dist).epsilon(1e-9));
    // Frozen oracle values: sqrt(2)/3 and 1/sqrt(6).
    CHECK(w.max_line_distance == doctest::Approx(0.47140452079103168).epsilon(1e-9));
    CHECK(w.rms_line_distance == doctest::Approx(0.40824829046386307).epsilon(1e-9));
  }
  SUBCASE("random 2d sets agree with the brute-force oracle") {
    for (int trial = 0; trial < 5; ++trial) {
      Matrix z = random_matrix(2, 6, 60 + trial, Dist::Gaussian);
      auto w = affine_collapse_witness(z);
      auto oracle = brute_force_line_fit(z);
      CHECK(w.max_line_distance == doctest::Approx(oracle.max_dist).epsilon(1e-7));
      CHECK(w.rms_line_distance == doctest::Approx(oracle.rms_dist).epsilon(1e-7));
    }
  }
}

TEST_CASE("orthogonal blindness") {
  SUBCASE("axis-aligned projection is blind to the other axis exactly") {
    Rank1Net net;
    net.activation = make_activation(Act::Softplus);
    net.v1 = Vector::Zero(2);
    net.v1[0] = 1.0;
    net.u1 = random_vector(4, 1);
    net.b1 = random_vector(4, 2);
    net.v2 = random_vector(4, 3);
    Vector x = random_vector(2, 4);
    Vector e2 = Vector::Zero(2);
    e2[1] = 1.0;
    const double base = forward(net, x);
    const double moved = forward(net, Vector(x + e2));
    CHECK(moved == base);
  }
  SUBCASE("random nets and perpendicular directions") {
    for (int trial = 0; trial < 20; ++trial) {
      Rank1Net net;
      net.activation = make_activation(Act::Tanh);
      net.v1 = random_vector(5, 100 + trial, Dist::Gaussian).normalized();
      net.u1 = random_vector(8, 200 + trial);
      net.b1 = random_vector(8, 300 + trial);
      net.v2 = random_vector(8, 400 + trial);
      Vector x = random_vector(5, 500 + trial);
      for (int rep = 0; rep < 5; ++rep) {
        auto res = blindness_check(net, x, 600 + 10 * trial + rep);
        CHECK(res.delta <= 1e-12 * (1.0 + std::abs(forward(net, x))));
      }
    }
  }
  SUBCASE("negative control: unprojected perturbation moves the output") {
    Rank1Net net;
    net.activation = make_activation(Act::Sigmoid);
    net.v1 = random_vector(4, 31, Dist::Gaussian).normalized();
    net.u1 = random_vector(6, 32);
    net.b1 = random_vector(6, 33);
    net.v2 = random_vector(6, 34);
    Vector x = random_vector(4, 35);
    Vector raw = random_vector(4, 36, Dist::Gaussian);
    const double delta = std::abs(forward(net, Vector(x + raw)) - forward(net, x));
    CHECK(delta > 1e-8);
  }
}

TEST_CASE("rank-1 invariance under parallel projection") {
  for (int trial = 0; trial < 10; ++trial) {
    Rank1Net net;
    net.activation = make_activation(Act::Softplus);
    net.v1 = random_vector(6, 700 + trial, Dist::Gaussian).normalized();
    net.u1 = random_vector(10, 800 + trial);
    net.b1 = random_vector(10, 900 + trial);
    net.v2 = random_vector(10, 1000 + trial);
    Vector x = random_vector(6, 1100 + trial);
    Vector x_par = net.v1 * (net.v1.dot(x) / net.v1.squaredNorm());
    CHECK(std::abs(forward(net, x) - forward(net, x_par)) <=
          1e-12 * (1.0 + std::abs(forward(net, x))));
  }
}

TEST_CASE("forward matches direct recomputation") {
  for (int trial = 0; trial < 10; ++trial) {
    Rank1Net net;
    net.activation = make_activation(trial % 2 ? Act::Sigmoid : Act::Softplus);
    net.v1 = random_vector(3, 1200 + trial, Dist::Gaussian);
    net.u1 = random_vector(7, 1300 + trial);
    net.b1 = random_vector(7, 1400 + trial);
    net.v2 = random_vector(7, 1500 + trial);
    net.b2 = 0.25;
    Vector x = random_vector(3, 1600 + trial);
    CHECK(forward(net, x) ==
          doctest::Approx(forward_oracle(net, x)).epsilon(1e-13));
  }
}

}  // TEST_SUITE
