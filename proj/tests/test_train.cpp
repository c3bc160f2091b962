#include <doctest.h>

#include <cmath>

#include "dlor/experiments.hpp"
#include "dlor/train.hpp"

using namespace dlor;

namespace {

Dataset small_dataset(std::uint64_t seed, Index n = 12) {
  Dataset d;
  d.x = random_vector(n, seed);
  d.z = random_vector(n, seed + 1);
  return d;
}

// Central finite differences through the packed parameter vector.
Vector fd_gradient(TrainableNet& net, const Dataset& data, double step = 1e-5) {
  Vector params = pack_params(net);
  Vector g(params.size());
  for (Index i = 0; i < params.size(); ++i) {
    Vector p = params;
    p[i] = params[i] + step;
    unpack_params(net, p);
    const double up = mse(net, data);
    p[i] = params[i] - step;
    unpack_params(net, p);
    const double down = mse(net, data);
    g[i] = (up - down) / (2.0 * step);
  }
  unpack_params(net, params);
  return g;
}

void check_gradient(NetKind kind, int k, std::uint64_t seed) {
  TrainableNet net = make_net(kind, 16, k, make_activation(Act::Softplus));
  init_params(net, seed);
  Dataset data = small_dataset(seed + 100);
  Vector analytic = backward(net, data);
  Vector numeric = fd_gradient(net, data);
  const double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
  CHECK((analytic - numeric).cwiseAbs().maxCoeff() <= 1e-5 * scale);
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("parameter counts reproduce the reference table") {
  const int ks[] = {1, 2, 4, 8, 16};
  const long deep_expected[] = {578, 594, 626, 690, 818};
  const long wide_expected[] = {594, 611, 645, 713, 849};
  for (int i = 0; i < 5; ++i) {
    CHECK(param_count(NetKind::DeepDlor, 16, ks[i]) == deep_expected[i]);
    CHECK(param_count(NetKind::WideDlor, 16, ks[i]) == wide_expected[i]);
  }
  // Counts agree with the packed parameter vector length.
  for (int k : ks)
    for (NetKind kind : {NetKind::DenseMlp, NetKind::DeepDlor, NetKind::WideDlor}) {
      TrainableNet net = make_net(kind, 16, k, make_activation(Act::Softplus));
      CHECK(pack_params(net).size() == param_count(net));
    }
}

TEST_CASE("initialization bounds and determinism") {
  TrainableNet net = make_net(NetKind::DeepDlor, 16, 4, make_activation(Act::Softplus));
  init_params(net, 7);
  CHECK(net.alpha == 1.0);
  CHECK(net.b_in.cwiseAbs().maxCoeff() == 0.0);
  const double bw = 1.0 / std::sqrt(16.0);
  const double br = 1.0 / std::sqrt(4.0);
  for (const auto& sub : net.deep) {
    CHECK(sub.u.cwiseAbs().maxCoeff() <= br);
    CHECK(sub.v.cwiseAbs().maxCoeff() <= bw);
    CHECK(sub.b.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(net.w_in.cwiseAbs().maxCoeff() <= 1.0);

  TrainableNet again = make_net(NetKind::DeepDlor, 16, 4, make_activation(Act::Softplus));
  init_params(again, 7);
  CHECK(forward(net, 0.37) == forward(again, 0.37));

  TrainableNet wide = make_net(NetKind::WideDlor, 16, 4, make_activation(Act::Softplus));
  init_params(wide, 8);
  for (const auto& sub : wide.wide) CHECK(sub.alpha == 0.25);
}

TEST_CASE("forward spot checks") {
  SUBCASE("all-zero parameters, one substructure, computed by hand") {
    TrainableNet net = make_net(NetKind::DeepDlor, 4, 1, make_activation(Act::Softplus));
    // Everything zero, alpha = 1: h0 = rho(0), x1 = rho(h0), out = 0.
    net.alpha = 1.0;
    const double r0 = std::log(2.0);
    const double expected_hidden = std::log1p(std::exp(r0));
    (void)expected_hidden;
    CHECK(forward(net, 1.23) == 0.0);
    // Attach a readout of ones: out = sum_i rho(rho(0)) = 4 rho(rho(0)).
    net.w_out = Matrix::Ones(1, 4);
    CHECK(forward(net, 1.23) ==
          doctest::Approx(4.0 * std::log1p(std::exp(r0))).epsilon(1e-14));
  }
  SUBCASE("identity-weight collapse: each substructure applies rho") {
    TrainableNet net = make_net(NetKind::DeepDlor, 3, 2, make_activation(Act::Sigmoid));
    net.alpha = 1.0;  // U = V = 0, b = 0
    net.w_in(1, 0) = 1.0;
    net.w_out(0, 1) = 1.0;
    auto sig = make_activation(Act::Sigmoid);
    const double x = 0.8;
    const double h0 = eval(sig, x);
    const double h0_other = eval(sig, 0.0);
    const double l1 = eval(sig, h0), l1o = eval(sig, h0_other);
    const double l2 = eval(sig, l1);
    (void)l1o;
    CHECK(forward(net, x) == doctest::Approx(l2).epsilon(1e-14));
  }
  SUBCASE("dense net equals deep net under parameter transplant") {
    TrainableNet deep = make_net(NetKind::DeepDlor, 16, 1, make_activation(Act::Softplus));
    init_params(deep, 21);
    TrainableNet dense = make_net(NetKind::DenseMlp, 16, 1, make_activation(Act::Softplus));
    dense.w_in = deep.w_in;
    dense.b_in = deep.b_in;
    dense.w_out = deep.w_out;
    dense.b_out = deep.b_out;
    dense.dense[0].w = deep.alpha * Matrix::Identity(16, 16) +
                       deep.deep[0].u * deep.deep[0].v.transpose();
    dense.dense[0].b = deep.deep[0].b;
    for (double x : {-1.5, 0.0, 0.7}) {
      CHECK(forward(dense, x) == doctest::Approx(forward(deep, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradients match central finite differences") {
  // All three architectures across the full k range, one seed each; the
  // acceptance suite runs the 5-seed version.
  for (int k : {1, 2, 4, 8, 16}) {
    check_gradient(NetKind::DenseMlp, std::min(k, 4), 900 + k);
    check_gradient(NetKind::DeepDlor, k, 910 + k);
    check_gradient(NetKind::WideDlor, k, 920 + k);
  }
}

TEST_CASE("zero-residual batch has zero gradient") {
  TrainableNet net = make_net(NetKind::WideDlor, 8, 2, make_activation(Act::Softplus));
  init_params(net, 5);
  Dataset d;
  d.x = random_vector(6, 55);
  d.z.resize(6);
  for (Index i = 0; i < 6; ++i) d.z[i] = forward(net, d.x[i]);
  CHECK(backward(net, d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shared alpha gradient equals the sum of tied per-layer gradients") {
  TrainableNet net = make_net(NetKind::DeepDlor, 8, 3, make_activation(Act::Softplus));
  init_params(net, 31);
  Dataset data = small_dataset(32, 10);

  // Test-local forward with one alpha per substructure.
  auto forward_split_alpha = [&](const Vector& alphas, double x) {
    Vector state = eval_vec(net.activation, Vector(net.w_in.col(0) * x + net.b_in));
    for (int l = 0; l < net.k; ++l) {
      Vector a = alphas[l] * state + net.deep[l].u * (net.deep[l].v.transpose() * state) +
                 net.deep[l].b;
      state = eval_vec(net.activation, a);
    }
    return net.w_out.row(0).dot(state) + net.b_out;
  };
  auto split_mse = [&](const Vector& alphas) {
    double acc = 0.0;
    for (Index i = 0; i < data.x.size(); ++i) {
      const double r = forward_split_alpha(alphas, data.x[i]) - data.z[i];
      acc += r * r;
    }
    return acc / static_cast<double>(data.x.size());
  };

  const double step = 1e-6;
  double tied_sum = 0.0;
  for (int l = 0; l < net.k; ++l) {
    Vector up = Vector::Constant(net.k, net.alpha);
    Vector down = up;
    up[l] += step;
    down[l] -= step;
    tied_sum += (split_mse(up) - split_mse(down)) / (2.0 * step);
  }

  Vector g = backward(net, data);
  const Index alpha_index = g.size() - net.width - 2;  // before w_out and b_out
  CHECK(g[alpha_index] == doctest::Approx(tied_sum).epsilon(1e-5));
}

TEST_CASE("adam and scheduler behavior") {
  SUBCASE("threshold already satisfied at init") {
    TrainableNet net = make_net(NetKind::DeepDlor, 8, 2, make_activation(Act::Softplus));
    init_params(net, 3);
    Dataset d;
    d.x = random_vector(4, 77);
    d.z.resize(4);
    for (Index i = 0; i < 4; ++i) d.z[i] = forward(net, d.x[i]);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.stop_threshold = 1e-6;
    TrainResult res = train(net, d, d, cfg);
    CHECK(res.epochs_run == 0);
    CHECK(res.reached_threshold);
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    TrainableNet net = make_net(NetKind::DeepDlor, 8, 2, make_activation(Act::Softplus));
    init_params(net, 4);
    Dataset d;
    d.x = random_vector(4, 78);
    d.z.resize(4);
    for (Index i = 0; i < 4; ++i) d.z[i] = forward(net, d.x[i]);
    Vector before = pack_params(net);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.scheduler.reset();
    train(net, d, d, cfg);
    CHECK((pack_params(net) - before).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("plateau scheduler halves the rate after patience bad epochs") {
    // A net already at its exact targets never improves, so every epoch is
    // a bad epoch and the rate halves on schedule.
    TrainableNet net = make_net(NetKind::DeepDlor, 8, 2, make_activation(Act::Softplus));
    init_params(net, 5);
    Dataset d;
    d.x = random_vector(4, 79);
    d.z.resize(4);
    for (Index i = 0; i < 4; ++i) d.z[i] = forward(net, d.x[i]);
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.epochs = 25;
    cfg.scheduler = SchedulerConfig{10, 0.5, 1e-5};
    cfg.record_every = 1;
    TrainResult res = train(net, d, d, cfg);
    CHECK(res.loss_curve[9].lr == 0.01);    // epoch 9: still the initial rate
    CHECK(res.loss_curve[10].lr == 0.005);  // epoch 10: tenth bad epoch, halved
    CHECK(res.loss_curve[20].lr == 0.0025);
  }
  SUBCASE("min_lr floors the schedule") {
    TrainableNet net = make_net(NetKind::DeepDlor, 8, 2, make_activation(Act::Softplus));
    init_params(net, 6);
    Dataset d;
    d.x = random_vector(4, 80);
    d.z.resize(4);
    for (Index i = 0; i < 4; ++i) d.z[i] = forward(net, d.x[i]);
    TrainConfig cfg;
    cfg.lr = 4e-5;
    cfg.epochs = 30;
    cfg.scheduler = SchedulerConfig{5, 0.5, 1e-5};
    TrainResult res = train(net, d, d, cfg);
    CHECK(res.loss_curve.back().lr == 1e-5);
  }
}

TEST_CASE("training is deterministic and converges on the sawtooth baseline") {
  auto data = make_sawtooth();
  TrainableNet a = make_net(NetKind::DenseMlp, 16, 3, make_activation(Act::Softplus));
  init_params(a, 42);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = 300;
  cfg.scheduler.reset();
  cfg.record_every = 50;
  TrainResult ra = train(a, data.train, data.test, cfg);

  TrainableNet b = make_net(NetKind::DenseMlp, 16, 3, make_activation(Act::Softplus));
  init_params(b, 42);
  TrainResult rb = train(b, data.train, data.test, cfg);

  REQUIRE(ra.loss_curve.size() == rb.loss_curve.size());
  for (size_t i = 0; i < ra.loss_curve.size(); ++i) {
    CHECK(ra.loss_curve[i].train_mse == rb.loss_curve[i].train_mse);
    CHECK(ra.loss_curve[i].lr == rb.loss_curve[i].lr);
  }
  // Loss curve indexes are strictly increasing and the loss actually drops.
  for (size_t i = 1; i < ra.loss_curve.size(); ++i)
    CHECK(ra.loss_curve[i].epoch > ra.loss_curve[i - 1].epoch);
  CHECK(ra.final_train_mse < ra.loss_curve.front().train_mse);
}

TEST_CASE("dense layer view matches the net") {
  TrainableNet net = make_net(NetKind::DenseMlp, 16, 3, make_activation(Act::Softplus));
  init_params(net, 9);
  auto layers = to_dense_layers(net);
  CHECK(layers.size() == 5);
  CHECK(layers[0].w.rows() == 16);
  CHECK(layers[0].w.cols() == 1);
  CHECK_FALSE(layers.back().activate);
  Vector x(1);
  x[0] = 0.4;
  CHECK(dense_forward(layers, net.activation, x)[0] ==
        doctest::Approx(forward(net, 0.4)).epsilon(1e-14));
}

}  // TEST_SUITE
