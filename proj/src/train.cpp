#include "dlor/train.hpp"

#include <cmath>

namespace dlor {

namespace {

Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

void fill_uniform(Matrix& m, Rng& rng, double bound) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = bound * rng.uniform();
}

struct Trace {
  // Shared
  Vector a_in, h_in;
  double out = 0.0;
  // Dense / deep chains
  std::vector<Vector> a, h;
  // Wide branches
  std::vector<Vector> branch_a, branch_h;
  Vector y;   // wide aggregate pre-activation
  Vector xw;  // rho(y)
};

Trace run_forward(const TrainableNet& net, double x) {
  Trace t;
  t.a_in = net.w_in.col(0) * x + net.b_in;
  t.h_in = eval_vec(net.activation, t.a_in);
  Vector state = t.h_in;
  switch (net.kind) {
    case NetKind::DenseMlp:
      for (const auto& sub : net.dense) {
        Vector a = sub.w * state + sub.b;
        t.a.push_back(a);
        state = eval_vec(net.activation, a);
        t.h.push_back(state);
      }
      break;
    case NetKind::DeepDlor:
      for (const auto& sub : net.deep) {
        Vector a = net.alpha * state + sub.u * (sub.v.transpose() * state) + sub.b;
        t.a.push_back(a);
        state = eval_vec(net.activation, a);
        t.h.push_back(state);
      }
      break;
    case NetKind::WideDlor: {
      t.y = net.outer_bias;
      for (const auto& sub : net.wide) {
        Vector a = sub.u * (sub.v.transpose() * state) + sub.b;
        t.branch_a.push_back(a);
        Vector r = eval_vec(net.activation, a);
        t.branch_h.push_back(r);
        t.y += sub.alpha * r;
      }
      t.xw = eval_vec(net.activation, t.y);
      state = t.xw;
      break;
    }
  }
  t.out = net.w_out.row(0).dot(state) + net.b_out;
  return t;
}

Vector deriv_vec(const TrainableNet& net, const Vector& a) {
  Vector d(a.size());
  for (Index i = 0; i < a.size(); ++i) d[i] = deriv_total(net.activation.name, a[i]);
  return d;
}

struct Grads {
  Matrix w_in;
  Vector b_in;
  Matrix w_out;
  double b_out = 0.0;
  std::vector<Matrix> sub_u, sub_v, sub_w;
  std::vector<Vector> sub_b;
  double alpha = 0.0;
  Vector alphas;  // wide per-branch
  Vector outer_bias;
};

Grads zero_grads(const TrainableNet& net) {
  Grads g;
  g.w_in = Matrix::Zero(net.width, 1);
  g.b_in = Vector::Zero(net.width);
  g.w_out = Matrix::Zero(1, net.width);
  for (int l = 0; l < net.k; ++l) {
    switch (net.kind) {
      case NetKind::DenseMlp:
        g.sub_w.push_back(Matrix::Zero(net.width, net.width));
        break;
      case NetKind::DeepDlor:
      case NetKind::WideDlor:
        g.sub_u.push_back(Matrix::Zero(net.width, net.rank));
        g.sub_v.push_back(Matrix::Zero(net.width, net.rank));
        break;
    }
    g.sub_b.push_back(Vector::Zero(net.width));
  }
  if (net.kind == NetKind::WideDlor) {
    g.alphas = Vector::Zero(net.k);
    g.outer_bias = Vector::Zero(net.width);
  }
  return g;
}

void accumulate_sample(const TrainableNet& net, const Trace& t, double x, double go, Grads& g) {
  const Vector& last = net.kind == NetKind::WideDlor
                           ? t.xw
                           : (t.h.empty() ? t.h_in : t.h.back());
  g.w_out.row(0) += go * last.transpose();
  g.b_out += go;
  Vector gh = net.w_out.row(0).transpose() * go;

  switch (net.kind) {
    case NetKind::DenseMlp:
      for (int l = net.k - 1; l >= 0; --l) {
        const Vector& prev = l == 0 ? t.h_in : t.h[l - 1];
        Vector ga = gh.cwiseProduct(deriv_vec(net, t.a[l]));
        g.sub_w[l] += ga * prev.transpose();
        g.sub_b[l] += ga;
        gh = net.dense[l].w.transpose() * ga;
      }
      break;
    case NetKind::DeepDlor:
      for (int l = net.k - 1; l >= 0; --l) {
        const Vector& prev = l == 0 ? t.h_in : t.h[l - 1];
        Vector ga = gh.cwiseProduct(deriv_vec(net, t.a[l]));
        g.alpha += ga.dot(prev);
        g.sub_u[l] += ga * (prev.transpose() * net.deep[l].v);
        g.sub_v[l] += prev * (ga.transpose() * net.deep[l].u);
        g.sub_b[l] += ga;
        gh = net.alpha * ga + net.deep[l].v * (net.deep[l].u.transpose() * ga);
      }
      break;
    case NetKind::WideDlor: {
      Vector gy = gh.cwiseProduct(deriv_vec(net, t.y));
      g.outer_bias += gy;
      Vector gh0 = Vector::Zero(net.width);
      for (int l = 0; l < net.k; ++l) {
        g.alphas[l] += gy.dot(t.branch_h[l]);
        Vector ga = (net.wide[l].alpha * gy).cwiseProduct(deriv_vec(net, t.branch_a[l]));
        g.sub_u[l] += ga * (t.h_in.transpose() * net.wide[l].v);
        g.sub_v[l] += t.h_in * (ga.transpose() * net.wide[l].u);
        g.sub_b[l] += ga;
        gh0 += net.wide[l].v * (net.wide[l].u.transpose() * ga);
      }
      gh = gh0;
      break;
    }
  }
  Vector ga_in = gh.cwiseProduct(deriv_vec(net, t.a_in));
  g.w_in.col(0) += ga_in * x;
  g.b_in += ga_in;
}

void append(Vector& out, Index& pos, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out[pos++] = m(i, j);
}

void append(Vector& out, Index& pos, const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) out[pos++] = v[i];
}

void take(const Vector& in, Index& pos, Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = in[pos++];
}

void take(const Vector& in, Index& pos, Vector& v) {
  for (Index i = 0; i < v.size(); ++i) v[i] = in[pos++];
}

Vector pack_grads(const TrainableNet& net, const Grads& g) {
  Vector out(param_count(net));
  Index pos = 0;
  append(out, pos, g.w_in);
  append(out, pos, g.b_in);
  for (int l = 0; l < net.k; ++l) {
    switch (net.kind) {
      case NetKind::DenseMlp:
        append(out, pos, g.sub_w[l]);
        break;
      case NetKind::DeepDlor:
      case NetKind::WideDlor:
        append(out, pos, g.sub_u[l]);
        append(out, pos, g.sub_v[l]);
        break;
    }
    append(out, pos, g.sub_b[l]);
    if (net.kind == NetKind::WideDlor) out[pos++] = g.alphas[l];
  }
  if (net.kind == NetKind::DeepDlor) out[pos++] = g.alpha;
  if (net.kind == NetKind::WideDlor) append(out, pos, g.outer_bias);
  append(out, pos, g.w_out);
  out[pos++] = g.b_out;
  return out;
}

}  // namespace

const char* net_kind_name(NetKind k) {
  switch (k) {
    case NetKind::DenseMlp: return "dense";
    case NetKind::DeepDlor: return "deep";
    case NetKind::WideDlor: return "wide";
  }
  return "?";
}

NetKind net_kind_from_name(const std::string& name) {
  if (name == "dense") return NetKind::DenseMlp;
  if (name == "deep") return NetKind::DeepDlor;
  if (name == "wide") return NetKind::WideDlor;
  throw Error("unknown architecture: " + name);
}

TrainableNet make_net(NetKind kind, Index width, int k, const ActivationSpec& activation) {
  if (width < 1 || k < 1) throw Error("make_net: width and k must be positive");
  TrainableNet net;
  net.kind = kind;
  net.width = width;
  net.k = k;
  net.rank = ceil_div(width, k);
  net.activation = activation;
  net.w_in = Matrix::Zero(width, 1);
  net.b_in = Vector::Zero(width);
  net.w_out = Matrix::Zero(1, width);
  net.b_out = 0.0;
  for (int l = 0; l < k; ++l) {
    switch (kind) {
      case NetKind::DenseMlp:
        net.dense.push_back({Matrix::Zero(width, width), Vector::Zero(width)});
        break;
      case NetKind::DeepDlor:
        net.deep.push_back(
            {Matrix::Zero(width, net.rank), Matrix::Zero(width, net.rank), Vector::Zero(width)});
        break;
      case NetKind::WideDlor:
        net.wide.push_back({Matrix::Zero(width, net.rank), Matrix::Zero(width, net.rank),
                            Vector::Zero(width), 0.0});
        break;
    }
  }
  net.alpha = 1.0;
  if (kind == NetKind::WideDlor) net.outer_bias = Vector::Zero(width);
  return net;
}

void init_params(TrainableNet& net, std::uint64_t seed) {
  Rng rng(seed);
  fill_uniform(net.w_in, rng, 1.0);  // fan_in 1
  net.b_in.setZero();
  const double bw = 1.0 / std::sqrt(static_cast<double>(net.width));
  const double br = 1.0 / std::sqrt(static_cast<double>(net.rank));
  for (int l = 0; l < net.k; ++l) {
    switch (net.kind) {
      case NetKind::DenseMlp:
        fill_uniform(net.dense[l].w, rng, bw);
        net.dense[l].b.setZero();
        break;
      case NetKind::DeepDlor:
        fill_uniform(net.deep[l].u, rng, br);  // u consumes the r-dim projection
        fill_uniform(net.deep[l].v, rng, bw);
        net.deep[l].b.setZero();
        break;
      case NetKind::WideDlor:
        fill_uniform(net.wide[l].u, rng, br);
        fill_uniform(net.wide[l].v, rng, bw);
        net.wide[l].b.setZero();
        net.wide[l].alpha = 1.0 / static_cast<double>(net.k);
        break;
    }
  }
  net.alpha = 1.0;
  if (net.kind == NetKind::WideDlor) net.outer_bias.setZero();
  fill_uniform(net.w_out, rng, bw);
  net.b_out = 0.0;
}

double forward(const TrainableNet& net, double x) { return run_forward(net, x).out; }

double forward(const TrainableNet& net, const Vector& x) {
  if (x.size() != 1) throw DimensionMismatch("forward: scalar-input net");
  return forward(net, x[0]);
}

long param_count(NetKind kind, Index width, int k) {
  const long w = static_cast<long>(width);
  const long r = static_cast<long>(ceil_div(width, k));
  const long io = (w + w) + (w + 1);  // input projection + readout
  switch (kind) {
    case NetKind::DenseMlp: return io + k * (w * w + w);
    case NetKind::DeepDlor: return io + k * (2 * w * r + w) + 1;
    case NetKind::WideDlor: return io + k * (2 * w * r + w + 1) + w;
  }
  return 0;
}

long param_count(const TrainableNet& net) { return param_count(net.kind, net.width, net.k); }

Vector pack_params(const TrainableNet& net) {
  Vector out(param_count(net));
  Index pos = 0;
  append(out, pos, net.w_in);
  append(out, pos, net.b_in);
  for (int l = 0; l < net.k; ++l) {
    switch (net.kind) {
      case NetKind::DenseMlp:
        append(out, pos, net.dense[l].w);
        append(out, pos, net.dense[l].b);
        break;
      case NetKind::DeepDlor:
        append(out, pos, net.deep[l].u);
        append(out, pos, net.deep[l].v);
        append(out, pos, net.deep[l].b);
        break;
      case NetKind::WideDlor:
        append(out, pos, net.wide[l].u);
        append(out, pos, net.wide[l].v);
        append(out, pos, net.wide[l].b);
        out[pos++] = net.wide[l].alpha;
        break;
    }
  }
  if (net.kind == NetKind::DeepDlor) out[pos++] = net.alpha;
  if (net.kind == NetKind::WideDlor) append(out, pos, net.outer_bias);
  append(out, pos, net.w_out);
  out[pos++] = net.b_out;
  return out;
}

void unpack_params(TrainableNet& net, const Vector& params) {
  if (params.size() != param_count(net)) throw DimensionMismatch("unpack_params: size");
  Index pos = 0;
  take(params, pos, net.w_in);
  take(params, pos, net.b_in);
  for (int l = 0; l < net.k; ++l) {
    switch (net.kind) {
      case NetKind::DenseMlp:
        take(params, pos, net.dense[l].w);
        take(params, pos, net.dense[l].b);
        break;
      case NetKind::DeepDlor:
        take(params, pos, net.deep[l].u);
        take(params, pos, net.deep[l].v);
        take(params, pos, net.deep[l].b);
        break;
      case NetKind::WideDlor:
        take(params, pos, net.wide[l].u);
        take(params, pos, net.wide[l].v);
        take(params, pos, net.wide[l].b);
        net.wide[l].alpha = params[pos++];
        break;
    }
  }
  if (net.kind == NetKind::DeepDlor) net.alpha = params[pos++];
  if (net.kind == NetKind::WideDlor) take(params, pos, net.outer_bias);
  take(params, pos, net.w_out);
  net.b_out = params[pos++];
}

double mse(const TrainableNet& net, const Dataset& data) {
  if (data.x.size() == 0) throw Error("mse: empty dataset");
  double acc = 0.0;
  for (Index i = 0; i < data.x.size(); ++i) {
    const double r = forward(net, data.x[i]) - data.z[i];
    acc += r * r;
  }
  return acc / static_cast<double>(data.x.size());
}

Vector backward(const TrainableNet& net, const Dataset& data) {
  if (data.x.size() == 0) throw Error("backward: empty dataset");
  Grads g = zero_grads(net);
  const double scale = 2.0 / static_cast<double>(data.x.size());
  for (Index i = 0; i < data.x.size(); ++i) {
    Trace t = run_forward(net, data.x[i]);
    accumulate_sample(net, t, data.x[i], scale * (t.out - data.z[i]), g);
  }
  return pack_grads(net, g);
}

TrainResult train(TrainableNet& net, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& cfg) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  constexpr double kRelImprove = 1e-8;

  TrainResult result;
  double cur = mse(net, train_data);
  double lr = cfg.lr;
  result.loss_curve.push_back({0, cur, mse(net, test_data), lr});
  if (cfg.stop_threshold && cur < *cfg.stop_threshold) {
    result.final_train_mse = cur;
    result.final_test_mse = mse(net, test_data);
    result.epochs_run = 0;
    result.reached_threshold = true;
    return result;
  }

  Vector params = pack_params(net);
  Vector m = Vector::Zero(params.size());
  Vector v = Vector::Zero(params.size());
  double best = cur;
  int bad_epochs = 0;

  int epoch = 0;
  for (epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Vector g = backward(net, train_data);
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(kBeta1, epoch);
    const double bc2 = 1.0 - std::pow(kBeta2, epoch);
    for (Index i = 0; i < params.size(); ++i) {
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
    unpack_params(net, params);

    cur = mse(net, train_data);
    if (!std::isfinite(cur)) throw Diverged(epoch);

    if (cfg.scheduler) {
      if (cur < best * (1.0 - kRelImprove)) {
        best = cur;
        bad_epochs = 0;
      } else {
        ++bad_epochs;
        if (bad_epochs >= cfg.scheduler->patience) {
          lr = std::max(lr * cfg.scheduler->factor, cfg.scheduler->min_lr);
          bad_epochs = 0;
        }
      }
    }

    const bool reached = cfg.stop_threshold && cur < *cfg.stop_threshold;
    if (epoch % cfg.record_every == 0 || epoch == cfg.epochs || reached)
      result.loss_curve.push_back({epoch, cur, mse(net, test_data), lr});
    if (reached) {
      result.reached_threshold = true;
      break;
    }
  }
  result.epochs_run = std::min(epoch, cfg.epochs);
  result.final_train_mse = cur;
  result.final_test_mse = mse(net, test_data);
  return result;
}

std::vector<DenseLayer> to_dense_layers(const TrainableNet& net) {
  if (net.kind != NetKind::DenseMlp) throw Error("to_dense_layers: dense nets only");
  std::vector<DenseLayer> layers;
  layers.push_back({net.w_in, net.b_in, true});
  for (const auto& sub : net.dense) layers.push_back({sub.w, sub.b, true});
  Vector b_out(1);
  b_out[0] = net.b_out;
  layers.push_back({net.w_out, b_out, false});
  return layers;
}

}  // namespace dlor
