#include "dlor/construct.hpp"

#include <cmath>

namespace dlor {

namespace {

void require_h(double h) {
  if (!(h > 0.0)) throw Error("scaling parameter h must be positive");
}

void require_usable(const ActivationSpec& act) {
  if (!usable_for_h(act))
    throw Error(std::string("activation ") + act_name(act.name) +
                " is not differentiable at its expansion point");
}

}  // namespace

Vector identity_block(const Vector& x, double h, const ActivationSpec& act) {
  require_h(h);
  require_usable(act);
  const double denom = h * act.drho_c;
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i)
    out[i] = (eval(act, h * x[i] + act.c) - act.rho_c) / denom;
  return out;
}

Vector affine_apply(const AffineLayer& layer, const Vector& x, const ActivationSpec& act) {
  if (layer.w.cols() != x.size()) throw DimensionMismatch("affine_apply: input size");
  Vector out(layer.w.rows());
  for (Index i = 0; i < layer.w.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < layer.w.cols(); ++j) acc += layer.w(i, j) * x[j];
    out[i] = acc + layer.b[i];
  }
  if (layer.apply_activation)
    for (Index i = 0; i < out.size(); ++i) out[i] = eval(act, out[i]);
  return out;
}

DeepBlockPlan build_deep_block(const Matrix& w, const Vector& b, int rank_cap, double alpha,
                               double h, const ActivationSpec& act, std::uint64_t seed,
                               bool activate_output) {
  require_h(h);
  require_usable(act);
  if (w.rows() != w.cols()) throw DimensionMismatch("build_deep_block: matrix not square");
  if (b.size() != w.rows()) throw DimensionMismatch("build_deep_block: bias size");

  const Index n = w.rows();
  const double eps0 = 1e-10 * std::max(1.0, w.cwiseAbs().maxCoeff());
  const Matrix ws = perturb_to_invertible(w, eps0);
  auto fact = multiplicative_factorize(ws, rank_cap, alpha, seed);
  const Index depth = fact.depth();

  DeepBlockPlan plan;
  plan.h = h;
  plan.activation = act;
  plan.source_w = ws;
  plan.source_b = b;
  plan.alpha = alpha;
  plan.rank_cap = rank_cap;
  plan.residual = fact.residual;

  const double c = act.c;
  const double pc = act.rho_c;
  const double dpc = act.drho_c;
  const Vector ones = Vector::Ones(n);

  if (depth == 1) {
    // Single component equals the whole matrix; emit the layer directly.
    plan.layers.push_back({fact.components[0].dense(), b, activate_output});
    return plan;
  }

  for (Index l = 1; l <= depth; ++l) {
    const Matrix m = fact.components[l - 1].dense();
    AffineLayer layer;
    if (l == 1) {
      layer.w = h * m;
      layer.b = c * ones;
      layer.apply_activation = true;
    } else if (l < depth) {
      layer.w = m / dpc;
      layer.b = c * ones - (pc / dpc) * (m * ones);
      layer.apply_activation = true;
    } else {
      layer.w = m / (h * dpc);
      layer.b = b - (pc / (h * dpc)) * (m * ones);
      layer.apply_activation = activate_output;
    }
    plan.layers.push_back(std::move(layer));
  }
  return plan;
}

WideBlockPlan build_wide_block(const Matrix& w, const Vector& b, int num_parts, double h,
                               const ActivationSpec& act, bool activate_output) {
  require_h(h);
  require_usable(act);
  if (w.rows() != w.cols()) throw DimensionMismatch("build_wide_block: matrix not square");
  if (b.size() != w.rows()) throw DimensionMismatch("build_wide_block: bias size");
  if (num_parts < 2)
    throw BetaDegenerate("build_wide_block: zero-sum betas need at least two parts");

  const Index n = w.rows();
  auto split = additive_split(w, num_parts);
  const Vector betas = *split.betas;

  WideBlockPlan plan;
  plan.h = h;
  plan.activation = act;
  plan.final_activation = activate_output;
  plan.source_w = w;
  plan.source_b = b;
  plan.betas = betas;
  plan.width = n;
  plan.parts = num_parts;
  plan.target_bias = b;
  plan.stacked_w.resize(num_parts * n, n);
  plan.stacked_b = Vector::Constant(num_parts * n, act.c);
  plan.readout = Matrix::Zero(n, num_parts * n);
  const double readout_scale = 1.0 / (h * act.drho_c);
  for (int l = 0; l < num_parts; ++l) {
    plan.stacked_w.middleRows(l * n, n) = (h / betas[l]) * split.summands[l];
    plan.readout.middleCols(l * n, n) =
        (betas[l] * readout_scale) * Matrix::Identity(n, n);
  }
  return plan;
}

Vector wide_final_preactivation(const WideBlockPlan& plan, const Vector& x) {
  const Index n = plan.width;
  const int parts = plan.parts;
  if (x.size() != n) throw DimensionMismatch("wide plan: input size");

  std::vector<Vector> hidden(parts);
  for (int l = 0; l < parts; ++l) {
    Vector a = plan.stacked_w.middleRows(l * n, n) * x + plan.stacked_b.segment(l * n, n);
    hidden[l] = eval_vec(plan.activation, a);
  }
  // The betas are (1, ..., 1, -(L-1)), so the contraction regroups as a sum
  // of branch differences; identical branches then cancel exactly and the
  // zero-order offsets never reach the bias.
  Vector acc = Vector::Zero(n);
  for (int l = 0; l + 1 < parts; ++l) acc += hidden[l] - hidden[parts - 1];
  const double denom = plan.h * plan.activation.drho_c;
  Vector pre(n);
  for (Index i = 0; i < n; ++i) pre[i] = acc[i] / denom + plan.target_bias[i];
  return pre;
}

Vector simulate(const WideBlockPlan& plan, const Vector& x) {
  Vector pre = wide_final_preactivation(plan, x);
  return plan.final_activation ? eval_vec(plan.activation, pre) : pre;
}

Vector simulate(const DeepBlockPlan& plan, const Vector& x) {
  Vector state = x;
  for (const auto& layer : plan.layers) state = affine_apply(layer, state, plan.activation);
  return state;
}

AugmentedBlockPlan build_augmented_block(const Matrix& w, const Vector& b, double h,
                                         const ActivationSpec& act) {
  require_h(h);
  require_usable(act);
  if (w.rows() != w.cols()) throw DimensionMismatch("build_augmented_block: matrix not square");
  if (b.size() != w.rows()) throw DimensionMismatch("build_augmented_block: bias size");

  const Index n = w.rows();
  const Index n2 = 2 * n;
  AugmentedBlockPlan plan;
  plan.h = h;
  plan.activation = act;
  plan.source_w = w;
  plan.source_b = b;

  auto s = svd(w);
  Index k = 0;
  if (s.sigma.size() > 0 && s.sigma[0] > 0.0)
    for (Index i = 0; i < s.sigma.size(); ++i)
      if (s.sigma[i] > 1e-9 * s.sigma[0]) ++k;
  for (Index i = 0; i < k; ++i)
    plan.rank1_terms.emplace_back(Vector(s.sigma[i] * s.u.col(i)),
                                  Vector(s.vt.row(i).transpose()));

  Vector b_tilde = Vector::Zero(n2);
  b_tilde.tail(n) = b;

  if (k == 0) {
    // Zero map: one exact layer [x; 0] -> [rho(x); rho(b)].
    plan.layers.push_back({Matrix::Identity(n2, n2), b_tilde, true});
    return plan;
  }

  const double c = act.c;
  const double pc = act.rho_c;
  const double dpc = act.drho_c;
  const Vector ones = Vector::Ones(n2);

  auto lifted = [&](Index i) {
    Matrix m = Matrix::Identity(n2, n2);
    const auto& [u, v] = plan.rank1_terms[i];
    m.bottomLeftCorner(n, n) += u * v.transpose();
    return m;
  };

  for (Index l = 1; l <= k; ++l) {
    const Matrix m = lifted(l - 1);
    AffineLayer layer;
    if (l == 1) {
      layer.w = h * m;
      layer.b = c * ones;
    } else {
      layer.w = m / dpc;
      layer.b = c * ones - (pc / dpc) * (m * ones);
    }
    layer.apply_activation = true;
    plan.layers.push_back(std::move(layer));
  }
  AffineLayer final_layer;
  final_layer.w = Matrix::Identity(n2, n2) / (h * dpc);
  final_layer.b = b_tilde - (pc / (h * dpc)) * ones;
  final_layer.apply_activation = true;
  plan.layers.push_back(std::move(final_layer));
  return plan;
}

Vector simulate(const AugmentedBlockPlan& plan, const Vector& x) {
  const Index n = plan.source_w.rows();
  if (x.size() != n) throw DimensionMismatch("augmented plan: input size");
  Vector state = Vector::Zero(2 * n);
  state.head(n) = x;
  for (const auto& layer : plan.layers) state = affine_apply(layer, state, plan.activation);
  return state;
}

DeepBlockPlan build_reset_swap(Index n, double epsilon, int rank_cap, double alpha, double h,
                               const ActivationSpec& act, std::uint64_t seed) {
  require_h(h);
  require_usable(act);
  if (!(epsilon > 0.0)) throw Error("build_reset_swap: epsilon must be positive");

  const Index n2 = 2 * n;
  Matrix s = epsilon * Matrix::Identity(n2, n2);
  s.topRightCorner(n, n) += Matrix::Identity(n, n);

  auto fact = multiplicative_factorize(s, rank_cap, alpha, seed);
  const Index depth = fact.depth();

  DeepBlockPlan plan;
  plan.h = h;
  plan.activation = act;
  plan.source_w = s;
  plan.source_b = Vector::Zero(n2);
  plan.alpha = alpha;
  plan.rank_cap = rank_cap;
  plan.residual = fact.residual;

  const double c = act.c;
  const double pc = act.rho_c;
  const double dpc = act.drho_c;
  const Vector ones = Vector::Ones(n2);

  for (Index l = 1; l <= depth; ++l) {
    const Matrix m = fact.components[l - 1].dense();
    AffineLayer layer;
    if (l == 1) {
      layer.w = h * m;
      layer.b = c * ones;
    } else {
      layer.w = m / dpc;
      layer.b = c * ones - (pc / dpc) * (m * ones);
    }
    layer.apply_activation = true;
    plan.layers.push_back(std::move(layer));
  }
  // Trailing decode keeps the hand-off linear: output = S_eps x + o(1).
  AffineLayer decode;
  decode.w = Matrix::Identity(n2, n2) / (h * dpc);
  decode.b = Vector::Constant(n2, -pc / (h * dpc));
  decode.apply_activation = false;
  plan.layers.push_back(std::move(decode));
  return plan;
}

Vector dense_forward(const std::vector<DenseLayer>& net, const ActivationSpec& act,
                     const Vector& x) {
  Vector state = x;
  for (const auto& layer : net) {
    if (layer.w.cols() != state.size()) throw DimensionMismatch("dense_forward: layer size");
    state = layer.w * state + layer.b;
    if (layer.activate) state = eval_vec(act, state);
  }
  return state;
}

std::vector<DeepBlockPlan> transfer_network(const std::vector<DenseLayer>& net,
                                            const ActivationSpec& act, int rank_cap,
                                            double alpha, double h, std::uint64_t seed,
                                            double pad_value) {
  Rng rng(seed);
  std::vector<DeepBlockPlan> plans;
  plans.reserve(net.size());
  for (size_t i = 0; i < net.size(); ++i) {
    auto emb = embed_rectangular(net[i].w, pad_value);
    Vector b_pad = Vector::Zero(emb.pad.dim);
    b_pad.head(net[i].b.size()) = net[i].b;
    DeepBlockPlan plan = build_deep_block(emb.w_square, b_pad, rank_cap, alpha, h, act,
                                          rng.split(i).next_u64(), net[i].activate);
    plan.pad = emb.pad;
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<WideBlockPlan> transfer_network_wide(const std::vector<DenseLayer>& net,
                                                 const ActivationSpec& act, int num_parts,
                                                 double h, double pad_value) {
  std::vector<WideBlockPlan> plans;
  plans.reserve(net.size());
  for (const auto& layer : net) {
    auto emb = embed_rectangular(layer.w, pad_value);
    Vector b_pad = Vector::Zero(emb.pad.dim);
    b_pad.head(layer.b.size()) = layer.b;
    WideBlockPlan plan =
        build_wide_block(emb.w_square, b_pad, num_parts, h, act, layer.activate);
    plan.pad = emb.pad;
    plans.push_back(std::move(plan));
  }
  return plans;
}

namespace {

template <typename Plan>
Vector simulate_chain(const std::vector<Plan>& plans, const Vector& x) {
  Vector state = x;
  for (const auto& plan : plans) {
    const PadSpec& pad = plan.pad;
    if (pad.dim > 0) {
      state = truncate_output(simulate(plan, pad_input(state, pad)), pad);
    } else {
      state = simulate(plan, state);
    }
  }
  return state;
}

}  // namespace

Vector simulate(const std::vector<DeepBlockPlan>& plans, const Vector& x) {
  return simulate_chain(plans, x);
}

Vector simulate(const std::vector<WideBlockPlan>& plans, const Vector& x) {
  return simulate_chain(plans, x);
}

long dlor_param_count(long n, long r) { return 2 * n * r + 1; }

long dense_layer_sim_count(long n) { return n * (2 * n + 1); }

}  // namespace dlor
