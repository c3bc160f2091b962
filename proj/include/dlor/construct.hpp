#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dlor/activation.hpp"
#include "dlor/decompose.hpp"
#include "dlor/linalg.hpp"

namespace dlor {

struct AffineLayer {
  Matrix w;
  Vector b;
  bool apply_activation = true;
};

/// One dense layer of an ordinary feedforward net.
struct DenseLayer {
  Matrix w;
  Vector b;
  bool activate = true;
};

/// Sequential realization of one dense layer from its multiplicative
/// factorization: encode with h, carry the state through scaled components,
/// decode with 1/h in the last layer.
struct DeepBlockPlan {
  std::vector<AffineLayer> layers;
  double h = 0.0;
  ActivationSpec activation;
  Matrix source_w;  // the (possibly perturbed) matrix the plan realizes
  Vector source_b;
  double alpha = 0.0;
  int rank_cap = 0;
  double residual = 0.0;
  PadSpec pad;  // set by transfer_network for rectangular layers
};

/// Parallel realization: stacked branches (h / beta_l) M_l, block readout
/// (beta_l / (h rho'(c))) I, zero-sum betas.
struct WideBlockPlan {
  Matrix stacked_w;   // (L N) x N
  Vector stacked_b;   // L N entries of c
  Matrix readout;     // N x (L N)
  Vector target_bias; // N
  Vector betas;
  double h = 0.0;
  ActivationSpec activation;
  bool final_activation = true;
  Matrix source_w;
  Vector source_b;
  PadSpec pad;
  Index width = 0;
  int parts = 0;
};

/// Width-2N accumulator construction: the top block carries the input along
/// the pure identity path while rank-1 terms accumulate Wx in the bottom.
struct AugmentedBlockPlan {
  std::vector<AffineLayer> layers;                  // width 2N, k+1 of them
  std::vector<std::pair<Vector, Vector>> rank1_terms;  // (u_i, v_i)
  double h = 0.0;
  ActivationSpec activation;
  Matrix source_w;
  Vector source_b;
};

/// Psi_h(rho(Phi_h(x))) element-wise with Phi_h(x) = hx + c and
/// Psi_h(y) = (y - rho(c)) / (h rho'(c)); converges to the identity.
Vector identity_block(const Vector& x, double h, const ActivationSpec& activation);

/// activate_output = false emits the final layer without the closing
/// activation, realizing the affine map Wx + b instead of rho(Wx + b).
DeepBlockPlan build_deep_block(const Matrix& w, const Vector& b, int rank_cap, double alpha,
                               double h, const ActivationSpec& activation, std::uint64_t seed,
                               bool activate_output = true);

WideBlockPlan build_wide_block(const Matrix& w, const Vector& b, int num_parts, double h,
                               const ActivationSpec& activation, bool activate_output = true);

AugmentedBlockPlan build_augmented_block(const Matrix& w, const Vector& b, double h,
                                         const ActivationSpec& activation);

/// DLoR realization of the (perturbed) reset-and-swap matrix S + eps I over
/// width 2n. The returned plan ends with a linear decode layer so it hands
/// the swapped state to the next block unactivated.
DeepBlockPlan build_reset_swap(Index n, double epsilon, int rank_cap, double alpha, double h,
                               const ActivationSpec& activation, std::uint64_t seed);

/// Wx + b with the accumulation order fixed (row loop), optionally followed
/// by the activation. All simulators funnel through this.
Vector affine_apply(const AffineLayer& layer, const Vector& x,
                    const ActivationSpec& activation);

Vector simulate(const DeepBlockPlan& plan, const Vector& x);
Vector simulate(const WideBlockPlan& plan, const Vector& x);
/// Final-layer pre-activation of the wide plan; exposes the zero-sum
/// cancellation for testing.
Vector wide_final_preactivation(const WideBlockPlan& plan, const Vector& x);
/// Full 2N state reached from the padded input [x; 0].
Vector simulate(const AugmentedBlockPlan& plan, const Vector& x);

Vector dense_forward(const std::vector<DenseLayer>& net, const ActivationSpec& activation,
                     const Vector& x);

/// Replaces every dense layer with a deep DLoR block. Rectangular layers are
/// square-embedded first; pad specs on the plans record how to pad inputs
/// and truncate outputs between blocks. pad_value fills the free diagonal of
/// the embeddings (the padded coordinates are zero so the realized map is
/// unchanged; an O(1) fill keeps the embedded matrix well conditioned).
std::vector<DeepBlockPlan> transfer_network(const std::vector<DenseLayer>& net,
                                            const ActivationSpec& activation, int rank_cap,
                                            double alpha, double h, std::uint64_t seed,
                                            double pad_value = 1.0);

std::vector<WideBlockPlan> transfer_network_wide(const std::vector<DenseLayer>& net,
                                                 const ActivationSpec& activation,
                                                 int num_parts, double h,
                                                 double pad_value = 1.0);

Vector simulate(const std::vector<DeepBlockPlan>& plans, const Vector& x);
Vector simulate(const std::vector<WideBlockPlan>& plans, const Vector& x);

long dlor_param_count(long n, long r);
long dense_layer_sim_count(long n);

}  // namespace dlor
