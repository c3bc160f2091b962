#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dlor/activation.hpp"
#include "dlor/construct.hpp"
#include "dlor/linalg.hpp"

namespace dlor {

enum class NetKind { DenseMlp, DeepDlor, WideDlor };

const char* net_kind_name(NetKind k);
NetKind net_kind_from_name(const std::string& name);

struct DenseSub {
  Matrix w;  // width x width
  Vector b;
};

struct DeepSub {
  Matrix u;  // width x r
  Matrix v;  // width x r
  Vector b;
};

struct WideSub {
  Matrix u;
  Matrix v;
  Vector b;
  double alpha = 0.0;  // per-branch coefficient
};

/// Scalar-in scalar-out net: input projection, k substructures, affine
/// readout. The deep variant chains rho((alpha I + U_l V_l^T) x + b_l) with
/// one shared alpha; the wide variant aggregates parallel branches
/// rho(sum_l alpha_l rho(U_l V_l^T x + b_l) + outer_bias).
struct TrainableNet {
  NetKind kind = NetKind::DenseMlp;
  Index width = 16;
  int k = 1;
  Index rank = 16;  // r_k = ceil(width / k)
  ActivationSpec activation;

  Matrix w_in;  // width x 1
  Vector b_in;
  Matrix w_out;  // 1 x width
  double b_out = 0.0;

  std::vector<DenseSub> dense;
  std::vector<DeepSub> deep;
  double alpha = 1.0;  // shared scalar (deep)
  std::vector<WideSub> wide;
  Vector outer_bias;  // wide only
};

TrainableNet make_net(NetKind kind, Index width, int k, const ActivationSpec& activation);

/// Weights uniform in +-1/sqrt(fan_in), biases zero, alpha = 1 (deep),
/// alpha_l = 1/k (wide). Deterministic per seed.
void init_params(TrainableNet& net, std::uint64_t seed);

double forward(const TrainableNet& net, double x);
double forward(const TrainableNet& net, const Vector& x);

long param_count(NetKind kind, Index width, int k);
long param_count(const TrainableNet& net);

Vector pack_params(const TrainableNet& net);
void unpack_params(TrainableNet& net, const Vector& params);

struct Dataset {
  Vector x;
  Vector z;
};

double mse(const TrainableNet& net, const Dataset& data);

/// Gradient of the dataset MSE with respect to pack_params order.
Vector backward(const TrainableNet& net, const Dataset& data);

struct SchedulerConfig {
  int patience = 200;
  double factor = 0.5;
  double min_lr = 1e-5;
};

struct TrainConfig {
  double lr = 0.005;
  int epochs = 1000;
  std::optional<SchedulerConfig> scheduler = SchedulerConfig{};
  std::uint64_t seed = 42;
  std::optional<double> stop_threshold;
  int record_every = 1;
};

struct LossPoint {
  int epoch;
  double train_mse;
  double test_mse;
  double lr;
};

struct TrainResult {
  double final_train_mse = 0.0;
  double final_test_mse = 0.0;
  int epochs_run = 0;
  bool reached_threshold = false;
  std::vector<LossPoint> loss_curve;
};

/// Full-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) with an optional
/// reduce-on-plateau schedule. Deterministic given (net state, config).
TrainResult train(TrainableNet& net, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& cfg);

/// Dense-MLP view of the net for the construction transfer: input
/// projection, hidden blocks, affine readout.
std::vector<DenseLayer> to_dense_layers(const TrainableNet& net);

}  // namespace dlor
