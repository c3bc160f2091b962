#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dlor/construct.hpp"
#include "dlor/train.hpp"

namespace dlor {

/// Bounded worker pool; body(i) runs once for every i in [0, n). Results
/// must be written to preallocated slots so the outcome is independent of
/// scheduling.
void parallel_for(int n, int jobs, const std::function<void(int)>& body);

struct SawtoothSpec {
  double lambda = 3.7;
  double lo = -2.0;
  double hi = 2.0;
  int n_points = 400;
};

/// f(x) = |((x lambda) mod 2) - 1| with the mod folded into [0, 2).
double sawtooth(double x, double lambda = 3.7);

struct SplitDataset {
  Dataset train;
  Dataset test;
};

/// Uniform grid over [lo, hi]; even indices train, odd indices test.
SplitDataset make_sawtooth(const SawtoothSpec& spec = {});

/// The five-layer width-16 softplus baseline: 16x1 input projection, three
/// 16x16 hidden layers, 1x16 readout; Adam lr 0.01 for `epochs` epochs.
TrainableNet train_baseline_mlp(std::uint64_t seed, int epochs = 2000);

enum class SweepKind { Deep, Wide };

struct SweepRow {
  double h;
  double err_to_dense;
  double err_to_function;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // sorted by h descending
  double baseline_sup_err = 0.0;
  bool monotone_top3 = false;  // err(h/10) <= 0.5 err(h) over the top decades
};

struct SweepOptions {
  int rank = 6;
  double alpha = 0.8;
  std::vector<double> hs;  // defaults per kind when empty
  int grid_points = 200;
  int baseline_epochs = 2000;
  std::uint64_t baseline_seed = 42;
};

/// Trains (or reuses) the baseline, transfers every layer at each h and
/// measures sup errors against the dense net and the sawtooth target on a
/// fixed uniform grid.
SweepResult run_construction_sweep(SweepKind which, std::uint64_t seed,
                                   const SweepOptions& opts = {},
                                   const TrainableNet* baseline = nullptr);

struct RunRecord {
  std::string arch;
  int k = 0;
  std::uint64_t seed = 0;
  bool diverged = false;
  bool reached = false;
  int epochs = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
};

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};

Quartiles quartiles(std::vector<double> values);

struct SummaryRow {
  std::string arch;
  int k = 0;
  Quartiles test_mse;
  Quartiles epochs;
  double success_rate = 0.0;
  int diverged = 0;
};

struct ExperimentSummary {
  std::vector<SummaryRow> rows;
  std::vector<RunRecord> runs;
};

struct TrainingExperimentConfig {
  std::vector<int> ks = {1, 2, 4, 8, 16};
  int n_seeds = 3;
  double lr = 0.005;
  SchedulerConfig scheduler;
  Index width = 16;
  std::uint64_t base_seed = 42;
  int jobs = 0;  // 0 = hardware concurrency
};

ExperimentSummary run_fixed_budget(int epochs, const TrainingExperimentConfig& cfg);

ExperimentSummary run_time_to_threshold(double threshold, int max_epochs,
                                        const TrainingExperimentConfig& cfg);

struct SpectralReport {
  // Deep: decomposition of the chosen substructure layer alpha I + U V^T.
  Vector deep_sigma;
  Vector deep_lowrank_contrib;
  Vector deep_identity_contrib;
  int deep_layer_index = 1;  // second substructure
  // Wide: projections of each branch alpha_l U_l V_l^T onto the singular
  // vectors of the pre-activation total.
  Vector wide_sigma_total;
  Matrix wide_branch_signed;  // k x width, diag(P^T W_i Q) per branch
  Matrix wide_branch_abs;
};

/// Trains width-`width` deep/wide nets whose per-substructure rank is
/// `rank`, then projects the structural components onto the shared singular
/// bases of the trained weights.
SpectralReport run_spectral(Index width, int rank, std::uint64_t seed, int train_epochs = 300);

struct ParamMatchedRow {
  int k = 0;
  long deep_params = 0;
  long wide_params = 0;
  Index dense_width = 0;
  long dense_params = 0;
};

struct ParamMatchedResult {
  std::vector<ParamMatchedRow> table;
  ExperimentSummary summary;
};

/// Smallest dense width w with w^2 + 3w + 1 >= target.
Index matched_dense_width(long target_params);

ParamMatchedResult run_param_matched(const std::vector<int>& ks, int n_seeds, int epochs,
                                     int jobs = 0, std::uint64_t base_seed = 42);

}  // namespace dlor
