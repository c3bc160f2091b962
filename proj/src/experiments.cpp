#include "dlor/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace dlor {

void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        if (failed.load()) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

double sawtooth(double x, double lambda) {
  double m = std::fmod(x * lambda, 2.0);
  if (m < 0.0) m += 2.0;
  return std::abs(m - 1.0);
}

SplitDataset make_sawtooth(const SawtoothSpec& spec) {
  if (spec.n_points < 2 || spec.n_points % 2 != 0)
    throw Error("make_sawtooth: n_points must be even and >= 2");
  const int half = spec.n_points / 2;
  SplitDataset out;
  out.train.x.resize(half);
  out.train.z.resize(half);
  out.test.x.resize(half);
  out.test.z.resize(half);
  const double step = (spec.hi - spec.lo) / static_cast<double>(spec.n_points - 1);
  for (int i = 0; i < spec.n_points; ++i) {
    const double x = spec.lo + step * i;
    const double z = sawtooth(x, spec.lambda);
    if (i % 2 == 0) {
      out.train.x[i / 2] = x;
      out.train.z[i / 2] = z;
    } else {
      out.test.x[i / 2] = x;
      out.test.z[i / 2] = z;
    }
  }
  return out;
}

TrainableNet train_baseline_mlp(std::uint64_t seed, int epochs) {
  auto data = make_sawtooth();
  // 16x1, then three 16x16 hidden layers, then 1x16: five layers in total.
  TrainableNet net = make_net(NetKind::DenseMlp, 16, 3, make_activation(Act::Softplus));
  init_params(net, seed);
  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.epochs = epochs;
  cfg.scheduler.reset();
  cfg.record_every = 100;
  train(net, data.train, data.test, cfg);
  return net;
}

namespace {

std::vector<double> decade_hs(double from, double to) {
  std::vector<double> hs;
  for (double h = from; h >= to * 0.999; h /= 10.0) hs.push_back(h);
  return hs;
}

double sup_err(const std::function<double(double)>& f, const std::function<double(double)>& g,
               double lo, double hi, int n) {
  double worst = 0.0;
  const double step = (hi - lo) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) {
    const double x = lo + step * i;
    worst = std::max(worst, std::abs(f(x) - g(x)));
  }
  return worst;
}

}  // namespace

SweepResult run_construction_sweep(SweepKind which, std::uint64_t seed, const SweepOptions& opts,
                                   const TrainableNet* baseline) {
  TrainableNet trained;
  if (!baseline) {
    trained = train_baseline_mlp(opts.baseline_seed, opts.baseline_epochs);
    baseline = &trained;
  }
  const auto layers = to_dense_layers(*baseline);
  const ActivationSpec act = baseline->activation;

  std::vector<double> hs = opts.hs;
  if (hs.empty())
    hs = which == SweepKind::Deep ? decade_hs(1e-2, 1e-8) : decade_hs(1e-1, 1e-6);

  auto dense_eval = [&](double x) { return forward(*baseline, x); };
  auto target_eval = [&](double x) { return sawtooth(x); };

  SweepResult result;
  result.baseline_sup_err =
      sup_err(dense_eval, target_eval, -2.0, 2.0, opts.grid_points);

  const int parts = static_cast<int>((baseline->width + opts.rank - 1) / opts.rank);
  for (double h : hs) {
    std::function<double(double)> sim_eval;
    if (which == SweepKind::Deep) {
      auto plans = transfer_network(layers, act, opts.rank, opts.alpha, h, seed);
      sim_eval = [plans = std::move(plans)](double x) {
        Vector in(1);
        in[0] = x;
        return simulate(plans, in)[0];
      };
    } else {
      auto plans = transfer_network_wide(layers, act, parts, h);
      sim_eval = [plans = std::move(plans)](double x) {
        Vector in(1);
        in[0] = x;
        return simulate(plans, in)[0];
      };
    }
    SweepRow row;
    row.h = h;
    row.err_to_dense = sup_err(sim_eval, dense_eval, -2.0, 2.0, opts.grid_points);
    row.err_to_function = sup_err(sim_eval, target_eval, -2.0, 2.0, opts.grid_points);
    result.rows.push_back(row);
  }
  std::sort(result.rows.begin(), result.rows.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.h > b.h; });

  result.monotone_top3 = result.rows.size() >= 3;
  for (size_t i = 0; i + 1 < 3 && i + 1 < result.rows.size(); ++i)
    if (!(result.rows[i + 1].err_to_dense <= 0.5 * result.rows[i].err_to_dense))
      result.monotone_top3 = false;
  return result;
}

Quartiles quartiles(std::vector<double> values) {
  Quartiles q;
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double idx = p * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(idx));
    const size_t hi = static_cast<size_t>(std::ceil(idx));
    const double w = idx - static_cast<double>(lo);
    return values[lo] * (1.0 - w) + values[hi] * w;
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  return q;
}

namespace {

std::uint64_t run_seed(std::uint64_t base, const std::string& arch, int k, int rep) {
  Rng r(base);
  std::uint64_t tag = 1469598103934665603ULL;
  for (char c : arch) tag = (tag ^ static_cast<std::uint64_t>(c)) * 1099511628211ULL;
  return r.split(tag).split(static_cast<std::uint64_t>(k)).split(static_cast<std::uint64_t>(rep))
      .next_u64();
}

struct TaskSpec {
  std::string arch;
  NetKind kind;
  int k;
  int rep;
};

ExperimentSummary run_training_matrix(const TrainingExperimentConfig& cfg, int epochs,
                                      std::optional<double> threshold) {
  auto data = make_sawtooth();
  std::vector<TaskSpec> tasks;
  for (int rep = 0; rep < cfg.n_seeds; ++rep)
    tasks.push_back({"dense", NetKind::DenseMlp, 1, rep});
  for (int k : cfg.ks)
    for (int rep = 0; rep < cfg.n_seeds; ++rep) {
      tasks.push_back({"deep", NetKind::DeepDlor, k, rep});
      tasks.push_back({"wide", NetKind::WideDlor, k, rep});
    }

  std::vector<RunRecord> records(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), cfg.jobs, [&](int i) {
    const TaskSpec& t = tasks[i];
    RunRecord rec;
    rec.arch = t.arch;
    rec.k = t.k;
    rec.seed = run_seed(cfg.base_seed, t.arch, t.k, t.rep);
    TrainableNet net = make_net(t.kind, cfg.width, t.k, make_activation(Act::Softplus));
    init_params(net, rec.seed);
    TrainConfig tc;
    tc.lr = cfg.lr;
    tc.epochs = epochs;
    tc.scheduler = cfg.scheduler;
    tc.stop_threshold = threshold;
    tc.record_every = std::max(1, epochs / 50);
    try {
      TrainResult res = train(net, data.train, data.test, tc);
      rec.reached = res.reached_threshold;
      rec.epochs = res.epochs_run;
      rec.train_mse = res.final_train_mse;
      rec.test_mse = res.final_test_mse;
    } catch (const Diverged& d) {
      rec.diverged = true;
      rec.epochs = d.epoch;
      rec.train_mse = rec.test_mse = std::numeric_limits<double>::quiet_NaN();
    }
    records[i] = rec;
  });

  ExperimentSummary summary;
  summary.runs = records;
  auto summarize = [&](const std::string& arch, int k) {
    SummaryRow row;
    row.arch = arch;
    row.k = k;
    std::vector<double> mses, eps;
    int reached = 0, total = 0;
    for (const auto& r : records) {
      if (r.arch != arch || (arch != "dense" && r.k != k)) continue;
      ++total;
      if (r.diverged) {
        ++row.diverged;
        continue;
      }
      mses.push_back(r.test_mse);
      eps.push_back(static_cast<double>(r.epochs));
      if (r.reached) ++reached;
    }
    row.test_mse = quartiles(mses);
    row.epochs = quartiles(eps);
    row.success_rate =
        total > 0 ? static_cast<double>(threshold ? reached : total - row.diverged) /
                        static_cast<double>(total)
                  : 0.0;
    return row;
  };
  for (int k : cfg.ks) {
    SummaryRow dense_row = summarize("dense", k);
    dense_row.k = k;  // dense config does not depend on k; row repeated for comparison
    summary.rows.push_back(dense_row);
    summary.rows.push_back(summarize("deep", k));
    summary.rows.push_back(summarize("wide", k));
  }
  return summary;
}

}  // namespace

ExperimentSummary run_fixed_budget(int epochs, const TrainingExperimentConfig& cfg) {
  return run_training_matrix(cfg, epochs, std::nullopt);
}

ExperimentSummary run_time_to_threshold(double threshold, int max_epochs,
                                        const TrainingExperimentConfig& cfg) {
  return run_training_matrix(cfg, max_epochs, threshold);
}

SpectralReport run_spectral(Index width, int rank, std::uint64_t seed, int train_epochs) {
  const int k = static_cast<int>((width + rank - 1) / rank);
  if (k < 2) throw Error("run_spectral: need at least two substructures");
  auto data = make_sawtooth();
  TrainConfig tc;
  tc.lr = 0.005;
  tc.epochs = train_epochs;
  tc.record_every = std::max(1, train_epochs / 10);

  SpectralReport report;

  TrainableNet deep = make_net(NetKind::DeepDlor, width, k, make_activation(Act::Softplus));
  init_params(deep, Rng(seed).split(1).next_u64());
  train(deep, data.train, data.test, tc);
  {
    const auto& sub = deep.deep[1];  // second substructure layer
    const Matrix low = sub.u * sub.v.transpose();
    const Matrix w = deep.alpha * Matrix::Identity(width, width) + low;
    auto s = svd(w);
    const Matrix q = s.vt.transpose();
    report.deep_sigma = s.sigma;
    report.deep_lowrank_contrib = (s.u.transpose() * low * q).diagonal();
    report.deep_identity_contrib = deep.alpha * (s.u.transpose() * q).diagonal();
    report.deep_layer_index = 1;
  }

  TrainableNet wide = make_net(NetKind::WideDlor, width, k, make_activation(Act::Softplus));
  init_params(wide, Rng(seed).split(2).next_u64());
  train(wide, data.train, data.test, tc);
  {
    Matrix total = Matrix::Zero(width, width);
    std::vector<Matrix> branch(k);
    for (int l = 0; l < k; ++l) {
      branch[l] = wide.wide[l].alpha * wide.wide[l].u * wide.wide[l].v.transpose();
      total += branch[l];
    }
    auto s = svd(total);
    const Matrix q = s.vt.transpose();
    report.wide_sigma_total = s.sigma;
    report.wide_branch_signed.resize(k, width);
    report.wide_branch_abs.resize(k, width);
    for (int l = 0; l < k; ++l) {
      Vector d = (s.u.transpose() * branch[l] * q).diagonal();
      report.wide_branch_signed.row(l) = d.transpose();
      report.wide_branch_abs.row(l) = d.cwiseAbs().transpose();
    }
  }
  return report;
}

Index matched_dense_width(long target_params) {
  for (Index w = 1;; ++w) {
    const long p = w * w + 3 * w + 1;
    if (p >= target_params) return w;
  }
}

ParamMatchedResult run_param_matched(const std::vector<int>& ks, int n_seeds, int epochs,
                                     int jobs, std::uint64_t base_seed) {
  auto data = make_sawtooth();
  ParamMatchedResult out;
  struct Task {
    std::string arch;
    NetKind kind;
    int k;
    Index width;
    int rep;
  };
  std::vector<Task> tasks;
  for (int k : ks) {
    ParamMatchedRow row;
    row.k = k;
    row.deep_params = param_count(NetKind::DeepDlor, 16, k);
    row.wide_params = param_count(NetKind::WideDlor, 16, k);
    row.dense_width = matched_dense_width(row.deep_params);
    row.dense_params = param_count(NetKind::DenseMlp, row.dense_width, 1);
    out.table.push_back(row);
    for (int rep = 0; rep < n_seeds; ++rep) {
      tasks.push_back({"deep", NetKind::DeepDlor, k, 16, rep});
      tasks.push_back({"wide", NetKind::WideDlor, k, 16, rep});
      tasks.push_back({"dense", NetKind::DenseMlp, k, row.dense_width, rep});
    }
  }

  std::vector<RunRecord> records(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), jobs, [&](int i) {
    const Task& t = tasks[i];
    RunRecord rec;
    rec.arch = t.arch;
    rec.k = t.k;
    rec.seed = run_seed(base_seed, t.arch + "-pm", t.k, t.rep);
    TrainableNet net =
        make_net(t.kind, t.width, t.kind == NetKind::DenseMlp ? 1 : t.k,
                 make_activation(Act::Softplus));
    init_params(net, rec.seed);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.record_every = std::max(1, epochs / 20);
    try {
      TrainResult res = train(net, data.train, data.test, tc);
      rec.epochs = res.epochs_run;
      rec.train_mse = res.final_train_mse;
      rec.test_mse = res.final_test_mse;
    } catch (const Diverged& d) {
      rec.diverged = true;
      rec.epochs = d.epoch;
      rec.train_mse = rec.test_mse = std::numeric_limits<double>::quiet_NaN();
    }
    records[i] = rec;
  });

  out.summary.runs = records;
  for (int k : ks) {
    for (const std::string arch : {std::string("dense"), std::string("deep"), std::string("wide")}) {
      SummaryRow row;
      row.arch = arch;
      row.k = k;
      std::vector<double> mses;
      int total = 0;
      for (const auto& r : records) {
        if (r.arch != arch || r.k != k) continue;
        ++total;
        if (r.diverged) {
          ++row.diverged;
          continue;
        }
        mses.push_back(r.test_mse);
      }
      row.test_mse = quartiles(mses);
      row.success_rate =
          total > 0 ? static_cast<double>(total - row.diverged) / total : 0.0;
      out.summary.rows.push_back(row);
    }
  }
  return out;
}

}  // namespace dlor
