// Command-line front door for the DLoR laboratory: rank-1 interpolation,
// additive/multiplicative decomposition, plan simulation, h-sweeps, training
// and the scripted experiments. Every run writes a manifest echoing its
// fully resolved configuration; file outputs are written atomically.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dlor/experiments.hpp"
#include "dlor/io.hpp"

namespace {

using namespace dlor;
namespace fs = std::filesystem;

struct GlobalOpts {
  std::uint64_t seed = 42;
  std::string out_dir;
  std::string config_path;
  int jobs = 0;
};

std::string timestamp_dir_name() {
  using namespace std::chrono;
  const auto now = system_clock::now();
  const auto t = system_clock::to_time_t(now);
  const auto ms = duration_cast<milliseconds>(now.time_since_epoch()) % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02d-%02d%02d%02d-%03d", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms.count()));
  return buf;
}

fs::path resolve_out_dir(const GlobalOpts& g) {
  if (!g.out_dir.empty()) return g.out_dir;
  if (const char* env = std::getenv("DLOR_OUT_DIR")) return env;
  return "out";
}

fs::path make_run_dir(const GlobalOpts& g, const std::string& name) {
  fs::path dir = resolve_out_dir(g) / fs::path(name) / timestamp_dir_name();
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const fs::path& path, const std::string& command, Json config) {
  config["command"] = command;
  write_json(path, config);
}

Json load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) return Json::object();
  return read_json(g.config_path);
}

template <typename T>
T cfg_or(const Json& cfg, const std::string& key, T fallback) {
  if (cfg.contains(key)) return cfg.at(key).get<T>();
  return fallback;
}

std::vector<double> parse_decades(const std::string& range) {
  // "1e-2:1e-8" -> every decade from the first down to the second.
  const auto colon = range.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--h-range", "expected from:to");
  const double from = std::stod(range.substr(0, colon));
  const double to = std::stod(range.substr(colon + 1));
  if (!(from > 0) || !(to > 0) || from < to)
    throw CLI::ValidationError("--h-range", "need from >= to > 0");
  std::vector<double> hs;
  for (double h = from; h >= to * 0.999; h /= 10.0) hs.push_back(h);
  return hs;
}

struct GridSpec {
  double lo = -2.0;
  double hi = 2.0;
  int count = 200;
};

GridSpec parse_grid(const std::string& s) {
  GridSpec g;
  if (s.empty()) return g;
  const auto c1 = s.find(':');
  const auto c2 = s.find(':', c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos)
    throw CLI::ValidationError("--grid", "expected start:end:count");
  g.lo = std::stod(s.substr(0, c1));
  g.hi = std::stod(s.substr(c1 + 1, c2 - c1 - 1));
  g.count = std::stoi(s.substr(c2 + 1));
  if (g.count < 2 || !(g.hi > g.lo))
    throw CLI::ValidationError("--grid", "need end > start and count >= 2");
  return g;
}

// ---------------------------------------------------------------------------
// interpolate: CSV dataset (x_1..x_d, z) -> rank-1 net JSON + residual report
// ---------------------------------------------------------------------------
int run_interpolate(const GlobalOpts& g, const std::string& in, const std::string& act_name_str) {
  CsvDataset data = read_dataset_csv(in);
  const fs::path dir = make_run_dir(g, "interpolate");

  const Act act = act_from_name(act_name_str);
  Rank1Net net = act == Act::Heaviside
                     ? thermometer_interpolate(data.x_cols, data.z, g.seed)
                     : scalar_interpolate(data.x_cols, data.z, make_activation(act), g.seed);
  write_json(dir / "net.json", to_json(net));

  Vector got = forward_cols(net, data.x_cols);
  std::string report = "index,target,prediction,abs_error\n";
  double max_err = 0.0;
  for (Index j = 0; j < data.z.size(); ++j) {
    const double err = std::abs(got[j] - data.z[j]);
    max_err = std::max(max_err, err);
    report += std::to_string(j) + "," + format_double(data.z[j]) + "," +
              format_double(got[j]) + "," + format_double(err) + "\n";
  }
  atomic_write(dir / "residuals.csv", report);
  write_manifest(dir / "manifest.json", "interpolate",
                 Json{{"in", in},
                      {"activation", act_name_str},
                      {"seed", g.seed},
                      {"max_abs_error", max_err}});
  std::cout << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// decompose: matrix JSON -> additive split or multiplicative factorization
// ---------------------------------------------------------------------------
int run_decompose(const GlobalOpts& g, const std::string& mode, int rank, double alpha,
                  int parts, const std::string& in, const std::string& out) {
  Matrix w = matrix_from_json(read_json(in));
  Json result;
  if (mode == "mul") {
    auto f = multiplicative_factorize(w, rank, alpha, g.seed);
    result = to_json(f);
  } else {
    auto s = additive_split(w, parts);
    result = to_json(s);
  }
  write_json(out, result);
  write_manifest(out + ".manifest.json", "decompose",
                 Json{{"mode", mode},
                      {"rank", rank},
                      {"alpha", alpha},
                      {"parts", parts},
                      {"in", in},
                      {"out", out},
                      {"seed", g.seed}});
  return 0;
}

double plan_sup_error(const Json& plan_json, const GridSpec& grid) {
  const std::string kind = plan_json.at("kind").get<std::string>();
  // Sup error of the plan against its own source layer over the grid,
  // scanning the first input coordinate and holding the rest at zero.
  auto eval_at = [&](const std::function<Vector(const Vector&)>& sim, const Matrix& w,
                     const Vector& b, const ActivationSpec& act, bool activated) {
    double worst = 0.0;
    for (int i = 0; i < grid.count; ++i) {
      Vector x = Vector::Zero(w.cols());
      x[0] = grid.lo + (grid.hi - grid.lo) * i / (grid.count - 1);
      Vector target = w * x + b;
      if (activated) target = eval_vec(act, target);
      worst = std::max(worst, (sim(x) - target).cwiseAbs().maxCoeff());
    }
    return worst;
  };
  if (kind == "deep") {
    DeepBlockPlan plan = deep_plan_from_json(plan_json);
    return eval_at([&](const Vector& x) { return simulate(plan, x); }, plan.source_w,
                   plan.source_b, plan.activation,
                   plan.layers.empty() || plan.layers.back().apply_activation);
  }
  if (kind == "wide") {
    WideBlockPlan plan = wide_plan_from_json(plan_json);
    return eval_at([&](const Vector& x) { return simulate(plan, x); }, plan.source_w,
                   plan.source_b, plan.activation, plan.final_activation);
  }
  throw Error("simulate: unsupported plan kind " + kind);
}

int run_simulate(const GlobalOpts&, const std::string& plan_path, const std::string& grid_str,
                 const std::string& out) {
  Json plan_json = read_json(plan_path);
  const GridSpec grid = parse_grid(grid_str);
  const double err = plan_sup_error(plan_json, grid);
  const double h = plan_json.at("h").get<double>();
  atomic_write(out, "h,sup_error\n" + format_double(h) + "," + format_double(err) + "\n");
  write_manifest(out + ".manifest.json", "simulate",
                 Json{{"plan", plan_path},
                      {"grid", Json{{"lo", grid.lo}, {"hi", grid.hi}, {"count", grid.count}}},
                      {"out", out}});
  return 0;
}

// ---------------------------------------------------------------------------
// sweep: h-sweep of one dense layer {w, b} across decades
// ---------------------------------------------------------------------------
int run_sweep(const GlobalOpts& g, const std::string& in, const std::string& kind, int rank,
              double alpha, int parts, const std::string& h_range, const std::string& grid_str) {
  Json layer = read_json(in);
  Matrix w = matrix_from_json(layer.at("w"));
  Vector b = vector_from_json(layer.at("b"));
  const GridSpec grid = parse_grid(grid_str);
  auto hs = parse_decades(h_range);
  auto act = make_activation(Act::Softplus);

  const fs::path dir = make_run_dir(g, "sweep");
  std::string csv = "h,sup_error\n";
  for (double h : hs) {
    double err = 0.0;
    auto measure = [&](auto&& plan) {
      for (int i = 0; i < grid.count; ++i) {
        Vector x = Vector::Zero(w.cols());
        x[0] = grid.lo + (grid.hi - grid.lo) * i / (grid.count - 1);
        Vector target = eval_vec(act, Vector(w * x + b));
        err = std::max(err, (simulate(plan, x) - target).cwiseAbs().maxCoeff());
      }
    };
    if (kind == "deep") {
      measure(build_deep_block(w, b, rank, alpha, h, act, g.seed));
    } else {
      measure(build_wide_block(w, b, parts, h, act));
    }
    csv += format_double(h) + "," + format_double(err) + "\n";
  }
  atomic_write(dir / "errs.csv", csv);
  write_manifest(dir / "manifest.json", "sweep",
                 Json{{"in", in},
                      {"kind", kind},
                      {"rank", rank},
                      {"alpha", alpha},
                      {"parts", parts},
                      {"h_range", h_range},
                      {"seed", g.seed}});
  std::cout << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train: one architecture on the sawtooth dataset
// ---------------------------------------------------------------------------
int run_train(const GlobalOpts& g, const std::string& arch, int k, Index width, int epochs,
              double lr, double stop_threshold) {
  auto data = make_sawtooth();
  TrainableNet net = make_net(net_kind_from_name(arch), width, k,
                              make_activation(Act::Softplus));
  init_params(net, g.seed);
  TrainConfig cfg;
  cfg.lr = lr;
  cfg.epochs = epochs;
  cfg.seed = g.seed;
  cfg.record_every = std::max(1, epochs / 200);
  if (stop_threshold > 0) cfg.stop_threshold = stop_threshold;
  TrainResult res = train(net, data.train, data.test, cfg);

  const fs::path dir = make_run_dir(g, "train");
  write_json(dir / "checkpoint.json", to_json(net));
  atomic_write(dir / "loss.csv", loss_curve_csv(res.loss_curve));
  write_manifest(dir / "manifest.json", "train",
                 Json{{"arch", arch},
                      {"k", k},
                      {"width", width},
                      {"epochs", epochs},
                      {"lr", lr},
                      {"stop_threshold", stop_threshold},
                      {"seed", g.seed},
                      {"final_train_mse", res.final_train_mse},
                      {"final_test_mse", res.final_test_mse},
                      {"epochs_run", res.epochs_run},
                      {"reached_threshold", res.reached_threshold}});
  std::cout << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// spectral
// ---------------------------------------------------------------------------
int run_spectral_cmd(const GlobalOpts& g, Index width, int rank, int epochs) {
  SpectralReport rep = run_spectral(width, rank, g.seed, epochs);
  const fs::path dir = make_run_dir(g, "spectral");

  std::string deep_csv = "index,sigma,lowrank_contrib,identity_contrib\n";
  for (Index i = 0; i < rep.deep_sigma.size(); ++i)
    deep_csv += std::to_string(i) + "," + format_double(rep.deep_sigma[i]) + "," +
                format_double(rep.deep_lowrank_contrib[i]) + "," +
                format_double(rep.deep_identity_contrib[i]) + "\n";
  atomic_write(dir / "deep_spectral.csv", deep_csv);

  std::string wide_csv = "index,sigma_total";
  for (Index l = 0; l < rep.wide_branch_abs.rows(); ++l)
    wide_csv += ",branch_" + std::to_string(l + 1);
  wide_csv += "\n";
  for (Index i = 0; i < rep.wide_sigma_total.size(); ++i) {
    wide_csv += std::to_string(i) + "," + format_double(rep.wide_sigma_total[i]);
    for (Index l = 0; l < rep.wide_branch_abs.rows(); ++l)
      wide_csv += "," + format_double(rep.wide_branch_abs(l, i));
    wide_csv += "\n";
  }
  atomic_write(dir / "wide_spectral.csv", wide_csv);
  write_manifest(dir / "manifest.json", "spectral",
                 Json{{"width", width}, {"rank", rank}, {"epochs", epochs}, {"seed", g.seed}});
  std::cout << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// experiment: the scripted reproductions
// ---------------------------------------------------------------------------
int run_experiment(const GlobalOpts& g, const std::string& name, bool full) {
  const Json cfg = load_config(g);
  const fs::path dir = make_run_dir(g, name);
  Json manifest{{"name", name}, {"seed", g.seed}, {"full", full}, {"jobs", g.jobs}};

  if (name == "construction-deep" || name == "construction-wide") {
    SweepOptions opts;
    opts.rank = cfg_or(cfg, "rank", 6);
    opts.alpha = cfg_or(cfg, "alpha", 0.8);
    opts.baseline_epochs = cfg_or(cfg, "baseline_epochs", 2000);
    const SweepKind kind =
        name == "construction-deep" ? SweepKind::Deep : SweepKind::Wide;
    SweepResult res = run_construction_sweep(kind, g.seed, opts);
    atomic_write(dir / "errs.csv", sweep_csv(res));
    manifest["rank"] = opts.rank;
    manifest["alpha"] = opts.alpha;
    manifest["baseline_epochs"] = opts.baseline_epochs;
    manifest["baseline_sup_err"] = res.baseline_sup_err;
    manifest["monotone_top3"] = res.monotone_top3;
  } else if (name == "fixed-budget" || name == "time-to-threshold") {
    TrainingExperimentConfig tcfg;
    tcfg.jobs = g.jobs;
    tcfg.base_seed = g.seed;
    if (full) {
      tcfg.n_seeds = cfg_or(cfg, "seeds", 10);
      tcfg.ks.clear();
      for (int k = 1; k <= 16; ++k) tcfg.ks.push_back(k);
    } else {
      tcfg.n_seeds = cfg_or(cfg, "seeds", 3);
      tcfg.ks = {1, 2, 4, 8, 16};
    }
    if (cfg.contains("ks")) tcfg.ks = cfg.at("ks").get<std::vector<int>>();
    if (name == "fixed-budget") {
      for (int budget : {5000, 50000}) {
        const int epochs = full ? budget : budget / 10;
        ExperimentSummary s = run_fixed_budget(epochs, tcfg);
        atomic_write(dir / ("fixed_budget_" + std::to_string(budget) + ".csv"),
                     summary_csv(s, false));
        manifest["epochs_" + std::to_string(budget)] = epochs;
      }
    } else {
      const double threshold = cfg_or(cfg, "threshold", 1e-3);
      const int max_epochs = full ? 50000 : 5000;
      ExperimentSummary s = run_time_to_threshold(threshold, max_epochs, tcfg);
      atomic_write(dir / "time_to_threshold.csv", summary_csv(s, true));
      manifest["threshold"] = threshold;
      manifest["max_epochs"] = max_epochs;
    }
    manifest["seeds"] = tcfg.n_seeds;
    manifest["ks"] = tcfg.ks;
  } else if (name == "param-matched") {
    const int seeds = cfg_or(cfg, "seeds", 5);
    const int epochs = cfg_or(cfg, "epochs", full ? 5000 : 500);
    ParamMatchedResult res =
        run_param_matched({1, 2, 4, 8, 16}, seeds, epochs, g.jobs, g.seed);
    std::string table = "k,dense_width,dense_params,deep_params,wide_params\n";
    for (const auto& row : res.table)
      table += std::to_string(row.k) + "," + std::to_string(row.dense_width) + "," +
               std::to_string(row.dense_params) + "," + std::to_string(row.deep_params) +
               "," + std::to_string(row.wide_params) + "\n";
    atomic_write(dir / "param_counts.csv", table);
    atomic_write(dir / "param_matched.csv", summary_csv(res.summary, false));
    manifest["seeds"] = seeds;
    manifest["epochs"] = epochs;
  } else if (name == "spectral") {
    return run_spectral_cmd(g, cfg_or(cfg, "width", Index{64}), cfg_or(cfg, "rank", 4),
                            cfg_or(cfg, "epochs", full ? 2000 : 300));
  } else {
    throw CLI::ValidationError("--name", "unknown experiment " + name);
  }
  write_manifest(dir / "manifest.json", "experiment", manifest);
  std::cout << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DLoR laboratory: diagonal-plus-low-rank network constructions"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "global random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "output directory (default: $DLOR_OUT_DIR or ./out)");
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--jobs", g.jobs, "worker threads (0 = hardware)");

  auto* interpolate = app.add_subcommand("interpolate", "rank-1 scalar interpolation");
  std::string in_path, act_str = "softplus";
  interpolate->add_option("--in", in_path, "dataset CSV (x_1..x_d,z)")->required();
  interpolate->add_option("--activation", act_str,
                          "softplus|sigmoid|tanh|heaviside (thermometer)");

  auto* decompose = app.add_subcommand("decompose", "additive or multiplicative split");
  std::string mode = "mul", dec_in, dec_out;
  int rank = 6, parts = 3;
  double alpha = 0.8;
  decompose->add_option("--mode", mode, "add|mul")->check(CLI::IsMember({"add", "mul"}));
  decompose->add_option("--rank", rank, "rank cap per component");
  decompose->add_option("--alpha", alpha, "diagonal scale");
  decompose->add_option("--parts", parts, "additive parts");
  decompose->add_option("--in", dec_in, "matrix JSON")->required();
  decompose->add_option("--out", dec_out, "output JSON")->required();

  auto* simulate_cmd = app.add_subcommand("simulate", "evaluate a stored plan on a grid");
  std::string plan_path, grid_str = "-2:2:200", sim_out = "errs.csv";
  simulate_cmd->add_option("--plan", plan_path, "plan JSON")->required();
  simulate_cmd->add_option("--grid", grid_str, "start:end:count");
  simulate_cmd->add_option("--out", sim_out, "output CSV");

  auto* sweep = app.add_subcommand("sweep", "h-sweep one dense layer");
  std::string sweep_in, sweep_kind = "deep", h_range = "1e-2:1e-6", sweep_grid = "-2:2:200";
  sweep->add_option("--in", sweep_in, "layer JSON {w,b}")->required();
  sweep->add_option("--kind", sweep_kind, "deep|wide")->check(CLI::IsMember({"deep", "wide"}));
  sweep->add_option("--rank", rank, "rank cap (deep)");
  sweep->add_option("--alpha", alpha, "diagonal scale (deep)");
  sweep->add_option("--parts", parts, "branches (wide)");
  sweep->add_option("--h-range", h_range, "from:to, swept by decades");
  sweep->add_option("--grid", sweep_grid, "start:end:count");

  auto* train_cmd = app.add_subcommand("train", "train one architecture on the sawtooth");
  std::string arch = "dense";
  int k = 1, epochs = 2000;
  Index width = 16;
  double lr = 0.005, stop_threshold = 0.0;
  train_cmd->add_option("--arch", arch, "dense|deep|wide")
      ->check(CLI::IsMember({"dense", "deep", "wide"}));
  train_cmd->add_option("--k", k, "substructures");
  train_cmd->add_option("--width", width, "hidden width");
  train_cmd->add_option("--epochs", epochs, "training epochs");
  train_cmd->add_option("--lr", lr, "initial learning rate");
  train_cmd->add_option("--stop-threshold", stop_threshold, "early-stop train MSE (0 = off)");

  auto* experiment = app.add_subcommand("experiment", "scripted reproductions");
  std::string exp_name;
  bool full = false;
  experiment
      ->add_option("--name", exp_name,
                   "construction-deep|construction-wide|fixed-budget|time-to-threshold|"
                   "param-matched|spectral")
      ->required();
  experiment->add_flag("--full", full, "paper-scale budgets and seeds");

  auto* spectral = app.add_subcommand("spectral", "spectral decomposition of trained nets");
  Index sp_width = 64;
  int sp_rank = 4, sp_epochs = 300;
  spectral->add_option("--width", sp_width, "hidden width");
  spectral->add_option("--rank", sp_rank, "substructure rank");
  spectral->add_option("--epochs", sp_epochs, "training epochs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    if (*interpolate) return run_interpolate(g, in_path, act_str);
    if (*decompose) return run_decompose(g, mode, rank, alpha, parts, dec_in, dec_out);
    if (*simulate_cmd) return run_simulate(g, plan_path, grid_str, sim_out);
    if (*sweep)
      return run_sweep(g, sweep_in, sweep_kind, rank, alpha, parts, h_range, sweep_grid);
    if (*train_cmd) return run_train(g, arch, k, width, epochs, lr, stop_threshold);
    if (*experiment) return run_experiment(g, exp_name, full);
    if (*spectral) return run_spectral_cmd(g, sp_width, sp_rank, sp_epochs);
  } catch (const dlor::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const dlor::Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
