#include "dlor/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dlor {

namespace fs = std::filesystem;

Json to_json(const Matrix& m) {
  Json data = Json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Json to_json(const Vector& v) {
  Json data = Json::array();
  for (Index i = 0; i < v.size(); ++i) data.push_back(v[i]);
  return Json{{"len", v.size()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const Json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != rows * cols)
    throw Error("matrix json: data length != rows*cols");
  Matrix m(rows, cols);
  Index pos = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index jj = 0; jj < cols; ++jj) m(i, jj) = data[pos++].get<double>();
  require_finite(m, "matrix json");
  return m;
}

Vector vector_from_json(const Json& j) {
  const Index len = j.at("len").get<Index>();
  const auto& data = j.at("data");
  if (static_cast<Index>(data.size()) != len) throw Error("vector json: data length != len");
  Vector v(len);
  for (Index i = 0; i < len; ++i) v[i] = data[i].get<double>();
  require_finite(v, "vector json");
  return v;
}

Json to_json(const ActivationSpec& a) {
  return Json{{"name", act_name(a.name)}, {"c", a.c}};
}

ActivationSpec activation_from_json(const Json& j) {
  const Act name = act_from_name(j.at("name").get<std::string>());
  if (name == Act::Heaviside) return make_activation(name);
  return make_activation(name, j.at("c").get<double>());
}

Json to_json(const Rank1Net& net) {
  return Json{{"v1", to_json(net.v1)}, {"u1", to_json(net.u1)}, {"b1", to_json(net.b1)},
              {"v2", to_json(net.v2)}, {"b2", net.b2},
              {"activation", to_json(net.activation)}};
}

Rank1Net rank1_from_json(const Json& j) {
  Rank1Net net;
  net.v1 = vector_from_json(j.at("v1"));
  net.u1 = vector_from_json(j.at("u1"));
  net.b1 = vector_from_json(j.at("b1"));
  net.v2 = vector_from_json(j.at("v2"));
  net.b2 = j.at("b2").get<double>();
  net.activation = activation_from_json(j.at("activation"));
  return net;
}

Json to_json(const MultiplicativeFactorization& f) {
  Json comps = Json::array();
  for (const auto& c : f.components)
    comps.push_back(Json{{"u", to_json(c.u)}, {"v", to_json(c.v)}});
  return Json{{"alpha", f.alpha},
              {"components", std::move(comps)},
              {"order", "left-applied-last"},
              {"basis_z", to_json(f.basis_z)},
              {"residual", f.residual}};
}

MultiplicativeFactorization factorization_from_json(const Json& j) {
  MultiplicativeFactorization f;
  f.alpha = j.at("alpha").get<double>();
  f.basis_z = matrix_from_json(j.at("basis_z"));
  f.residual = j.at("residual").get<double>();
  for (const auto& cj : j.at("components")) {
    DlorComponent c;
    c.u = matrix_from_json(cj.at("u"));
    c.v = matrix_from_json(cj.at("v"));
    c.n = c.u.rows();
    c.alpha = f.alpha;
    f.components.push_back(std::move(c));
  }
  return f;
}

Json to_json(const AdditiveSplit& s) {
  Json parts = Json::array();
  for (const auto& m : s.summands) parts.push_back(to_json(m));
  Json j{{"summands", std::move(parts)}};
  if (s.betas) j["betas"] = to_json(*s.betas);
  return j;
}

namespace {

Json pad_to_json(const PadSpec& p) {
  return Json{{"in", p.in_dim}, {"out", p.out_dim}, {"dim", p.dim}};
}

PadSpec pad_from_json(const Json& j) {
  return {j.at("in").get<Index>(), j.at("out").get<Index>(), j.at("dim").get<Index>()};
}

}  // namespace

Json to_json(const DeepBlockPlan& p) {
  Json layers = Json::array();
  for (const auto& l : p.layers)
    layers.push_back(Json{{"w", to_json(l.w)}, {"b", to_json(l.b)},
                          {"apply_activation", l.apply_activation}});
  return Json{{"kind", "deep"},
              {"h", p.h},
              {"activation", to_json(p.activation)},
              {"layers", std::move(layers)},
              {"meta", Json{{"alpha", p.alpha}, {"rank", p.rank_cap}, {"residual", p.residual}}},
              {"source", Json{{"w", to_json(p.source_w)}, {"b", to_json(p.source_b)}}},
              {"pad", pad_to_json(p.pad)}};
}

DeepBlockPlan deep_plan_from_json(const Json& j) {
  if (j.at("kind").get<std::string>() != "deep") throw Error("plan json: not a deep plan");
  DeepBlockPlan p;
  p.h = j.at("h").get<double>();
  p.activation = activation_from_json(j.at("activation"));
  for (const auto& lj : j.at("layers"))
    p.layers.push_back({matrix_from_json(lj.at("w")), vector_from_json(lj.at("b")),
                        lj.at("apply_activation").get<bool>()});
  p.alpha = j.at("meta").at("alpha").get<double>();
  p.rank_cap = j.at("meta").at("rank").get<int>();
  p.residual = j.at("meta").at("residual").get<double>();
  p.source_w = matrix_from_json(j.at("source").at("w"));
  p.source_b = vector_from_json(j.at("source").at("b"));
  p.pad = pad_from_json(j.at("pad"));
  return p;
}

Json to_json(const WideBlockPlan& p) {
  return Json{{"kind", "wide"},
              {"h", p.h},
              {"activation", to_json(p.activation)},
              {"stacked_w", to_json(p.stacked_w)},
              {"stacked_b", to_json(p.stacked_b)},
              {"readout", to_json(p.readout)},
              {"target_bias", to_json(p.target_bias)},
              {"betas", to_json(p.betas)},
              {"final_activation", p.final_activation},
              {"source", Json{{"w", to_json(p.source_w)}, {"b", to_json(p.source_b)}}},
              {"pad", pad_to_json(p.pad)}};
}

WideBlockPlan wide_plan_from_json(const Json& j) {
  if (j.at("kind").get<std::string>() != "wide") throw Error("plan json: not a wide plan");
  WideBlockPlan p;
  p.h = j.at("h").get<double>();
  p.activation = activation_from_json(j.at("activation"));
  p.stacked_w = matrix_from_json(j.at("stacked_w"));
  p.stacked_b = vector_from_json(j.at("stacked_b"));
  p.readout = matrix_from_json(j.at("readout"));
  p.target_bias = vector_from_json(j.at("target_bias"));
  p.betas = vector_from_json(j.at("betas"));
  p.final_activation = j.at("final_activation").get<bool>();
  p.source_w = matrix_from_json(j.at("source").at("w"));
  p.source_b = vector_from_json(j.at("source").at("b"));
  p.pad = pad_from_json(j.at("pad"));
  p.width = p.source_w.rows();
  p.parts = static_cast<int>(p.betas.size());
  return p;
}

Json to_json(const TrainableNet& net) {
  Json params;
  params["w_in"] = to_json(net.w_in);
  params["b_in"] = to_json(net.b_in);
  params["w_out"] = to_json(net.w_out);
  params["b_out"] = net.b_out;
  Json subs = Json::array();
  for (int l = 0; l < net.k; ++l) {
    Json s;
    switch (net.kind) {
      case NetKind::DenseMlp:
        s["w"] = to_json(net.dense[l].w);
        s["b"] = to_json(net.dense[l].b);
        break;
      case NetKind::DeepDlor:
        s["u"] = to_json(net.deep[l].u);
        s["v"] = to_json(net.deep[l].v);
        s["b"] = to_json(net.deep[l].b);
        break;
      case NetKind::WideDlor:
        s["u"] = to_json(net.wide[l].u);
        s["v"] = to_json(net.wide[l].v);
        s["b"] = to_json(net.wide[l].b);
        s["alpha"] = net.wide[l].alpha;
        break;
    }
    subs.push_back(std::move(s));
  }
  params["substructures"] = std::move(subs);
  if (net.kind == NetKind::DeepDlor) params["alpha"] = net.alpha;
  if (net.kind == NetKind::WideDlor) params["outer_bias"] = to_json(net.outer_bias);
  return Json{{"kind", net_kind_name(net.kind)},
              {"width", net.width},
              {"k", net.k},
              {"activation", to_json(net.activation)},
              {"params", std::move(params)}};
}

TrainableNet net_from_json(const Json& j) {
  TrainableNet net = make_net(net_kind_from_name(j.at("kind").get<std::string>()),
                              j.at("width").get<Index>(), j.at("k").get<int>(),
                              activation_from_json(j.at("activation")));
  const Json& params = j.at("params");
  net.w_in = matrix_from_json(params.at("w_in"));
  net.b_in = vector_from_json(params.at("b_in"));
  net.w_out = matrix_from_json(params.at("w_out"));
  net.b_out = params.at("b_out").get<double>();
  const Json& subs = params.at("substructures");
  for (int l = 0; l < net.k; ++l) {
    const Json& s = subs.at(l);
    switch (net.kind) {
      case NetKind::DenseMlp:
        net.dense[l].w = matrix_from_json(s.at("w"));
        net.dense[l].b = vector_from_json(s.at("b"));
        break;
      case NetKind::DeepDlor:
        net.deep[l].u = matrix_from_json(s.at("u"));
        net.deep[l].v = matrix_from_json(s.at("v"));
        net.deep[l].b = vector_from_json(s.at("b"));
        break;
      case NetKind::WideDlor:
        net.wide[l].u = matrix_from_json(s.at("u"));
        net.wide[l].v = matrix_from_json(s.at("v"));
        net.wide[l].b = vector_from_json(s.at("b"));
        net.wide[l].alpha = s.at("alpha").get<double>();
        break;
    }
  }
  if (net.kind == NetKind::DeepDlor) net.alpha = params.at("alpha").get<double>();
  if (net.kind == NetKind::WideDlor) net.outer_bias = vector_from_json(params.at("outer_bias"));
  return net;
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Json j;
  in >> j;
  return j;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string matrix_csv(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const Matrix& m) {
  atomic_write(path, matrix_csv(m));
}

CsvDataset read_dataset_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset csv: empty file");
  Index dims = static_cast<Index>(std::count(line.begin(), line.end(), ',') + 1) - 1;
  if (dims < 1) throw Error("dataset csv: need at least one feature column");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (static_cast<Index>(row.size()) != dims + 1)
      throw Error("dataset csv: ragged row");
    rows.push_back(std::move(row));
  }
  CsvDataset data;
  data.x_cols.resize(dims, static_cast<Index>(rows.size()));
  data.z.resize(static_cast<Index>(rows.size()));
  for (size_t j = 0; j < rows.size(); ++j) {
    for (Index i = 0; i < dims; ++i) data.x_cols(i, static_cast<Index>(j)) = rows[j][i];
    data.z[static_cast<Index>(j)] = rows[j][dims];
  }
  return data;
}

void write_dataset_csv(const fs::path& path, const CsvDataset& data) {
  std::string out;
  for (Index i = 0; i < data.x_cols.rows(); ++i)
    out += "x_" + std::to_string(i + 1) + ",";
  out += "z\n";
  for (Index j = 0; j < data.x_cols.cols(); ++j) {
    for (Index i = 0; i < data.x_cols.rows(); ++i)
      out += format_double(data.x_cols(i, j)) + ",";
    out += format_double(data.z[j]) + "\n";
  }
  atomic_write(path, out);
}

std::string loss_curve_csv(const std::vector<LossPoint>& curve) {
  std::string out = "epoch,train_mse,test_mse,lr\n";
  for (const auto& p : curve)
    out += std::to_string(p.epoch) + "," + format_double(p.train_mse) + "," +
           format_double(p.test_mse) + "," + format_double(p.lr) + "\n";
  return out;
}

std::string sweep_csv(const SweepResult& sweep) {
  std::string out = "h,err_to_dense,err_to_function\n";
  for (const auto& row : sweep.rows)
    out += format_double(row.h) + "," + format_double(row.err_to_dense) + "," +
           format_double(row.err_to_function) + "\n";
  return out;
}

std::string summary_csv(const ExperimentSummary& summary, bool with_epochs) {
  std::string out = with_epochs
                        ? "arch,k,median_test_mse,q1_test_mse,q3_test_mse,median_epochs,"
                          "q1_epochs,q3_epochs,success_rate,diverged\n"
                        : "arch,k,median_test_mse,q1_test_mse,q3_test_mse,success_rate,"
                          "diverged\n";
  for (const auto& r : summary.rows) {
    out += r.arch + "," + std::to_string(r.k) + "," + format_double(r.test_mse.median) + "," +
           format_double(r.test_mse.q1) + "," + format_double(r.test_mse.q3) + ",";
    if (with_epochs)
      out += format_double(r.epochs.median) + "," + format_double(r.epochs.q1) + "," +
             format_double(r.epochs.q3) + ",";
    out += format_double(r.success_rate) + "," + std::to_string(r.diverged) + "\n";
  }
  return out;
}

}  // namespace dlor
