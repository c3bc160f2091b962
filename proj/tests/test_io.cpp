#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dlor/io.hpp"

using namespace dlor;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dlor_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("io") {

TEST_CASE("matrix and vector json round-trip bit for bit") {
  // Round-trip identity is the one property that matters; shortest-repr
  // doubles make it exact.
  for (int trial = 0; trial < 20; ++trial) {
    Rng shape(50 + trial);
    Matrix m = random_matrix(1 + shape.next_u64() % 9, 1 + shape.next_u64() % 9,
                             500 + trial, Dist::Gaussian);
    Json j = to_json(m);
    Json reparsed = Json::parse(j.dump());
    Matrix back = matrix_from_json(reparsed);
    REQUIRE(back.rows() == m.rows());
    CHECK(frob_norm(back - m) == 0.0);
  }
  Vector v = random_vector(13, 3, Dist::Gaussian);
  CHECK(frob_norm(vector_from_json(Json::parse(to_json(v).dump())) - v) == 0.0);
}

TEST_CASE("matrix json is row-major with declared shape") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  Json j = to_json(m);
  CHECK(j["rows"] == 2);
  CHECK(j["cols"] == 3);
  for (int i = 0; i < 6; ++i) CHECK(j["data"][i] == double(i + 1));
  j["data"] = Json::array({1.0});
  CHECK_THROWS(matrix_from_json(j));
}

TEST_CASE("activation json recomputes expansion data on load") {
  auto sp = make_activation(Act::Softplus);
  Json j = to_json(sp);
  j["c"] = 0.25;  // tampering with c must be reflected in recomputed values
  ActivationSpec back = activation_from_json(j);
  CHECK(back.c == 0.25);
  CHECK(back.rho_c == eval(back, 0.25));
  CHECK(back.drho_c == deriv(back, 0.25));
}

TEST_CASE("rank-1 net json round-trip preserves the forward map") {
  Matrix x = random_matrix(2, 6, 71);
  Vector z = random_vector(6, 72);
  Rank1Net net = scalar_interpolate(x, z, make_activation(Act::Softplus), 71);
  Rank1Net back = rank1_from_json(Json::parse(to_json(net).dump()));
  for (Index j = 0; j < 6; ++j)
    CHECK(forward(back, Vector(x.col(j))) == forward(net, Vector(x.col(j))));
}

TEST_CASE("factorization json round-trip verifies its invariants") {
  Matrix w = random_matrix(6, 6, 81, Dist::Gaussian);
  auto f = multiplicative_factorize(w, 2, 0.8, 81);
  MultiplicativeFactorization back = factorization_from_json(Json::parse(to_json(f).dump()));
  CHECK(back.components.size() == f.components.size());
  CHECK(frob_norm(back.product() - f.product()) == 0.0);
  CHECK(frob_norm(back.product() - w) / frob_norm(w) <= 1e-8);
}

TEST_CASE("plan json round-trips simulate bitwise") {
  auto sp = make_activation(Act::Softplus);
  Matrix w = random_matrix(5, 5, 91, Dist::Gaussian);
  Vector b = random_vector(5, 92);
  Vector x = random_vector(5, 93);

  DeepBlockPlan deep = build_deep_block(w, b, 2, 0.8, 1e-3, sp, 91);
  DeepBlockPlan deep_back = deep_plan_from_json(Json::parse(to_json(deep).dump()));
  CHECK((simulate(deep_back, x) - simulate(deep, x)).cwiseAbs().maxCoeff() == 0.0);

  WideBlockPlan wide = build_wide_block(w, b, 3, 1e-3, sp);
  WideBlockPlan wide_back = wide_plan_from_json(Json::parse(to_json(wide).dump()));
  CHECK((simulate(wide_back, x) - simulate(wide, x)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("trainable net checkpoint round-trip") {
  for (NetKind kind : {NetKind::DenseMlp, NetKind::DeepDlor, NetKind::WideDlor}) {
    TrainableNet net = make_net(kind, 8, 3, make_activation(Act::Softplus));
    init_params(net, 17);
    TrainableNet back = net_from_json(Json::parse(to_json(net).dump()));
    CHECK((pack_params(back) - pack_params(net)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(forward(back, 0.3) == forward(net, 0.3));
  }
}

TEST_CASE("dataset csv round-trip") {
  TempDir tmp;
  CsvDataset data;
  data.x_cols = random_matrix(3, 7, 111);
  data.z = random_vector(7, 112);
  const fs::path p = tmp.path / "d.csv";
  write_dataset_csv(p, data);
  CsvDataset back = read_dataset_csv(p);
  CHECK(frob_norm(back.x_cols - data.x_cols) == 0.0);
  CHECK(frob_norm(back.z - data.z) == 0.0);
}

TEST_CASE("matrix csv uses one row per line") {
  Matrix m(2, 2);
  m << 1.5, -2.0, 0.25, 3.0;
  CHECK(matrix_csv(m) == "1.5,-2\n0.25,3\n");
}

TEST_CASE("atomic write replaces files without partial states") {
  TempDir tmp;
  const fs::path p = tmp.path / "f.txt";
  atomic_write(p, "one");
  atomic_write(p, "two");
  std::ifstream in(p);
  std::string s;
  in >> s;
  CHECK(s == "two");
  CHECK_FALSE(fs::exists(p.string() + ".tmp"));
}

}  // TEST_SUITE
