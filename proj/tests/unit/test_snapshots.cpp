#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "core/common.hpp"
#include "core/snapshots.hpp"

using namespace qgrom;
namespace fs = std::filesystem;

namespace {

SnapshotSeries make_series(const GridPtr& g, const Eigen::VectorXd& mu,
                           int n_times, std::uint64_t seed) {
  SnapshotSeries s;
  s.mu = mu;
  Rng rng(seed);
  for (int p = 0; p < n_times; ++p) {
    s.times.push_back(0.5 + 0.1 * p);
    for (int v = 0; v < kNumVariables; ++v) {
      Eigen::VectorXd vals(g->cell_count());
      for (Eigen::Index k = 0; k < vals.size(); ++k)
        vals[k] = rng.next_gaussian();
      s.fields(static_cast<Variable>(v)).emplace_back(g, vals);
    }
  }
  return s;
}

Eigen::VectorXd mu3(double a, double b, double c) {
  Eigen::VectorXd mu(3);
  mu << a, b, c;
  return mu;
}

}  // namespace

TEST_SUITE("snapshots") {

TEST_CASE("time average of a constant series is that constant") {
  const auto g = build_grid(4, 4, 0, 1, -1, 1);
  SnapshotSeries s;
  s.mu = mu3(0.4, 0.008, 0.1);
  const Field f = eval_on_cells(g, [](double x, double y) { return x + y; });
  for (int p = 0; p < 5; ++p) {
    s.times.push_back(p * 0.1);
    for (int v = 0; v < kNumVariables; ++v)
      s.fields(static_cast<Variable>(v)).push_back(f);
  }
  const Field avg = time_average(s, Variable::q1);
  CHECK((avg.values() - f.values()).norm() == 0.0);
}

TEST_CASE("time average of {f, -f} is zero and fluctuations are {f, -f}") {
  const auto g = build_grid(4, 4, 0, 1, -1, 1);
  SnapshotSeries s;
  s.mu = mu3(0.4, 0.008, 0.1);
  const Field f = eval_on_cells(g, [](double x, double y) { return x * y; });
  const Field nf(g, -f.values());
  s.times = {0.0, 0.1};
  for (int v = 0; v < kNumVariables; ++v) {
    s.fields(static_cast<Variable>(v)).push_back(f);
    s.fields(static_cast<Variable>(v)).push_back(nf);
  }
  CHECK(time_average(s, Variable::psi1).values().norm() == 0.0);
  const auto fl = fluctuations(s, Variable::psi1);
  CHECK((fl[0].values() - f.values()).norm() == 0.0);
  CHECK((fl[1].values() + f.values()).norm() == 0.0);
}

TEST_CASE("per-parameter fluctuation mean vanishes") {
  const auto g = build_grid(6, 4, 0, 1, -1, 1);
  const auto s = make_series(g, mu3(0.3, 0.007, 0.09), 17, 123);
  for (int v = 0; v < kNumVariables; ++v) {
    const auto fl = fluctuations(s, static_cast<Variable>(v));
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(g->cell_count());
    double scale = 0.0;
    for (const auto& f : fl) {
      sum += f.values();
      scale = std::max(scale, f.values().cwiseAbs().maxCoeff());
    }
    CHECK(sum.cwiseAbs().maxCoeff() <= 1e-12 * s.n_times() * scale);
  }
}

TEST_CASE("empty series is rejected") {
  SnapshotSeries s;
  CHECK_THROWS_AS((void)time_average(s, Variable::q1), InvalidArgument);
}

TEST_CASE("assemble_matrix column layout is parameter-major, time-minor") {
  const auto g = build_grid(4, 4, 0, 1, -1, 1);
  std::vector<SnapshotSeries> all;
  for (int k = 0; k < 3; ++k)
    all.push_back(make_series(g, mu3(0.2 + 0.1 * k, 0.008, 0.1), 4, 50 + k));
  const SnapshotMatrix m = assemble_matrix(all, Variable::q2);
  CHECK(m.n_columns() == 12);
  CHECK(m.n_samples() == 3);
  CHECK(m.n_times() == 4);
  CHECK(m.dim() == 3);

  for (int k = 0; k < 3; ++k) {
    const auto fl = fluctuations(all[k], Variable::q2);
    for (int p = 0; p < 4; ++p) {
      const auto j = m.column_index(k, p);
      CHECK((m.data.col(j) - fl[p].values()).norm() == 0.0);
      const auto [kk, pp] = m.split_index(j);
      CHECK(kk == k);
      CHECK(pp == p);
    }
  }
}

TEST_CASE("column index map is a bijection") {
  const auto g = build_grid(2, 2, 0, 1, -1, 1);
  std::vector<SnapshotSeries> all;
  for (int k = 0; k < 5; ++k)
    all.push_back(make_series(g, mu3(0.2 + 0.05 * k, 0.008, 0.1), 7, 99 + k));
  const SnapshotMatrix m = assemble_matrix(all, Variable::q1);
  std::vector<bool> seen(m.n_columns(), false);
  for (int k = 0; k < 5; ++k)
    for (int p = 0; p < 7; ++p) {
      const auto j = m.column_index(k, p);
      CHECK(!seen[j]);
      seen[j] = true;
    }
  for (bool b : seen) CHECK(b);
}

TEST_CASE("sample counting matches the sweep sizes") {
  // M = 9 delta-samples x 401 instants gives 3609 columns
  const auto g = build_grid(2, 2, 0, 1, -1, 1);
  std::vector<SnapshotSeries> all;
  for (int k = 0; k < 9; ++k)
    all.push_back(make_series(g, mu3(0.2 + 0.05 * k, 0.006, 0.1), 401, k));
  const SnapshotMatrix m = assemble_matrix(all, Variable::psi2);
  CHECK(m.n_columns() == 3609);
}

TEST_CASE("single-sample single-instant matrix is one zero column") {
  const auto g = build_grid(3, 3, 0, 1, -1, 1);
  const auto s = make_series(g, mu3(0.5, 0.01, 0.07), 1, 5);
  const SnapshotMatrix m = assemble_matrix({s}, Variable::q1);
  CHECK(m.n_columns() == 1);
  CHECK(m.data.col(0).norm() == 0.0);  // fluctuation of a single snapshot
}

TEST_CASE("mismatched snapshot counts are rejected") {
  const auto g = build_grid(3, 3, 0, 1, -1, 1);
  const auto a = make_series(g, mu3(0.3, 0.008, 0.1), 4, 1);
  const auto b = make_series(g, mu3(0.4, 0.008, 0.1), 5, 2);
  CHECK_THROWS_AS((void)assemble_matrix({a, b}, Variable::q1), InvalidArgument);
}

TEST_CASE("snapshot archive round trip is exact") {
  const auto g = build_grid(2, 2, 0, 1, -1, 1);
  SnapshotMatrix m;
  m.variable = Variable::psi1;
  m.grid = g;
  m.times = {1.0, 2.0, 3.0};
  m.parameters.resize(1, 3);
  m.parameters << 0.45, 0.008, 0.1;
  m.averages.resize(4, 1);
  m.averages << 0.1, -0.2, 0.3, 1e-300;
  m.data.resize(4, 3);
  m.data << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10.5, -11.25, 0.1;
  m.fingerprint = 0xdeadbeef12345678ull;

  const auto path = fs::temp_directory_path() / "qgrom_roundtrip.qgs";
  write_snapshots(m, path.string());
  const SnapshotMatrix r = read_snapshots(path.string());
  CHECK(r.variable == m.variable);
  CHECK(r.fingerprint == m.fingerprint);
  CHECK((r.data - m.data).norm() == 0.0);
  CHECK((r.averages - m.averages).norm() == 0.0);
  CHECK((r.parameters - m.parameters).norm() == 0.0);
  CHECK(r.times == m.times);
  CHECK(r.grid->same_geometry(*g));

  // rewriting produces a byte-identical file
  const auto path2 = fs::temp_directory_path() / "qgrom_roundtrip2.qgs";
  write_snapshots(r, path2.string());
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("corrupted archives are rejected without partial results") {
  const auto g = build_grid(2, 2, 0, 1, -1, 1);
  const auto s = make_series(g, mu3(0.3, 0.008, 0.1), 3, 77);
  const SnapshotMatrix m = assemble_matrix({s}, Variable::q1);
  const auto path = fs::temp_directory_path() / "qgrom_corrupt.qgs";
  write_snapshots(m, path.string());

  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
    f.close();
    CHECK_THROWS_AS((void)read_snapshots(path.string()), FormatError);
  }
  SUBCASE("flipped payload byte fails the checksum") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-16, std::ios::end);
    char c;
    f.seekg(-16, std::ios::end);
    f.read(&c, 1);
    c ^= 0x40;
    f.seekp(-16, std::ios::end);
    f.write(&c, 1);
    f.close();
    CHECK_THROWS_AS((void)read_snapshots(path.string()), FormatError);
  }
  SUBCASE("truncation") {
    const auto size = fs::file_size(path);
    fs::resize_file(path, size - 9);
    CHECK_THROWS_AS((void)read_snapshots(path.string()), FormatError);
  }
  fs::remove(path);
}

TEST_CASE("variable names round trip") {
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    CHECK(variable_from_name(variable_name(var)) == var);
  }
  CHECK_THROWS_AS((void)variable_from_name("vorticity"), InvalidArgument);
}

}  // TEST_SUITE
