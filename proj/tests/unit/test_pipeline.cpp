#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "core/common.hpp"
#include "core/pipeline.hpp"

using namespace qgrom;
namespace fs = std::filesystem;

namespace {

SweepPlan tiny_plan() {
  SweepPlan plan;
  plan.deltas = {0.35, 0.5};
  plan.sigmas = {0.008};
  plan.frs = {0.1};
  plan.Re = 450.0;
  plan.Ro = 0.001;
  plan.alpha1 = 1.0 / 8;
  plan.alpha2 = 1.0 / 8;
  plan.nx = 8;
  plan.ny = 16;
  plan.dt = 2.5e-3;
  plan.window = {0.5, 1.5, 0.1};
  return plan;
}

OfflineConfig tiny_config(const std::string& out_dir = "") {
  OfflineConfig cfg;
  cfg.rpod.rank = 4;
  cfg.rpod.oversample = 10;
  cfg.rpod.power_iterations = 1;
  cfg.rpod.seed = 7;
  cfg.n_modes = 4;
  cfg.lookback = 3;
  cfg.hyper_q.layers = 1;
  cfg.hyper_q.cells = 8;
  cfg.hyper_q.batch_size = 4;
  cfg.hyper_q.epochs = 20;
  cfg.hyper_psi.layers = 2;
  cfg.hyper_psi.cells = 8;
  cfg.hyper_psi.batch_size = 4;
  cfg.hyper_psi.epochs = 20;
  cfg.hyper_psi.dropout = 0.1;
  cfg.lstm_seed = 1;
  cfg.out_dir = out_dir;
  return cfg;
}

const RomArtifacts& fixture() {
  static const RomArtifacts art = [] {
    return offline(tiny_plan(), tiny_config(), nullptr);
  }();
  return art;
}

Eigen::VectorXd mu3(double a, double b, double c) {
  Eigen::VectorXd mu(3);
  mu << a, b, c;
  return mu;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("nearest sample basics and tie rule") {
  Eigen::MatrixXd samples(3, 2);
  samples << 0.0, 0.0, 1.0, 0.0, 2.0, 0.0;
  CHECK(nearest_sample(Eigen::Vector2d(1.0, 0.0), samples) == 1);
  // midpoint of samples 0 and 1: tie resolves to the lower index
  CHECK(nearest_sample(Eigen::Vector2d(0.5, 0.0), samples) == 0);
  CHECK_THROWS_AS((void)nearest_sample(Eigen::Vector3d(0, 0, 0), samples),
                  InvalidArgument);
}

TEST_CASE("nearest sample on the paper-style parameter grid") {
  std::vector<double> deltas{0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6};
  std::vector<double> sigmas{0.006, 0.007, 0.008, 0.009, 0.010};
  std::vector<double> frs{0.07, 0.08, 0.09, 0.10, 0.11};
  Eigen::MatrixXd samples(225, 3);
  int row = 0;
  for (double d : deltas)
    for (double s : sigmas)
      for (double f : frs) samples.row(row++) << d, s, f;

  const Eigen::VectorXd mu = mu3(0.37, 0.0071, 0.093);
  const int best = nearest_sample(mu, samples);

  // exhaustive scan oracle
  int expect = 0;
  double best_d = 1e300;
  for (int k = 0; k < 225; ++k) {
    const double d = (samples.row(k).transpose() - mu).norm();
    if (d < best_d) {
      best_d = d;
      expect = k;
    }
  }
  CHECK(best == expect);
  CHECK(samples(best, 0) == doctest::Approx(0.35));
  CHECK(samples(best, 1) == doctest::Approx(0.007));
  CHECK(samples(best, 2) == doctest::Approx(0.09));
}

TEST_CASE("nearest sample is stable under permutation up to the tie rule") {
  Eigen::MatrixXd samples(4, 2);
  samples << 0.0, 0.0, 1.0, 1.0, 2.0, 0.5, 0.0, 2.0;
  const Eigen::VectorXd mu = Eigen::Vector2d(0.9, 0.8);
  const Eigen::VectorXd winner =
      samples.row(nearest_sample(mu, samples)).transpose();
  const int perm[4] = {2, 0, 3, 1};
  Eigen::MatrixXd shuffled(4, 2);
  for (int k = 0; k < 4; ++k) shuffled.row(k) = samples.row(perm[k]);
  const Eigen::VectorXd winner2 =
      shuffled.row(nearest_sample(mu, shuffled)).transpose();
  CHECK((winner - winner2).norm() == 0.0);
}

TEST_CASE("sweep plan enumerates the cartesian product delta-major") {
  SweepPlan plan = tiny_plan();
  plan.deltas = {0.2, 0.3};
  plan.sigmas = {0.006, 0.007};
  plan.frs = {0.07};
  CHECK(plan.n_samples() == 4);
  CHECK(plan.mu_at(0)[0] == 0.2);
  CHECK(plan.mu_at(0)[1] == 0.006);
  CHECK(plan.mu_at(1)[1] == 0.007);
  CHECK(plan.mu_at(2)[0] == 0.3);

  SweepPlan paper = tiny_plan();
  paper.deltas = {0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6};
  paper.sigmas = {0.006, 0.007, 0.008, 0.009, 0.010};
  paper.frs = {0.07, 0.08, 0.09, 0.10, 0.11};
  CHECK(paper.n_samples() == 225);
  CHECK(paper.n_samples() * 401 == 90225);
}

TEST_CASE("fingerprint reacts to any plan change") {
  const SweepPlan base = tiny_plan();
  SweepPlan other = base;
  CHECK(base.fingerprint() == other.fingerprint());
  other.dt *= 2;
  CHECK(base.fingerprint() != other.fingerprint());
  other = base;
  other.deltas.push_back(0.6);
  CHECK(base.fingerprint() != other.fingerprint());
  other = base;
  other.solver_tol = 1e-9;
  CHECK(base.fingerprint() != other.fingerprint());
}

TEST_CASE("relative l2 error metric properties") {
  const auto g = build_grid(8, 16, 0, 1, -1, 1);
  Rng rng(6);
  Eigen::VectorXd v(g->cell_count());
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.next_gaussian();
  const Field fom(g, v);

  CHECK(relative_l2_error(fom, fom) == 0.0);
  const Field doubled(g, 2.0 * v);
  CHECK(relative_l2_error(fom, doubled) == doctest::Approx(1.0).epsilon(1e-12));

  const Field rom(g, v.cwiseAbs());
  const double eps = relative_l2_error(fom, rom);
  for (double c : {3.0, -0.125, 1e6}) {
    const Field cf(g, c * v);
    const Field cr(g, c * rom.values());
    CHECK(relative_l2_error(cf, cr) == doctest::Approx(eps).epsilon(1e-12));
  }
  CHECK_THROWS_AS((void)relative_l2_error(Field(g), rom), InvalidArgument);
}

TEST_CASE("offline produces complete artifacts on the desk-scale plan") {
  const RomArtifacts& art = fixture();
  CHECK(art.fingerprint == tiny_plan().fingerprint());
  for (int v = 0; v < kNumVariables; ++v) {
    const auto& basis = art.bases[v];
    CHECK(basis.n_modes() == 4);
    const Eigen::MatrixXd gram =
        basis.modes.transpose() * basis.modes -
        Eigen::MatrixXd::Identity(4, 4);
    CHECK(gram.cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(art.snapshots[v].n_columns() == 2 * 11);
    CHECK(art.models[v].all_finite());
    // the snapshot data is genuinely nonzero (the flow left the rest state)
    CHECK(art.snapshots[v].data.norm() > 0.0);
  }
}

TEST_CASE("consistency error equals the projection error of the block") {
  const RomArtifacts& art = fixture();
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const auto& snaps = art.snaps(var);
    for (int k = 0; k < snaps.n_samples(); ++k) {
      const double via_fields = consistency_error(art, var, k);
      const Eigen::MatrixXd block =
          snaps.data.middleCols(k * snaps.n_times(), snaps.n_times());
      const double via_algebra = projection_error(art.basis(var), block);
      CHECK(via_fields == doctest::Approx(via_algebra).epsilon(1e-10));
      CHECK(via_fields < 1.0);
    }
  }
}

TEST_CASE("more modes never increase the consistency error") {
  const RomArtifacts& art = fixture();
  RomArtifacts truncated = art;
  for (int v = 0; v < kNumVariables; ++v) {
    truncated.bases[v].modes = art.bases[v].modes.leftCols(2);
    truncated.bases[v].sigma = art.bases[v].sigma.head(2);
  }
  for (int v = 0; v < kNumVariables; ++v)
    for (int k = 0; k < 2; ++k)
      CHECK(consistency_error(art, static_cast<Variable>(v), k) <=
            consistency_error(truncated, static_cast<Variable>(v), k) + 1e-12);
}

TEST_CASE("reconstruct with zero coefficients returns the nearest average") {
  // handcrafted artifacts: zero fluctuations make every table coefficient
  // vanish, so the reconstruction must equal the stored time average
  const auto g = build_grid(4, 4, 0, 1, -1, 1);
  RomArtifacts art;
  art.plan = tiny_plan();
  Rng rng(17);
  for (int v = 0; v < kNumVariables; ++v) {
    auto& s = art.snapshots[v];
    s.variable = static_cast<Variable>(v);
    s.grid = g;
    s.times = {0.1, 0.2, 0.3};
    s.parameters.resize(1, 3);
    s.parameters << 0.4, 0.008, 0.1;
    s.averages.resize(g->cell_count(), 1);
    for (Eigen::Index i = 0; i < s.averages.size(); ++i)
      s.averages.data()[i] = rng.next_gaussian();
    s.data = Eigen::MatrixXd::Zero(g->cell_count(), 3);
    auto& b = art.bases[v];
    b.variable = s.variable;
    b.modes = Eigen::MatrixXd::Identity(g->cell_count(), 2);
    b.sigma = Eigen::VectorXd::Ones(2);
  }
  const auto fields =
      reconstruct(art, Variable::q1, mu3(0.4, 0.008, 0.1), {0.1, 0.2},
                  CoefficientSource::training_table);
  REQUIRE(fields.size() == 2);
  for (const auto& f : fields)
    CHECK((f.values() - art.snapshots[0].averages.col(0)).norm() == 0.0);
}

TEST_CASE("reconstruct without a trained model reports incomplete artifacts") {
  RomArtifacts art = fixture();
  art.models[0] = LstmModel{};
  CHECK_THROWS_WITH_AS(
      (void)reconstruct(art, Variable::q1, mu3(0.35, 0.008, 0.1), {1.6}),
      doctest::Contains("no trained model"), InvalidArgument);
}

TEST_CASE("evaluate against a fresh full-order reference") {
  const RomArtifacts& art = fixture();
  const Eigen::VectorXd mu = mu3(0.42, 0.008, 0.1);
  const SnapshotSeries ref = run_fom(art.plan, mu, {1.5, 1.9, 0.1});
  const ErrorReport rep = evaluate(art, mu, ref);
  for (int v = 0; v < kNumVariables; ++v) {
    CHECK(!rep.undefined[v]);
    CHECK(std::isfinite(rep.eps[v]));
    CHECK(rep.eps[v] >= 0.0);
    CHECK(rep.eps[v] < 1.5);  // sane scale at desk resolution
  }
}

TEST_CASE("offline persists and reloads artifacts faithfully") {
  const auto dir = fs::temp_directory_path() / "qgrom_offline_fixture";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const RomArtifacts art = offline(tiny_plan(), tiny_config(dir.string()));

  const RomArtifacts loaded = load_artifacts((dir / "rom-manifest.json").string());
  CHECK(loaded.fingerprint == art.fingerprint);
  for (int v = 0; v < kNumVariables; ++v) {
    CHECK((loaded.snapshots[v].data - art.snapshots[v].data).norm() == 0.0);
    CHECK((loaded.bases[v].modes - art.bases[v].modes).norm() == 0.0);
    CHECK((loaded.models[v].W_out - art.models[v].W_out).norm() == 0.0);
  }

  // a second offline run on the same directory reuses the cached sweep
  std::ostringstream log;
  (void)offline(tiny_plan(), tiny_config(dir.string()), &log);
  CHECK(log.str().find("reusing cached") != std::string::npos);

  // a different plan against the same directory is rejected
  SweepPlan other = tiny_plan();
  other.dt *= 0.5;
  CHECK_THROWS_WITH_AS((void)offline(other, tiny_config(dir.string())),
                       doctest::Contains("fingerprint"), InvalidArgument);
  fs::remove_all(dir);
}

TEST_CASE("benchmark produces the three timed phases") {
  const RomArtifacts& art = fixture();
  const BenchmarkReport rep = benchmark(art, {1.6, 1.7, 1.8, 1.9});
  REQUIRE(rep.phases.size() == 4);
  CHECK(rep.phases[0].phase == "fom_run");
  CHECK(rep.phases[1].phase == "pod");
  CHECK(rep.phases[2].phase == "rpod");
  CHECK(rep.phases[3].phase == "online_reconstruct");
  for (const auto& p : rep.phases) CHECK(p.seconds >= 0.0);
  CHECK(rep.phases[3].speedup > 0.0);
}

}  // TEST_SUITE
