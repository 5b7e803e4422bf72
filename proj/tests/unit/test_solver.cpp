#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "../support/mms.hpp"
#include "core/common.hpp"
#include "core/solver.hpp"

using namespace qgrom;

namespace {

PhysParams desk_params() {
  PhysParams p;
  p.Re = 450.0;
  p.Ro = 0.001;
  p.Fr = 0.1;
  p.delta = 0.45;
  p.sigma = 0.008;
  p.alpha1 = 1.0 / 16;
  p.alpha2 = 1.0 / 16;
  return p;
}

Field random_field(const GridPtr& g, Rng& rng, double amp = 1.0) {
  Eigen::VectorXd v(g->cell_count());
  for (Eigen::Index k = 0; k < v.size(); ++k)
    v[k] = amp * rng.next_gaussian();
  return Field(g, v);
}

}  // namespace

TEST_SUITE("solver") {

TEST_CASE("indicator of a uniform gradient is one") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  const Field q = eval_on_cells(g, [](double, double y) { return y; });
  const Field a = indicator(q);
  CHECK(a.values().minCoeff() == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(a.values().maxCoeff() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("indicator of a constant field uses the degenerate branch") {
  const auto g = build_grid(8, 8, 0, 1, 0, 1);
  const Field q = eval_on_cells(g, [](double, double) { return 3.7; });
  const Field a = indicator(q);
  CHECK(a.values().norm() == 0.0);
}

TEST_CASE("indicator of y^2 matches the analytic gradient at cell centers") {
  const auto g = build_grid(8, 16, 0, 1, -1, 1);
  const Field q = eval_on_cells(g, [](double, double y) { return y * y; });
  const Field a = indicator(q);
  // one-sided stencils are exact for quadratics, so |grad q|_k = |2 y_k|
  double ymax = 0.0;
  for (int j = 0; j < g->ny(); ++j)
    ymax = std::max(ymax, std::abs(g->center_y(j)));
  for (int j = 0; j < g->ny(); ++j)
    for (int i = 0; i < g->nx(); ++i)
      CHECK(a(i, j) ==
            doctest::Approx(std::abs(g->center_y(j)) / ymax).epsilon(1e-12));
}

TEST_CASE("indicator stays in [0,1] on random fields") {
  const auto g = build_grid(12, 10, 0, 1, -1, 1);
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const Field a = indicator(random_field(g, rng, 5.0));
    CHECK(a.values().minCoeff() >= 0.0);
    CHECK(a.values().maxCoeff() <= 1.0 + 1e-15);
  }
}

TEST_CASE("face fluxes vanish for zero and constant stream function") {
  const auto g = build_grid(8, 8, 0, 1, -1, 1);
  const FaceFluxes f0 = face_fluxes(Field(g));
  CHECK(f0.max_abs() == 0.0);

  // constant psi in the interior: away from the boundary all vertex values
  // agree, so interior-face fluxes vanish
  const Field c = eval_on_cells(g, [](double, double) { return 2.0; });
  const FaceFluxes fc = face_fluxes(c);
  for (int j = 2; j < 6; ++j)
    for (int i = 2; i < 6; ++i)
      CHECK(fc.x(i, j) == 0.0);
}

TEST_CASE("face flux approximates the stream-function curl on xy") {
  const auto g = build_grid(32, 64, 0, 1, -1, 1);
  const Field psi = eval_on_cells(g, [](double x, double y) { return x * y; });
  const FaceFluxes f = face_fluxes(psi);
  // interior x-face: phi = hy * x_f exactly (vertex means of xy are exact)
  for (int j = 10; j < 20; ++j)
    for (int i = 5; i < 20; ++i) {
      const double xf = g->x0() + i * g->hx();
      CHECK(f.x(i, j) == doctest::Approx(g->hy() * xf).epsilon(1e-12));
    }
}

TEST_CASE("per-cell net face flux telescopes to zero") {
  const auto g = build_grid(16, 24, 0, 1, -1, 1);
  Rng rng(4);
  const Field psi = random_field(g, rng, 3.0);
  const FaceFluxes f = face_fluxes(psi);
  const double bound = 1e-12 * f.max_abs();
  for (int j = 0; j < g->ny(); ++j)
    for (int i = 0; i < g->nx(); ++i)
      CHECK(std::abs(f.outward_sum(i, j)) <= bound);
}

TEST_CASE("rest state is a fixed point of advance_vorticity") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.forcing.kind = ForcingSpec::Kind::zero;
  const LayerState state = rest_state(g);
  const Field q1 = advance_vorticity(1, state, p, 1e-3);
  CHECK((q1.values() - state.q1.values()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("one forced step from rest matches explicit Euler inside") {
  const auto g = build_grid(64, 128, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.alpha1 = p.alpha2 = 1.0 / 64;
  const double dt = 2.5e-5;
  const LayerState state = rest_state(g);
  SolverOptions opts;
  opts.tol = 1e-12;
  const Field q1 = advance_vorticity(1, state, p, dt, opts);
  double max_err = 0.0;
  for (int j = 2; j < g->ny() - 2; ++j)
    for (int i = 2; i < g->nx() - 2; ++i) {
      const double expected =
          g->center_y(j) + dt * std::sin(M_PI * g->center_y(j));
      max_err = std::max(max_err, std::abs(q1(i, j) - expected));
    }
  CHECK(max_err <= 1e-9);
}

TEST_CASE("advection-diffusion manufactured solution converges at order 2") {
  const double e1 = mms::advdiff_mms_error(8, 450.0);
  const double e2 = mms::advdiff_mms_error(16, 450.0);
  const double e3 = mms::advdiff_mms_error(32, 450.0);
  CHECK(mms::observed_order(e1, e2, 1.0 / 8, 1.0 / 16) >= 1.9);
  CHECK(mms::observed_order(e2, e3, 1.0 / 16, 1.0 / 32) >= 1.9);
}

TEST_CASE("stream manufactured solution converges at order 2") {
  const PhysParams p = desk_params();
  const double e1 = mms::stream_mms_error(8, p);
  const double e2 = mms::stream_mms_error(16, p);
  const double e3 = mms::stream_mms_error(32, p);
  CHECK(mms::observed_order(e1, e2, 1.0 / 8, 1.0 / 16) >= 1.9);
  CHECK(mms::observed_order(e2, e3, 1.0 / 16, 1.0 / 32) >= 1.9);
}

TEST_CASE("filter with alpha=0 is the identity") {
  const auto g = build_grid(8, 8, 0, 1, -1, 1);
  Rng rng(17);
  const Field q = random_field(g, rng);
  const Field qbar = apply_filter(q, 0.0);
  CHECK((qbar.values() - q.values()).norm() == 0.0);
}

TEST_CASE("filter leaves q = y unchanged") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  const Field q = eval_on_cells(g, [](double, double y) { return y; });
  const Field qbar = apply_filter(q, 1.0 / 16);
  CHECK((qbar.values() - q.values()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("filter matches an assembled dense direct solve") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  const double eps = 1e-3;
  const double alpha = 1.0 / 64;
  const Field q = eval_on_cells(g, [&](double x, double y) {
    return y + eps * std::sin(8 * M_PI * x) * std::sin(8 * M_PI * y);
  });
  SolverOptions opts;
  opts.tol = 1e-12;
  const Field qbar = apply_filter(q, alpha, opts);

  // dense oracle: assemble the same variable-coefficient Helmholtz operator
  // from scratch and solve it directly
  const Field a = indicator(q);
  const Eigen::Index n = g->cell_count();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = q.values();
  const double a2 = alpha * alpha;
  const double ihx2 = 1.0 / (g->hx() * g->hx());
  const double ihy2 = 1.0 / (g->hy() * g->hy());
  for (int j = 0; j < g->ny(); ++j)
    for (int i = 0; i < g->nx(); ++i) {
      const auto k = g->cell_index(i, j);
      A(k, k) = 1.0;
      auto face = [&](int ii, int jj, double ih2, double gb) {
        if (ii >= 0 && ii < g->nx() && jj >= 0 && jj < g->ny()) {
          const double af = 0.5 * (a(i, j) + a(ii, jj));
          A(k, g->cell_index(ii, jj)) -= a2 * af * ih2;
          A(k, k) += a2 * af * ih2;
        } else {
          const double af = a(i, j);
          b[k] += a2 * af * 2.0 * gb * ih2;
          A(k, k) += a2 * af * 2.0 * ih2;
        }
      };
      face(i + 1, j, ihx2, g->center_y(j));
      face(i - 1, j, ihx2, g->center_y(j));
      face(i, j + 1, ihy2, g->y_hi());
      face(i, j - 1, ihy2, g->y_lo());
    }
  const Eigen::VectorXd dense = Eigen::PartialPivLU<Eigen::MatrixXd>(A).solve(b);
  CHECK((qbar.values() - dense).norm() <= 1e-8 * dense.norm());

  // the 8-pi mode is damped by roughly 1/(1 + alpha^2 lambda); check the
  // order of magnitude through the filtered fluctuation amplitude
  const Field mode = eval_on_cells(g, [&](double x, double y) {
    return std::sin(8 * M_PI * x) * std::sin(8 * M_PI * y);
  });
  const double before = eps;
  const double after = (qbar.values() - eval_on_cells(g, [](double, double y) {
                          return y;
                        }).values())
                           .dot(mode.values()) /
                       mode.values().squaredNorm();
  const double damping = after / before;
  CHECK(damping > 0.55);
  CHECK(damping < 0.95);
}

TEST_CASE("filter error scales with alpha^2") {
  const auto g = build_grid(32, 64, 0, 1, -1, 1);
  const Field q = eval_on_cells(g, [](double x, double y) {
    return y + std::sin(M_PI * x) * std::sin(M_PI * y);
  });
  SolverOptions opts;
  opts.tol = 1e-12;
  const double d16 = l2_norm(
      Field(g, apply_filter(q, 1.0 / 16, opts).values() - q.values()));
  const double d32 = l2_norm(
      Field(g, apply_filter(q, 1.0 / 32, opts).values() - q.values()));
  const double d64 = l2_norm(
      Field(g, apply_filter(q, 1.0 / 64, opts).values() - q.values()));
  CHECK(d16 / d32 == doctest::Approx(4.0).epsilon(0.15));
  CHECK(d32 / d64 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("stream solve of the rest state is zero") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  const PhysParams p = desk_params();
  const Field qbar = eval_on_cells(g, [](double, double y) { return y; });
  const Field psi = solve_stream(1, qbar, Field(g), p);
  CHECK(psi.values().norm() == 0.0);
}

TEST_CASE("stream solve cancels a symmetric psi_other exactly") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.Fr = 0.1;
  p.delta = 0.5;
  const Field psi_star = eval_on_cells(g, mms::psi_star);
  // manufacture qbar from the discrete operator so psi_star solves exactly
  const Field lap = laplacian(psi_star, [](double, double) { return 0.0; });
  const Field y = eval_on_cells(g, [](double, double yv) { return yv; });
  const Field qbar(g, y.values() + p.Ro * lap.values());
  SolverOptions opts;
  opts.tol = 1e-13;
  const Field psi = solve_stream(1, qbar, psi_star, p, opts);
  CHECK((psi.values() - psi_star.values()).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("step keeps the unforced rest state fixed") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.forcing.kind = ForcingSpec::Kind::zero;
  LayerState s = rest_state(g);
  const Eigen::VectorXd y0 = s.q1.values();
  for (int n = 0; n < 5; ++n) s = step(s, p, 1e-3);
  CHECK((s.q1.values() - y0).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((s.q2.values() - y0).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(s.psi1.values().norm() == 0.0);
  CHECK(s.psi2.values().norm() == 0.0);
}

TEST_CASE("forcing perturbs only the top layer at leading order") {
  const auto g = build_grid(64, 128, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.alpha1 = p.alpha2 = 1.0 / 64;
  const double dt = 2.5e-5;
  SolverOptions opts;
  opts.tol = 1e-12;
  const LayerState s1 = step(rest_state(g), p, dt, opts);
  const Eigen::VectorXd y = rest_state(g).q1.values();
  CHECK((s1.q1.values() - y).cwiseAbs().maxCoeff() > 1e-6);   // perturbed
  CHECK((s1.q2.values() - y).cwiseAbs().maxCoeff() <= 1e-8);  // still y
}

TEST_CASE("two half steps vs one full step scale as dt^2") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  const PhysParams p = desk_params();
  SolverOptions opts;
  opts.tol = 1e-12;
  auto difference = [&](double dt) {
    LayerState two = rest_state(g);
    two = step(two, p, dt, opts);
    two = step(two, p, dt, opts);
    LayerState one = step(rest_state(g), p, 2 * dt, opts);
    return l2_norm(Field(g, two.q1.values() - one.q1.values()));
  };
  const double d1 = difference(2e-3);
  const double d2 = difference(1e-3);
  CHECK(d1 / d2 == doctest::Approx(4.0).epsilon(0.35));
}

TEST_CASE("temporal order of the full step is one") {
  const auto g = build_grid(16, 32, 0, 1, -1, 1);
  const PhysParams p = desk_params();
  SolverOptions opts;
  opts.tol = 1e-12;
  const double T = 0.05;
  auto solve_q1 = [&](double dt) {
    LayerState s = rest_state(g);
    const long n = std::lround(T / dt);
    for (long i = 0; i < n; ++i) s = step(s, p, dt, opts);
    return s.q1.values();
  };
  const Eigen::VectorXd ref = solve_q1(T / 256);
  const double e1 = (solve_q1(T / 16) - ref).norm();
  const double e2 = (solve_q1(T / 32) - ref).norm();
  const double e3 = (solve_q1(T / 64) - ref).norm();
  const double o1 = std::log2(e1 / e2);
  const double o2 = std::log2(e2 / e3);
  CHECK(o1 == doctest::Approx(1.0).epsilon(0.35));
  CHECK(o2 == doctest::Approx(1.0).epsilon(0.35));
}

TEST_CASE("snapshot emission counting contract") {
  const auto g = build_grid(8, 16, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.alpha1 = p.alpha2 = 1.0 / 8;
  p.forcing.kind = ForcingSpec::Kind::zero;
  const double dt = 1e-3;
  SnapshotWindow w{0.0, 10 * dt, 5 * dt};
  const SnapshotSeries series =
      run_simulation(g, p, dt, 10 * dt, w);
  REQUIRE(series.n_times() == 3);
  CHECK(series.times[0] == doctest::Approx(0.0));
  CHECK(series.times[1] == doctest::Approx(5 * dt));
  CHECK(series.times[2] == doctest::Approx(10 * dt));
}

TEST_CASE("401 snapshots over a [10,50] window at stride 0.1") {
  const auto g = build_grid(4, 4, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.forcing.kind = ForcingSpec::Kind::zero;  // rest state: cheap steps
  p.alpha1 = p.alpha2 = 0.0;
  const double dt = 0.05;
  SnapshotWindow w{10.0, 50.0, 0.1};
  const SnapshotSeries series = run_simulation(g, p, dt, 50.0, w);
  CHECK(series.n_times() == 401);
}

TEST_CASE("stride not a multiple of dt is rejected") {
  const auto g = build_grid(4, 4, 0, 1, -1, 1);
  const PhysParams p = desk_params();
  SnapshotWindow w{0.0, 1.0, 0.35};
  CHECK_THROWS_AS((void)run_simulation(g, p, 0.1, 1.0, w), InvalidArgument);
}

TEST_CASE("munk scale guard logs the stabilized regime") {
  const auto g = build_grid(64, 128, 0, 1, -1, 1);
  PhysParams p = desk_params();
  p.forcing.kind = ForcingSpec::Kind::zero;
  CHECK(p.munk_scale() == doctest::Approx(0.013057).epsilon(1e-4));
  std::ostringstream log;
  SnapshotWindow w{0.0, 0.0, 0.0};
  (void)run_simulation(g, p, 1e-3, 2e-3, w, {}, &log);
  CHECK(log.str().find("stabilized regime") != std::string::npos);
}

TEST_CASE("invalid dt is rejected") {
  const auto g = build_grid(8, 8, 0, 1, -1, 1);
  const PhysParams p = desk_params();
  const LayerState s = rest_state(g);
  CHECK_THROWS_AS((void)advance_vorticity(1, s, p, 0.0), InvalidArgument);
  CHECK_THROWS_AS((void)advance_vorticity(3, s, p, 0.1), InvalidArgument);
}

TEST_CASE("params validation") {
  PhysParams p = desk_params();
  p.delta = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = desk_params();
  p.Re = -1.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = desk_params();
  p.alpha1 = -0.1;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

}  // TEST_SUITE
