#include "core/solver.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

namespace qgrom {

double ForcingSpec::operator()(double /*x*/, double y) const {
  switch (kind) {
    case Kind::zero: return 0.0;
    case Kind::sin_pi_y: return amplitude * std::sin(M_PI * y);
  }
  return 0.0;
}

void PhysParams::validate() const {
  if (!(Re > 0.0) || !(Ro > 0.0))
    throw InvalidArgument("params: Re and Ro must be positive");
  if (!(delta > 0.0) || !(delta < 1.0))
    throw InvalidArgument("params: delta must lie strictly between 0 and 1");
  if (Fr < 0.0 || sigma < 0.0)
    throw InvalidArgument("params: Fr and sigma must be nonnegative");
  if (alpha1 < 0.0 || alpha2 < 0.0)
    throw InvalidArgument("params: filtering radii must be nonnegative");
}

double PhysParams::munk_scale() const { return std::cbrt(Ro / Re); }

bool LayerState::all_finite() const {
  return q1.all_finite() && q2.all_finite() && qbar1.all_finite() &&
         qbar2.all_finite() && psi1.all_finite() && psi2.all_finite();
}

LayerState rest_state(const GridPtr& grid) {
  LayerState s;
  const auto y = [](double, double yv) { return yv; };
  s.q1 = eval_on_cells(grid, y);
  s.q2 = s.q1;
  s.qbar1 = s.q1;
  s.qbar2 = s.q1;
  s.psi1 = Field(grid);
  s.psi2 = Field(grid);
  s.t = 0.0;
  return s;
}

double FaceFluxes::outward_sum(int i, int j) const {
  return x(i + 1, j) - x(i, j) + y(i, j + 1) - y(i, j);
}

double FaceFluxes::max_abs() const {
  const double mx = x_face.size() ? x_face.cwiseAbs().maxCoeff() : 0.0;
  const double my = y_face.size() ? y_face.cwiseAbs().maxCoeff() : 0.0;
  return std::max(mx, my);
}

FaceFluxes face_fluxes(const Field& psi) {
  const auto& g = psi.grid();
  const int nx = g.nx(), ny = g.ny();

  // vertex psi: mean of adjacent cell centers, zero on the boundary
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(nx + 1, ny + 1);
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; ++i)
      v(i, j) = 0.25 * (psi(i - 1, j - 1) + psi(i, j - 1) + psi(i - 1, j) +
                        psi(i, j));

  FaceFluxes f;
  f.nx = nx;
  f.ny = ny;
  f.x_face.resize(static_cast<Eigen::Index>(nx + 1) * ny);
  f.y_face.resize(static_cast<Eigen::Index>(nx) * (ny + 1));
  // x-face (i,j): integral of dpsi/dy = psi(top vertex) - psi(bottom vertex)
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i <= nx; ++i)
      f.x_face[static_cast<Eigen::Index>(j) * (nx + 1) + i] =
          v(i, j + 1) - v(i, j);
  // y-face (i,j): integral of -dpsi/dx = psi(left vertex) - psi(right vertex)
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i < nx; ++i)
      f.y_face[static_cast<Eigen::Index>(j) * nx + i] = v(i, j) - v(i + 1, j);
  return f;
}

namespace {

// Gradient magnitude at cell centers: centered differences inside, 3-point
// one-sided stencils on the first/last row and column (exact for quadratics).
Eigen::VectorXd gradient_magnitude(const Field& q) {
  const auto& g = q.grid();
  const int nx = g.nx(), ny = g.ny();
  const double ihx = 1.0 / g.hx(), ihy = 1.0 / g.hy();
  Eigen::VectorXd mag(g.cell_count());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      double gx;
      if (i == 0)
        gx = nx > 2 ? (-3.0 * q(0, j) + 4.0 * q(1, j) - q(2, j)) * 0.5 * ihx
                    : (q(1, j) - q(0, j)) * ihx;
      else if (i == nx - 1)
        gx = nx > 2 ? (3.0 * q(i, j) - 4.0 * q(i - 1, j) + q(i - 2, j)) * 0.5 * ihx
                    : (q(i, j) - q(i - 1, j)) * ihx;
      else
        gx = (q(i + 1, j) - q(i - 1, j)) * 0.5 * ihx;
      double gy;
      if (j == 0)
        gy = ny > 2 ? (-3.0 * q(i, 0) + 4.0 * q(i, 1) - q(i, 2)) * 0.5 * ihy
                    : (q(i, 1) - q(i, 0)) * ihy;
      else if (j == ny - 1)
        gy = ny > 2 ? (3.0 * q(i, j) - 4.0 * q(i, j - 1) + q(i, j - 2)) * 0.5 * ihy
                    : (q(i, j) - q(i, j - 1)) * ihy;
      else
        gy = (q(i, j + 1) - q(i, j - 1)) * 0.5 * ihy;
      mag[g.cell_index(i, j)] = std::hypot(gx, gy);
    }
  return mag;
}

}  // namespace

Field indicator(const Field& q) {
  if (!q.all_finite()) throw InvalidArgument("indicator: non-finite input");
  Eigen::VectorXd mag = gradient_magnitude(q);
  const double mx = mag.maxCoeff();
  if (mx < 1e-14) return Field(q.grid_ptr());
  return Field(q.grid_ptr(), mag / mx);
}

Field laplacian(const Field& f, const BoundaryFn& bc) {
  const auto& g = f.grid();
  const int nx = g.nx(), ny = g.ny();
  const double ihx2 = 1.0 / (g.hx() * g.hx());
  const double ihy2 = 1.0 / (g.hy() * g.hy());
  Eigen::VectorXd out(g.cell_count());
  for (int j = 0; j < ny; ++j) {
    const double yc = g.center_y(j);
    for (int i = 0; i < nx; ++i) {
      const double xc = g.center_x(i);
      const double c = f(i, j);
      const double e = i + 1 < nx ? f(i + 1, j) : 2.0 * bc(g.xf(), yc) - c;
      const double w = i > 0 ? f(i - 1, j) : 2.0 * bc(g.x0(), yc) - c;
      const double n = j + 1 < ny ? f(i, j + 1) : 2.0 * bc(xc, g.y_hi()) - c;
      const double s = j > 0 ? f(i, j - 1) : 2.0 * bc(xc, g.y_lo()) - c;
      out[g.cell_index(i, j)] =
          (e - 2.0 * c + w) * ihx2 + (n - 2.0 * c + s) * ihy2;
    }
  }
  return Field(f.grid_ptr(), std::move(out));
}

void add_scaled_laplacian(SparseSystem& sys, double coeff,
                          const BoundaryFn& bc) {
  const auto& g = sys.grid();
  const int nx = g.nx(), ny = g.ny();
  const double ihx2 = 1.0 / (g.hx() * g.hx());
  const double ihy2 = 1.0 / (g.hy() * g.hy());
  for (int j = 0; j < ny; ++j) {
    const double yc = g.center_y(j);
    for (int i = 0; i < nx; ++i) {
      const double xc = g.center_x(i);
      const Eigen::Index k = g.cell_index(i, j);
      double cdiag = 0.0;
      if (i + 1 < nx) {
        sys.east()[k] += coeff * ihx2;
        cdiag -= ihx2;
      } else {
        // ghost = 2 g_b - q_C
        sys.rhs()[k] -= coeff * 2.0 * bc(g.xf(), yc) * ihx2;
        cdiag -= 2.0 * ihx2;
      }
      if (i > 0) {
        sys.west()[k] += coeff * ihx2;
        cdiag -= ihx2;
      } else {
        sys.rhs()[k] -= coeff * 2.0 * bc(g.x0(), yc) * ihx2;
        cdiag -= 2.0 * ihx2;
      }
      if (j + 1 < ny) {
        sys.north()[k] += coeff * ihy2;
        cdiag -= ihy2;
      } else {
        sys.rhs()[k] -= coeff * 2.0 * bc(xc, g.y_hi()) * ihy2;
        cdiag -= 2.0 * ihy2;
      }
      if (j > 0) {
        sys.south()[k] += coeff * ihy2;
        cdiag -= ihy2;
      } else {
        sys.rhs()[k] -= coeff * 2.0 * bc(xc, g.y_lo()) * ihy2;
        cdiag -= 2.0 * ihy2;
      }
      sys.center()[k] += coeff * cdiag;
    }
  }
}

void add_advection(SparseSystem& sys, const FaceFluxes& phi) {
  const auto& g = sys.grid();
  const int nx = g.nx(), ny = g.ny();
  if (phi.nx != nx || phi.ny != ny)
    throw InvalidArgument("add_advection: flux/grid dimension mismatch");
  const double half_over_v = 0.5 / g.cell_area();
  // Each interior face with outward flux f contributes
  // -(1/2V) f (q_C + q_nb). Domain-boundary faces carry zero flux.
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Eigen::Index k = g.cell_index(i, j);
      double outward = 0.0;
      if (i + 1 < nx) {
        const double f = phi.x(i + 1, j);
        sys.east()[k] -= half_over_v * f;
        outward += f;
      }
      if (i > 0) {
        const double f = -phi.x(i, j);
        sys.west()[k] -= half_over_v * f;
        outward += f;
      }
      if (j + 1 < ny) {
        const double f = phi.y(i, j + 1);
        sys.north()[k] -= half_over_v * f;
        outward += f;
      }
      if (j > 0) {
        const double f = -phi.y(i, j);
        sys.south()[k] -= half_over_v * f;
        outward += f;
      }
      sys.center()[k] -= half_over_v * outward;
    }
}

namespace {

SolveReport checked_solve(const SparseSystem& sys, const SolverOptions& opts,
                          const char* what) {
  try {
    return sparse_solve(sys, opts);
  } catch (const NumericError& e) {
    throw NumericError(std::string(what) + ": " + e.what());
  }
}

Field advance_vorticity_impl(int layer, const Field& q_old,
                             const Field& flux_psi, const Field& psi1,
                             const Field& psi2, const PhysParams& params,
                             double dt, const SolverOptions& solve_opts) {
  const GridPtr grid = q_old.grid_ptr();
  const BoundaryFn qbc = [](double, double y) { return y; };
  const BoundaryFn zero = [](double, double) { return 0.0; };

  SparseSystem sys(grid);
  sys.center().setConstant(1.0 / dt);
  add_advection(sys, face_fluxes(flux_psi));
  add_scaled_laplacian(sys, -1.0 / params.Re, qbc);

  Eigen::VectorXd b = q_old.values() / dt;
  if (layer == 1) {
    const Field forcing = eval_on_cells(grid, [&](double x, double y) {
      return params.forcing(x, y);
    });
    const Field lap_dpsi =
        laplacian(Field(grid, psi2.values() - psi1.values()), zero);
    b += forcing.values() -
         (params.Fr / (params.Re * params.delta)) * lap_dpsi.values();
  } else {
    const Field lap_psi2 = laplacian(psi2, zero);
    const Field lap_dpsi =
        laplacian(Field(grid, psi1.values() - psi2.values()), zero);
    b += -params.sigma * lap_psi2.values() -
         (params.Fr / (params.Re * (1.0 - params.delta))) * lap_dpsi.values();
  }
  sys.rhs() += b;

  SolverOptions opts = solve_opts;
  opts.initial_guess = &q_old.values();
  const char* what = layer == 1 ? "vorticity solve (layer 1)"
                                : "vorticity solve (layer 2)";
  return Field(grid, checked_solve(sys, opts, what).x);
}

}  // namespace

Field advance_vorticity(int layer, const LayerState& state,
                        const PhysParams& params, double dt,
                        const SolverOptions& solve) {
  params.validate();
  if (!(dt > 0.0)) throw InvalidArgument("advance_vorticity: dt must be positive");
  if (layer != 1 && layer != 2)
    throw InvalidArgument("advance_vorticity: layer must be 1 or 2");
  if (layer == 1)
    return advance_vorticity_impl(1, state.q1, state.psi1, state.psi1,
                                  state.psi2, params, dt, solve);
  return advance_vorticity_impl(2, state.q2, state.psi2, state.psi1,
                                state.psi2, params, dt, solve);
}

Field apply_filter(const Field& q, double alpha, const SolverOptions& solve) {
  if (alpha < 0.0) throw InvalidArgument("apply_filter: alpha must be >= 0");
  if (!q.all_finite()) throw InvalidArgument("apply_filter: non-finite input");
  if (alpha == 0.0) return q;

  const GridPtr grid = q.grid_ptr();
  const auto& g = *grid;
  const Field a = indicator(q);
  const double a2 = alpha * alpha;
  const double ihx2 = 1.0 / (g.hx() * g.hx());
  const double ihy2 = 1.0 / (g.hy() * g.hy());

  SparseSystem sys(grid);
  sys.center().setConstant(1.0);
  sys.rhs() = q.values();
  const int nx = g.nx(), ny = g.ny();
  for (int j = 0; j < ny; ++j) {
    const double yc = g.center_y(j);
    for (int i = 0; i < nx; ++i) {
      const Eigen::Index k = g.cell_index(i, j);
      // -alpha^2 (1/V) sum_f a_f (grad qbar)_f . A_f with qbar = y on the
      // boundary; a at a face is the mean of the two cell values, or the cell
      // value itself at a boundary face.
      if (i + 1 < nx) {
        const double af = 0.5 * (a(i, j) + a(i + 1, j));
        sys.east()[k] -= a2 * af * ihx2;
        sys.center()[k] += a2 * af * ihx2;
      } else {
        const double af = a(i, j);
        sys.rhs()[k] += a2 * af * 2.0 * yc * ihx2;
        sys.center()[k] += a2 * af * 2.0 * ihx2;
      }
      if (i > 0) {
        const double af = 0.5 * (a(i, j) + a(i - 1, j));
        sys.west()[k] -= a2 * af * ihx2;
        sys.center()[k] += a2 * af * ihx2;
      } else {
        const double af = a(i, j);
        sys.rhs()[k] += a2 * af * 2.0 * yc * ihx2;
        sys.center()[k] += a2 * af * 2.0 * ihx2;
      }
      if (j + 1 < ny) {
        const double af = 0.5 * (a(i, j) + a(i, j + 1));
        sys.north()[k] -= a2 * af * ihy2;
        sys.center()[k] += a2 * af * ihy2;
      } else {
        const double af = a(i, j);
        sys.rhs()[k] += a2 * af * 2.0 * g.y_hi() * ihy2;
        sys.center()[k] += a2 * af * 2.0 * ihy2;
      }
      if (j > 0) {
        const double af = 0.5 * (a(i, j) + a(i, j - 1));
        sys.south()[k] -= a2 * af * ihy2;
        sys.center()[k] += a2 * af * ihy2;
      } else {
        const double af = a(i, j);
        sys.rhs()[k] += a2 * af * 2.0 * g.y_lo() * ihy2;
        sys.center()[k] += a2 * af * 2.0 * ihy2;
      }
    }
  }

  SolverOptions opts = solve;
  opts.initial_guess = &q.values();
  return Field(grid, checked_solve(sys, opts, "filter solve").x);
}

Field solve_stream(int layer, const Field& qbar, const Field& psi_other,
                   const PhysParams& params, const SolverOptions& solve) {
  params.validate();
  if (layer != 1 && layer != 2)
    throw InvalidArgument("solve_stream: layer must be 1 or 2");
  if (!qbar.all_finite() || !psi_other.all_finite())
    throw InvalidArgument("solve_stream: non-finite input");

  const GridPtr grid = qbar.grid_ptr();
  const double delta_l = layer == 1 ? params.delta : 1.0 - params.delta;
  const double c = params.Fr / delta_l;
  const BoundaryFn zero = [](double, double) { return 0.0; };

  SparseSystem sys(grid);
  add_scaled_laplacian(sys, params.Ro, zero);
  sys.center().array() -= c;
  const Field y = eval_on_cells(grid, [](double, double yv) { return yv; });
  sys.rhs() += qbar.values() - y.values() - c * psi_other.values();

  const char* what = layer == 1 ? "stream solve (layer 1)"
                                : "stream solve (layer 2)";
  return Field(grid, checked_solve(sys, solve, what).x);
}

LayerState step(const LayerState& state, const PhysParams& params, double dt,
                const SolverOptions& solve) {
  auto wrap = [](int idx, auto&& fn) -> Field {
    try {
      return fn();
    } catch (const Error& e) {
      throw NumericError("step " + std::to_string(idx) + ": " + e.what());
    }
  };

  LayerState next = state;
  next.q1 = wrap(1, [&] { return advance_vorticity(1, state, params, dt, solve); });
  next.qbar1 = wrap(2, [&] { return apply_filter(next.q1, params.alpha1, solve); });
  {
    SolverOptions guess = solve;
    guess.initial_guess = &state.psi1.values();
    next.psi1 = wrap(3, [&] {
      return solve_stream(1, next.qbar1, state.psi2, params, guess);
    });
  }
  {
    LayerState coupled = state;
    coupled.psi1 = next.psi1;  // layer-2 vorticity couples to psi1^{n+1}
    next.q2 = wrap(4, [&] { return advance_vorticity(2, coupled, params, dt, solve); });
  }
  next.qbar2 = wrap(5, [&] { return apply_filter(next.q2, params.alpha2, solve); });
  {
    SolverOptions guess = solve;
    guess.initial_guess = &state.psi2.values();
    next.psi2 = wrap(6, [&] {
      return solve_stream(2, next.qbar2, next.psi1, params, guess);
    });
  }
  next.t = state.t + dt;
  return next;
}

namespace {

long to_step_count(double value, double dt, const char* what) {
  const double ratio = value / dt;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-12 * std::max(1.0, std::abs(ratio)))
    throw InvalidArgument(std::string(what) +
                          " must be an integer multiple of dt");
  return static_cast<long>(rounded);
}

}  // namespace

SnapshotSeries run_simulation(const GridPtr& grid, const PhysParams& params,
                              double dt, double t_end,
                              const SnapshotWindow& window,
                              const SolverOptions& solve, std::ostream* log,
                              RunStats* stats, const SimSink& sink) {
  params.validate();
  if (!(dt > 0.0)) throw InvalidArgument("run_simulation: dt must be positive");

  const long total_steps = static_cast<long>(std::ceil(t_end / dt - 1e-12));
  const long stride_steps =
      window.stride > 0.0 ? to_step_count(window.stride, dt, "stride") : 0;
  const long start_step =
      window.stride > 0.0 ? to_step_count(window.start, dt, "start") : -1;
  const long end_step = window.stride > 0.0
                            ? static_cast<long>(std::floor(window.end / dt + 1e-9))
                            : -1;

  const double h = std::max(grid->hx(), grid->hy());
  const double munk = params.munk_scale();
  if (log) {
    if (munk < h)
      *log << "munk scale " << munk << " < h " << h
           << ": stabilized regime\n";
    else
      *log << "munk scale " << munk << " >= h " << h
           << ": resolved regime\n";
  }

  SnapshotSeries series;
  auto maybe_emit = [&](long n, const LayerState& s) {
    if (stride_steps <= 0) return;
    if (n < start_step || n > end_step) return;
    if ((n - start_step) % stride_steps != 0) return;
    series.times.push_back(s.t);
    series.q1.push_back(s.q1);
    series.q2.push_back(s.q2);
    series.psi1.push_back(s.psi1);
    series.psi2.push_back(s.psi2);
    if (sink) sink(s.t, s);
  };

  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  LayerState state = rest_state(grid);
  maybe_emit(0, state);
  const long log_every = std::max(1L, total_steps / 20);
  for (long n = 1; n <= total_steps; ++n) {
    state = step(state, params, dt, solve);
    state.t = n * dt;  // avoid accumulation drift in the time stamp
    if (!state.all_finite())
      throw NumericError("run_simulation: non-finite field at t=" +
                         format_full(state.t));
    maybe_emit(n, state);
    if (log && (n % log_every == 0 || n == total_steps))
      *log << "t=" << state.t << " step=" << n << " wall=" << wall() << "\n";
  }

  if (stats) {
    stats->steps = total_steps;
    stats->wall_seconds = wall();
  }
  return series;
}

}  // namespace qgrom
