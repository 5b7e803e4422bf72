#pragma once

#include <functional>
#include <iosfwd>

#include "core/grid.hpp"
#include "core/snapshots.hpp"
#include "core/sparse.hpp"

namespace qgrom {

/// Wind forcing acting on the top layer.
struct ForcingSpec {
  enum class Kind { zero, sin_pi_y };
  Kind kind = Kind::sin_pi_y;
  double amplitude = 1.0;

  double operator()(double x, double y) const;
};

/// Nondimensional numbers of the two-layer model plus the filtering radii.
struct PhysParams {
  double Re = 450.0;
  double Ro = 0.001;
  double Fr = 0.1;
  double delta = 0.45;   ///< layer depth aspect ratio, 0 < delta < 1
  double sigma = 0.008;  ///< bottom friction
  double alpha1 = 0.0;   ///< filtering radius, top layer
  double alpha2 = 0.0;   ///< filtering radius, bottom layer
  ForcingSpec forcing;

  void validate() const;
  /// Munk boundary-layer scale cbrt(Ro/Re) in nondimensional units.
  double munk_scale() const;
};

/// Prognostic state of both layers at one time level.
struct LayerState {
  Field q1, q2;        ///< potential vorticity
  Field qbar1, qbar2;  ///< filtered potential vorticity
  Field psi1, psi2;    ///< stream function
  double t = 0.0;

  GridPtr grid() const { return q1.grid_ptr(); }
  bool all_finite() const;
};

/// q_l = y, qbar_l = y, psi_l = 0 at t = 0.
LayerState rest_state(const GridPtr& grid);

/// Signed volumetric flux phi = (curl Psi) . A through every face, built from
/// vertex values of psi (mean of adjacent cell centers, zero on the domain
/// boundary). Canonical orientation: +x for x-faces, +y for y-faces, so the
/// outward flux sum around any cell telescopes to zero.
struct FaceFluxes {
  int nx = 0, ny = 0;
  Eigen::VectorXd x_face;  ///< (nx+1) * ny entries, index j*(nx+1)+i
  Eigen::VectorXd y_face;  ///< nx * (ny+1) entries, index j*nx+i

  double x(int i, int j) const { return x_face[static_cast<Eigen::Index>(j) * (nx + 1) + i]; }
  double y(int i, int j) const { return y_face[static_cast<Eigen::Index>(j) * nx + i]; }
  /// Net outward flux of cell (i,j); zero up to roundoff.
  double outward_sum(int i, int j) const;
  double max_abs() const;
};

FaceFluxes face_fluxes(const Field& psi);

/// a(q) = |grad q| / max_k |grad q|, centered differences inside the domain
/// and second-order one-sided differences along the boundary. Returns the
/// zero field when the gradient vanishes everywhere (below 1e-14).
Field indicator(const Field& q);

using BoundaryFn = std::function<double(double, double)>;

/// Explicit five-point Laplacian with ghost-cell Dirichlet data bc.
Field laplacian(const Field& f, const BoundaryFn& bc);

/// Adds coeff * Lap_h(q) to the implicit operator, folding the Dirichlet
/// boundary data into the right-hand side.
void add_scaled_laplacian(SparseSystem& sys, double coeff, const BoundaryFn& bc);

/// Adds the convective operator -(1/V) sum_j phi_j q_face with central face
/// interpolation. Boundary faces carry zero flux (psi = 0 on the boundary).
void add_advection(SparseSystem& sys, const FaceFluxes& phi);

/// Solves the implicit advection--diffusion step for one layer's potential
/// vorticity (BDF1 in time, coupling terms explicit). For layer 2 the state's
/// psi1 must already hold the new-time stream function.
Field advance_vorticity(int layer, const LayerState& state,
                        const PhysParams& params, double dt,
                        const SolverOptions& solve = {});

/// Solves -alpha^2 div(a(q) grad qbar) + qbar = q with Dirichlet qbar = y.
/// alpha = 0 returns q unchanged.
Field apply_filter(const Field& q, double alpha, const SolverOptions& solve = {});

/// Solves Ro Lap(psi) - (Fr/delta_l) psi = qbar - y - (Fr/delta_l) psi_other
/// with Dirichlet psi = 0, where delta_1 = delta and delta_2 = 1 - delta.
Field solve_stream(int layer, const Field& qbar, const Field& psi_other,
                   const PhysParams& params, const SolverOptions& solve = {});

/// One segregated time step: vorticity, filter and stream solves for the top
/// layer, then the same for the bottom layer using the fresh psi1.
LayerState step(const LayerState& state, const PhysParams& params, double dt,
                const SolverOptions& solve = {});

/// Collection window for snapshot emission: instants start + m*stride
/// inside [start, end]. Both start and stride must be integer multiples of dt
/// (relative tolerance 1e-12).
struct SnapshotWindow {
  double start = 0.0;
  double end = 0.0;
  double stride = 0.0;
};

struct RunStats {
  long steps = 0;
  double wall_seconds = 0.0;
};

using SimSink = std::function<void(double, const LayerState&)>;

/// Integrates from the rest state to t_end, emitting snapshots inside the
/// window to the returned series (and to sink, when given). Throws
/// NumericError with the time stamp if any field stops being finite.
SnapshotSeries run_simulation(const GridPtr& grid, const PhysParams& params,
                              double dt, double t_end,
                              const SnapshotWindow& window,
                              const SolverOptions& solve = {},
                              std::ostream* log = nullptr,
                              RunStats* stats = nullptr,
                              const SimSink& sink = {});

}  // namespace qgrom
