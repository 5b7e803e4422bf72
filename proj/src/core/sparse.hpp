#pragma once

#include <Eigen/Core>
#include <vector>

#include "core/grid.hpp"

namespace qgrom {

/// Linear system on the cells of a StructuredGrid with a 5-point stencil:
/// one coefficient each for center, east, west, north, south neighbors.
/// Off-grid neighbor coefficients are zero; boundary contributions are folded
/// into the center coefficient and the right-hand side by the assembler.
class SparseSystem {
 public:
  explicit SparseSystem(GridPtr grid);

  const StructuredGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  Eigen::Index dimension() const { return center_.size(); }

  Eigen::VectorXd& center() { return center_; }
  Eigen::VectorXd& east() { return east_; }
  Eigen::VectorXd& west() { return west_; }
  Eigen::VectorXd& north() { return north_; }
  Eigen::VectorXd& south() { return south_; }
  Eigen::VectorXd& rhs() { return rhs_; }
  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }

  /// y = A x.
  void apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const;

  /// Dense copy of the operator; test and oracle use only.
  Eigen::MatrixXd to_dense() const;

  /// Throws if any stencil entry is non-finite or a center entry is zero.
  void check_valid() const;

 private:
  GridPtr grid_;
  Eigen::VectorXd center_, east_, west_, north_, south_, rhs_;
};

struct SolveReport {
  Eigen::VectorXd x;
  std::vector<double> residual_history;  ///< relative residuals per iteration
  int iterations = 0;
};

struct SolverOptions {
  double tol = 1e-8;    ///< relative residual target ||Ax-b|| / ||b||
  int max_iter = 0;     ///< 0 means 10 * dimension
  const Eigen::VectorXd* initial_guess = nullptr;
};

/// Jacobi-preconditioned BiCGStab on the 5-point stencil. A zero right-hand
/// side short-circuits to x = 0 in zero iterations. Throws NumericError with
/// the final residual when max_iter is exceeded or the recurrence breaks down.
SolveReport sparse_solve(const SparseSystem& system,
                         const SolverOptions& opts = {});

}  // namespace qgrom
