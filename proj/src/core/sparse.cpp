#include "core/sparse.hpp"

#include <cmath>

namespace qgrom {

SparseSystem::SparseSystem(GridPtr grid)
    : grid_(std::move(grid)),
      center_(Eigen::VectorXd::Zero(grid_->cell_count())),
      east_(Eigen::VectorXd::Zero(grid_->cell_count())),
      west_(Eigen::VectorXd::Zero(grid_->cell_count())),
      north_(Eigen::VectorXd::Zero(grid_->cell_count())),
      south_(Eigen::VectorXd::Zero(grid_->cell_count())),
      rhs_(Eigen::VectorXd::Zero(grid_->cell_count())) {}

void SparseSystem::apply(const Eigen::VectorXd& x, Eigen::VectorXd& y) const {
  const int nx = grid_->nx();
  const int ny = grid_->ny();
  y.resize(x.size());
  for (int j = 0; j < ny; ++j) {
    const Eigen::Index row = static_cast<Eigen::Index>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const Eigen::Index k = row + i;
      double v = center_[k] * x[k];
      if (i + 1 < nx) v += east_[k] * x[k + 1];
      if (i > 0) v += west_[k] * x[k - 1];
      if (j + 1 < ny) v += north_[k] * x[k + nx];
      if (j > 0) v += south_[k] * x[k - nx];
      y[k] = v;
    }
  }
}

Eigen::MatrixXd SparseSystem::to_dense() const {
  const int nx = grid_->nx();
  const int ny = grid_->ny();
  const Eigen::Index n = dimension();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Eigen::Index k = grid_->cell_index(i, j);
      A(k, k) = center_[k];
      if (i + 1 < nx) A(k, k + 1) = east_[k];
      if (i > 0) A(k, k - 1) = west_[k];
      if (j + 1 < ny) A(k, k + nx) = north_[k];
      if (j > 0) A(k, k - nx) = south_[k];
    }
  return A;
}

void SparseSystem::check_valid() const {
  if (!center_.allFinite() || !east_.allFinite() || !west_.allFinite() ||
      !north_.allFinite() || !south_.allFinite() || !rhs_.allFinite())
    throw InvalidArgument("sparse system: non-finite stencil or rhs entry");
  for (Eigen::Index k = 0; k < center_.size(); ++k)
    if (center_[k] == 0.0)
      throw InvalidArgument("sparse system: zero center coefficient at row " +
                            std::to_string(k));
}

// Restarted GMRES with a Jacobi right preconditioner. Right preconditioning
// keeps the monitored residual the true residual of the original system.
SolveReport sparse_solve(const SparseSystem& system,
                         const SolverOptions& opts) {
  if (!(opts.tol > 0.0))
    throw InvalidArgument("sparse_solve: tolerance must be positive");
  system.check_valid();

  const Eigen::Index n = system.dimension();
  const Eigen::VectorXd& b = system.rhs();
  const int max_iter =
      opts.max_iter > 0 ? opts.max_iter : static_cast<int>(10 * n);

  SolveReport report;
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    report.x = Eigen::VectorXd::Zero(n);
    return report;
  }

  Eigen::VectorXd inv_diag(n);
  for (Eigen::Index k = 0; k < n; ++k) inv_diag[k] = 1.0 / system.center()[k];

  if (opts.initial_guess && opts.initial_guess->size() != n)
    throw InvalidArgument("sparse_solve: initial guess size mismatch");
  Eigen::VectorXd x = opts.initial_guess ? *opts.initial_guess
                                         : Eigen::VectorXd::Zero(n);

  const int restart = static_cast<int>(std::min<Eigen::Index>(n, 60));
  Eigen::MatrixXd V(n, restart + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(restart + 1, restart);
  Eigen::VectorXd cs(restart), sn(restart), g(restart + 1);
  Eigen::VectorXd r(n), w(n), tmp(n);

  system.apply(x, r);
  r = b - r;
  double rnorm = r.norm();
  report.residual_history.push_back(rnorm / bnorm);
  if (rnorm <= opts.tol * bnorm) {
    report.x = std::move(x);
    return report;
  }

  int iter = 0;
  while (true) {
    V.col(0) = r / rnorm;
    g.setZero();
    g[0] = rnorm;
    int j = 0;
    for (; j < restart && iter < max_iter; ++j) {
      ++iter;
      tmp = inv_diag.cwiseProduct(V.col(j));
      system.apply(tmp, w);
      for (int i = 0; i <= j; ++i) {
        H(i, j) = w.dot(V.col(i));
        w -= H(i, j) * V.col(i);
      }
      H(j + 1, j) = w.norm();
      const bool lucky = H(j + 1, j) == 0.0;
      if (!lucky) V.col(j + 1) = w / H(j + 1, j);

      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      const double denom = std::hypot(H(j, j), H(j + 1, j));
      if (denom == 0.0)
        throw NumericError("sparse_solve: GMRES breakdown at iter " +
                           std::to_string(iter) + ", relative residual " +
                           format_full(std::abs(g[j]) / bnorm));
      cs[j] = H(j, j) / denom;
      sn[j] = H(j + 1, j) / denom;
      H(j, j) = denom;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];

      const double res = std::abs(g[j + 1]);
      report.residual_history.push_back(res / bnorm);
      if (res <= opts.tol * bnorm || lucky) {
        ++j;
        break;
      }
    }

    // x += Minv * V_j * y with H y = g solved by back substitution
    Eigen::VectorXd y(j);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int k2 = i + 1; k2 < j; ++k2) s -= H(i, k2) * y[k2];
      y[i] = s / H(i, i);
    }
    tmp = V.leftCols(j) * y;
    x += inv_diag.cwiseProduct(tmp);

    system.apply(x, r);
    r = b - r;
    rnorm = r.norm();
    if (!std::isfinite(rnorm))
      throw NumericError("sparse_solve: non-finite residual at iter " +
                         std::to_string(iter));
    if (rnorm <= opts.tol * bnorm) {
      report.iterations = iter;
      report.x = std::move(x);
      return report;
    }
    if (iter >= max_iter)
      throw NumericError("sparse_solve: no convergence in " +
                         std::to_string(max_iter) +
                         " iterations, relative residual " +
                         format_full(rnorm / bnorm));
  }
}

}  // namespace qgrom
