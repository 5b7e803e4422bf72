#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>

#include "core/common.hpp"

namespace qgrom {

/// Uniform rectangular cell layout over [x0,xf] x [y_lo,y_hi].
///
/// Cells are stored row-major with the x index fastest: cell (i,j) lives at
/// linear index j*nx + i and has its center at
/// (x0 + (i+1/2)hx, y_lo + (j+1/2)hy). This ordering fixes the on-disk layout
/// of snapshot columns, so it must never change.
class StructuredGrid {
 public:
  StructuredGrid(int nx, int ny, double x0, double xf, double y_lo,
                 double y_hi);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double x0() const { return x0_; }
  double xf() const { return xf_; }
  double y_lo() const { return y_lo_; }
  double y_hi() const { return y_hi_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  /// Total cell count nx*ny.
  Eigen::Index cell_count() const {
    return static_cast<Eigen::Index>(nx_) * ny_;
  }
  double cell_area() const { return hx_ * hy_; }

  Eigen::Index cell_index(int i, int j) const {
    return static_cast<Eigen::Index>(j) * nx_ + i;
  }
  double center_x(int i) const { return x0_ + (i + 0.5) * hx_; }
  double center_y(int j) const { return y_lo_ + (j + 0.5) * hy_; }

  bool same_geometry(const StructuredGrid& other) const;

 private:
  int nx_, ny_;
  double x0_, xf_, y_lo_, y_hi_;
  double hx_, hy_;
};

using GridPtr = std::shared_ptr<const StructuredGrid>;

GridPtr build_grid(int nx, int ny, double x0, double xf, double y_lo,
                   double y_hi);

/// One scalar cell-average value per cell of a StructuredGrid.
class Field {
 public:
  Field() = default;
  explicit Field(GridPtr grid);
  Field(GridPtr grid, Eigen::VectorXd values);

  const StructuredGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  double operator()(int i, int j) const {
    return values_[grid_->cell_index(i, j)];
  }
  double& operator()(int i, int j) {
    return values_[grid_->cell_index(i, j)];
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  GridPtr grid_;
  Eigen::VectorXd values_;
};

/// Samples f at every cell center. Throws NumericError naming the first cell
/// at which f is non-finite.
Field eval_on_cells(const GridPtr& grid,
                    const std::function<double(double, double)>& f);

/// Cell-area-weighted discrete L2 norm: sqrt(sum v_k^2 hx hy).
double l2_norm(const Field& field);

/// CSV export, header "x,y,value", one row per cell in storage order,
/// full-precision reals.
void write_field_csv(const Field& field, const std::string& path);

}  // namespace qgrom
