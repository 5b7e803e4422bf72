#include "core/grid.hpp"

#include <cmath>
#include <fstream>

namespace qgrom {

StructuredGrid::StructuredGrid(int nx, int ny, double x0, double xf,
                               double y_lo, double y_hi)
    : nx_(nx), ny_(ny), x0_(x0), xf_(xf), y_lo_(y_lo), y_hi_(y_hi) {
  if (nx < 2 || ny < 2)
    throw InvalidArgument("grid: nx and ny must be at least 2, got nx=" +
                          std::to_string(nx) + " ny=" + std::to_string(ny));
  if (!(xf > x0) || !(y_hi > y_lo))
    throw InvalidArgument("grid: domain extents must be positive");
  if (!std::isfinite(x0) || !std::isfinite(xf) || !std::isfinite(y_lo) ||
      !std::isfinite(y_hi))
    throw InvalidArgument("grid: domain bounds must be finite");
  hx_ = (xf - x0) / nx;
  hy_ = (y_hi - y_lo) / ny;
}

bool StructuredGrid::same_geometry(const StructuredGrid& other) const {
  return nx_ == other.nx_ && ny_ == other.ny_ && x0_ == other.x0_ &&
         xf_ == other.xf_ && y_lo_ == other.y_lo_ && y_hi_ == other.y_hi_;
}

GridPtr build_grid(int nx, int ny, double x0, double xf, double y_lo,
                   double y_hi) {
  return std::make_shared<const StructuredGrid>(nx, ny, x0, xf, y_lo, y_hi);
}

Field::Field(GridPtr grid)
    : grid_(std::move(grid)),
      values_(Eigen::VectorXd::Zero(grid_->cell_count())) {}

Field::Field(GridPtr grid, Eigen::VectorXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_->cell_count())
    throw InvalidArgument("field: value count " +
                          std::to_string(values_.size()) +
                          " does not match cell count " +
                          std::to_string(grid_->cell_count()));
}

Field eval_on_cells(const GridPtr& grid,
                    const std::function<double(double, double)>& f) {
  Field out(grid);
  for (int j = 0; j < grid->ny(); ++j) {
    const double y = grid->center_y(j);
    for (int i = 0; i < grid->nx(); ++i) {
      const double v = f(grid->center_x(i), y);
      if (!std::isfinite(v))
        throw NumericError("eval_on_cells: non-finite value at cell (" +
                           std::to_string(i) + "," + std::to_string(j) + ")");
      out(i, j) = v;
    }
  }
  return out;
}

double l2_norm(const Field& field) {
  return std::sqrt(field.values().squaredNorm() * field.grid().cell_area());
}

void write_field_csv(const Field& field, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "x,y,value\n";
  const auto& g = field.grid();
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      os << format_full(g.center_x(i)) << ',' << format_full(g.center_y(j))
         << ',' << format_full(field(i, j)) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace qgrom
