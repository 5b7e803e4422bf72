#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "core/grid.hpp"

namespace qgrom {

enum class Variable : int { q1 = 0, q2 = 1, psi1 = 2, psi2 = 3 };

constexpr int kNumVariables = 4;

const char* variable_name(Variable v);
Variable variable_from_name(const std::string& name);

/// Sampled trajectory of one simulation: N^t instants of the four fields at
/// one parameter point.
struct SnapshotSeries {
  Eigen::VectorXd mu;           ///< parameter vector (delta, sigma, Fr)
  std::vector<double> times;    ///< strictly increasing sample instants
  std::vector<Field> q1, q2, psi1, psi2;

  const std::vector<Field>& fields(Variable v) const;
  std::vector<Field>& fields(Variable v);
  int n_times() const { return static_cast<int>(times.size()); }
  GridPtr grid() const;
  void check_consistent() const;
};

/// Arithmetic mean over the sampled instants, per cell.
Field time_average(const SnapshotSeries& series, Variable v);

/// Snapshot minus its own-parameter time average, per instant.
std::vector<Field> fluctuations(const SnapshotSeries& series, Variable v);

/// N_C x N^s fluctuation matrix for one variable over a parameter sweep.
/// Column j holds the fluctuation at (mu_k, t_p) with j = k*N^t + p
/// (parameter-major, time-minor, zero-based).
struct SnapshotMatrix {
  Variable variable = Variable::q1;
  GridPtr grid;
  Eigen::MatrixXd data;       ///< N_C x N^s fluctuations
  Eigen::MatrixXd parameters; ///< M x d sample table
  Eigen::MatrixXd averages;   ///< N_C x M per-sample time averages
  std::vector<double> times;  ///< shared N^t sample instants
  std::uint64_t fingerprint = 0;

  Eigen::Index n_cells() const { return data.rows(); }
  Eigen::Index n_columns() const { return data.cols(); }
  int n_samples() const { return static_cast<int>(parameters.rows()); }
  int dim() const { return static_cast<int>(parameters.cols()); }
  int n_times() const { return static_cast<int>(times.size()); }

  Eigen::Index column_index(int k, int p) const;
  /// Inverse of column_index.
  std::pair<int, int> split_index(Eigen::Index j) const;

  Field column_field(Eigen::Index j) const;
  Field average_field(int k) const;
};

/// Stacks the per-sample fluctuations into the sweep matrix. All series must
/// share the grid, the sample instants, and the parameter dimension.
SnapshotMatrix assemble_matrix(const std::vector<SnapshotSeries>& all,
                               Variable v, std::uint64_t fingerprint = 0);

/// Little-endian binary archive with magic "QGSNAP01" and a trailing FNV-1a
/// checksum; round trips are bit-exact.
void write_snapshots(const SnapshotMatrix& m, const std::string& path);
SnapshotMatrix read_snapshots(const std::string& path);

}  // namespace qgrom
