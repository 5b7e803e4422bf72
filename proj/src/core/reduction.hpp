#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "core/snapshots.hpp"

namespace qgrom {

/// Economy singular value decomposition S = U diag(sigma) Vt with orthonormal
/// U columns and Vt rows, sigma non-increasing. Mode signs are normalized so
/// that each U column's largest-magnitude entry is positive.
struct SvdTriple {
  Eigen::MatrixXd U;      ///< N_C x r
  Eigen::VectorXd sigma;  ///< r, non-increasing
  Eigen::MatrixXd Vt;     ///< r x N^s

  Eigen::Index rank() const { return sigma.size(); }
  void check_invariants(double tol = 1e-10) const;
};

struct RpodConfig {
  int rank = 10;
  int oversample = 75;       ///< p
  int power_iterations = 1;  ///< q, at least 1
  std::uint64_t seed = 0;
};

/// Provenance of a reduced basis.
struct BasisProvenance {
  bool randomized = false;
  int oversample = 0;
  int power_iterations = 0;
  std::uint64_t seed = 0;
};

/// Leading modes retained for one variable.
struct ReducedBasis {
  Variable variable = Variable::q1;
  Eigen::MatrixXd modes;  ///< N_C x N_r, orthonormal columns
  Eigen::VectorXd sigma;  ///< retained singular values
  BasisProvenance provenance;
  std::uint64_t fingerprint = 0;

  int n_modes() const { return static_cast<int>(modes.cols()); }
};

/// Full economy SVD of the snapshot matrix (K = min(N_C, N^s) triplets).
SvdTriple deterministic_pod(const SnapshotMatrix& S);
SvdTriple deterministic_pod(const Eigen::MatrixXd& S);

/// Randomized POD: Gaussian sketch of rank+p columns, q subspace iterations
/// with QR re-orthonormalization between applications of S and S^T, then the
/// small SVD of the projected matrix. Deterministic for a given seed.
SvdTriple rpod(const SnapshotMatrix& S, const RpodConfig& cfg);
SvdTriple rpod(const Eigen::MatrixXd& S, const RpodConfig& cfg);

/// Smallest N with cumulative singular-value fraction >= threshold.
int energy_rank(const Eigen::VectorXd& sigma, double threshold);

/// Fraction of the singular-value sum captured by the first n values, plus
/// the squared-sum fraction as a secondary diagnostic.
struct EnergyReport {
  double value_fraction = 0.0;
  double squared_fraction = 0.0;
};
EnergyReport energy_retained(const Eigen::VectorXd& sigma, int n);

ReducedBasis truncate_basis(const SvdTriple& svd, Variable variable, int n_modes,
                            const BasisProvenance& prov,
                            std::uint64_t fingerprint = 0);

/// C = modes^T S (one row per mode, snapshot-matrix column order).
struct CoefficientTable {
  Variable variable = Variable::q1;
  Eigen::MatrixXd coeffs;  ///< N_r x N^s
  int n_times = 0;

  Eigen::Index column_index(int k, int p) const {
    return static_cast<Eigen::Index>(k) * n_times + p;
  }
};

CoefficientTable modal_coefficients(const ReducedBasis& basis,
                                    const SnapshotMatrix& S);

/// || S - modes modes^T S ||_F / || S ||_F, in [0, 1].
double projection_error(const ReducedBasis& basis, const Eigen::MatrixXd& S);

/// Largest principal angle (radians) between the column spaces of two
/// orthonormal-column matrices of equal width.
double max_principal_angle(const Eigen::MatrixXd& Ua, const Eigen::MatrixXd& Ub);

/// Basis archive, magic "QGBASIS1", same conventions as snapshot files.
void write_basis(const ReducedBasis& basis, const std::string& path);
ReducedBasis read_basis(const std::string& path);

/// CSV dump "index,sigma" of a spectrum for plotting.
void write_spectrum_csv(const Eigen::VectorXd& sigma, const std::string& path);

}  // namespace qgrom
