#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "core/lstm.hpp"
#include "core/reduction.hpp"
#include "core/solver.hpp"

namespace qgrom {

/// Cartesian parameter sweep: sampling lists for (delta, sigma, Fr) plus the
/// shared grid, time stepping and solver configuration. Sample k enumerates
/// the product delta-major, Fr-minor; mu_k = (delta, sigma, Fr).
struct SweepPlan {
  std::vector<double> deltas{0.45};
  std::vector<double> sigmas{0.008};
  std::vector<double> frs{0.1};
  double Re = 450.0;
  double Ro = 0.001;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  ForcingSpec forcing;

  int nx = 64, ny = 128;
  double x0 = 0.0, xf = 1.0, y_lo = -1.0, y_hi = 1.0;
  double dt = 2.5e-5;
  SnapshotWindow window{10.0, 50.0, 0.1};
  double solver_tol = 1e-8;
  int solver_max_iter = 0;

  int n_samples() const;
  static constexpr int dim = 3;
  Eigen::VectorXd mu_at(int k) const;
  PhysParams params_for(const Eigen::VectorXd& mu) const;
  GridPtr make_grid() const;
  SolverOptions solver_options() const;
  void validate() const;
  /// Hash of the plan and solver configuration; artifacts carry it so stale
  /// mixes of files are rejected.
  std::uint64_t fingerprint() const;
};

struct OfflineConfig {
  bool use_deterministic_pod = false;
  RpodConfig rpod;
  int n_modes = 10;
  int lookback = 3;
  LstmHyper hyper_q = LstmHyper::preset_q();
  LstmHyper hyper_psi = LstmHyper::preset_psi();
  std::uint64_t lstm_seed = 1;
  std::string out_dir;  ///< empty: keep everything in memory only
};

/// Everything the online phase needs: per-variable snapshot matrices (which
/// carry the per-sample time averages), reduced bases, and trained models.
struct RomArtifacts {
  std::uint64_t fingerprint = 0;
  SweepPlan plan;
  std::array<SnapshotMatrix, kNumVariables> snapshots;
  std::array<ReducedBasis, kNumVariables> bases;
  std::array<LstmModel, kNumVariables> models;

  const SnapshotMatrix& snaps(Variable v) const {
    return snapshots[static_cast<int>(v)];
  }
  const ReducedBasis& basis(Variable v) const {
    return bases[static_cast<int>(v)];
  }
  const LstmModel& model(Variable v) const {
    return models[static_cast<int>(v)];
  }
  CoefficientTable coefficients(Variable v) const;
};

/// Runs one full-order simulation of the plan at parameter mu, collecting
/// snapshots inside window.
SnapshotSeries run_fom(const SweepPlan& plan, const Eigen::VectorXd& mu,
                       const SnapshotWindow& window, std::ostream* log = nullptr,
                       RunStats* stats = nullptr);

/// Offline phase: sweep, snapshot assembly, reduction, coefficient
/// extraction, model training; persists archives and rom-manifest.json when
/// out_dir is set. jobs > 1 runs the sweep samples on worker threads.
RomArtifacts offline(const SweepPlan& plan, const OfflineConfig& cfg,
                     std::ostream* log = nullptr, int jobs = 1);

/// Index of the sample closest to mu in Euclidean distance on raw
/// coordinates; ties resolve to the lowest index. Optionally scales each
/// coordinate by its sample range first.
int nearest_sample(const Eigen::VectorXd& mu, const Eigen::MatrixXd& samples,
                   bool scale_by_range = false);

enum class CoefficientSource {
  lstm,            ///< autoregressive rollout (the online path)
  training_table,  ///< coefficients projected from stored snapshots
};

/// Reduced-order fields at the requested times: nearest-sample time average
/// plus modes times coefficients. The LSTM rollout is seeded with the last
/// lookback coefficient rows of the nearest training sample.
std::vector<Field> reconstruct(const RomArtifacts& artifacts, Variable v,
                               const Eigen::VectorXd& mu,
                               const std::vector<double>& horizon_times,
                               CoefficientSource source = CoefficientSource::lstm);

/// || fom - rom ||_L2 / || fom ||_L2. Throws InvalidArgument when the
/// reference norm is zero.
double relative_l2_error(const Field& fom_mean, const Field& rom_mean);

/// Relative L2 errors of the time-averaged ROM fields against a full-order
/// reference over the reference's sample instants.
struct ErrorReport {
  Eigen::VectorXd mu;
  std::array<double, kNumVariables> eps{};
  std::array<bool, kNumVariables> undefined{};  ///< zero reference norm
};

ErrorReport evaluate(const RomArtifacts& artifacts, const Eigen::VectorXd& mu,
                     const SnapshotSeries& fom_reference);

/// Relative Frobenius error of the table-coefficient reconstruction of one
/// training sample's fluctuations; equals that block's projection error.
double consistency_error(const RomArtifacts& artifacts, Variable v,
                         int sample_index);

struct BenchmarkPhase {
  std::string phase;
  double seconds = 0.0;
  double speedup = 1.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkPhase> phases;
};

/// Times one FOM run, deterministic POD vs rPOD on the sweep matrix (or a
/// synthetic matrix of the given shape), and one online reconstruction.
BenchmarkReport benchmark(const RomArtifacts& artifacts,
                          const std::vector<double>& horizon_times,
                          const Eigen::MatrixXd* pod_matrix = nullptr,
                          std::ostream* log = nullptr);

void write_benchmark_csv(const BenchmarkReport& report, const std::string& path);

/// Error-report CSV: mu components then eps_q1,eps_q2,eps_psi1,eps_psi2.
void write_error_csv(const std::vector<ErrorReport>& reports,
                     const std::string& path);

/// rom-manifest.json: plan, settings, artifact file names, fingerprint.
void write_manifest(const RomArtifacts& artifacts, const OfflineConfig& cfg,
                    const std::string& dir);
RomArtifacts load_artifacts(const std::string& manifest_path);

}  // namespace qgrom
