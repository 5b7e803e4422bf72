#include "core/reduction.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <cstring>
#include <fstream>

#include "core/common.hpp"

namespace qgrom {

void SvdTriple::check_invariants(double tol) const {
  const Eigen::Index r = rank();
  if (U.cols() != r || Vt.rows() != r)
    throw InvalidArgument("svd triple: inconsistent rank");
  for (Eigen::Index i = 1; i < r; ++i)
    if (sigma[i] > sigma[i - 1] + tol)
      throw InvalidArgument("svd triple: singular values not sorted");
  const double utu = (U.transpose() * U - Eigen::MatrixXd::Identity(r, r))
                         .cwiseAbs()
                         .maxCoeff();
  const double vvt = (Vt * Vt.transpose() - Eigen::MatrixXd::Identity(r, r))
                         .cwiseAbs()
                         .maxCoeff();
  if (utu > tol) throw NumericError("svd triple: U columns not orthonormal");
  if (vvt > tol) throw NumericError("svd triple: V rows not orthonormal");
}

namespace {

// Makes each mode's largest-magnitude entry positive (lowest index wins ties)
// and flips the matching row of Vt, so decompositions are reproducible up to
// the inherent SVD sign ambiguity.
void normalize_signs(Eigen::MatrixXd& U, Eigen::MatrixXd& Vt) {
  for (Eigen::Index c = 0; c < U.cols(); ++c) {
    Eigen::Index imax = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < U.rows(); ++r) {
      const double a = std::abs(U(r, c));
      if (a > best) {
        best = a;
        imax = r;
      }
    }
    if (U(imax, c) < 0.0) {
      U.col(c) = -U.col(c);
      if (c < Vt.rows()) Vt.row(c) = -Vt.row(c);
    }
  }
}

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& A) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  return qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
}

}  // namespace

SvdTriple deterministic_pod(const Eigen::MatrixXd& S) {
  if (S.size() == 0) throw InvalidArgument("pod: empty snapshot matrix");
  if (!S.allFinite()) throw InvalidArgument("pod: non-finite entries");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(S, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdTriple out;
  out.U = svd.matrixU();
  out.sigma = svd.singularValues();
  out.Vt = svd.matrixV().transpose();
  normalize_signs(out.U, out.Vt);
  return out;
}

SvdTriple deterministic_pod(const SnapshotMatrix& S) {
  return deterministic_pod(S.data);
}

SvdTriple rpod(const Eigen::MatrixXd& S, const RpodConfig& cfg) {
  if (S.size() == 0) throw InvalidArgument("rpod: empty snapshot matrix");
  if (!S.allFinite()) throw InvalidArgument("rpod: non-finite entries");
  if (cfg.rank < 1) throw InvalidArgument("rpod: rank must be at least 1");
  if (cfg.oversample < 0) throw InvalidArgument("rpod: oversample must be >= 0");
  if (cfg.power_iterations < 1)
    throw InvalidArgument("rpod: power iterations must be >= 1");
  const Eigen::Index k = std::min(S.rows(), S.cols());
  const Eigen::Index ell = static_cast<Eigen::Index>(cfg.rank) + cfg.oversample;
  if (ell > k)
    throw InvalidArgument("rpod: rank + oversample (" + std::to_string(ell) +
                          ") exceeds min(N_C, N^s) = " + std::to_string(k));

  // Gaussian sketch, mean 0 variance 1, column-major fill order pinned by Rng.
  Rng rng(cfg.seed);
  Eigen::MatrixXd sketch(S.cols(), ell);
  for (Eigen::Index c = 0; c < ell; ++c)
    for (Eigen::Index r = 0; r < S.cols(); ++r)
      sketch(r, c) = rng.next_gaussian();

  Eigen::MatrixXd P = S * sketch;
  // (S S^T)^q P with re-orthonormalization between applications; identical to
  // the plain power product in exact arithmetic but stable for clustered
  // spectra.
  for (int it = 0; it < cfg.power_iterations; ++it) {
    Eigen::MatrixXd Q = thin_q(P);
    Eigen::MatrixXd Z = S.transpose() * Q;
    Q = thin_q(Z);
    P = S * Q;
  }
  const Eigen::MatrixXd Q = thin_q(P);
  const Eigen::MatrixXd T = Q.transpose() * S;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(T, Eigen::ComputeThinU | Eigen::ComputeThinV);

  SvdTriple out;
  out.U = Q * svd.matrixU();
  out.sigma = svd.singularValues();
  out.Vt = svd.matrixV().transpose();
  normalize_signs(out.U, out.Vt);
  return out;
}

SvdTriple rpod(const SnapshotMatrix& S, const RpodConfig& cfg) {
  return rpod(S.data, cfg);
}

int energy_rank(const Eigen::VectorXd& sigma, double threshold) {
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw InvalidArgument("energy_rank: threshold must lie in (0,1)");
  if (sigma.size() == 0) throw InvalidArgument("energy_rank: empty spectrum");
  const double total = sigma.sum();
  if (total <= 0.0)
    throw InvalidArgument("energy_rank: all-zero singular values");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    acc += sigma[i];
    if (acc / total >= threshold) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(sigma.size());
}

EnergyReport energy_retained(const Eigen::VectorXd& sigma, int n) {
  if (n < 0 || n > sigma.size())
    throw InvalidArgument("energy_retained: n out of range");
  EnergyReport rep;
  const double total = sigma.sum();
  const double total2 = sigma.squaredNorm();
  if (total > 0.0) rep.value_fraction = sigma.head(n).sum() / total;
  if (total2 > 0.0) rep.squared_fraction = sigma.head(n).squaredNorm() / total2;
  return rep;
}

ReducedBasis truncate_basis(const SvdTriple& svd, Variable variable,
                            int n_modes, const BasisProvenance& prov,
                            std::uint64_t fingerprint) {
  if (n_modes < 1 || n_modes > svd.rank())
    throw InvalidArgument("truncate_basis: mode count out of range");
  ReducedBasis b;
  b.variable = variable;
  b.modes = svd.U.leftCols(n_modes);
  b.sigma = svd.sigma.head(n_modes);
  b.provenance = prov;
  b.fingerprint = fingerprint;
  return b;
}

CoefficientTable modal_coefficients(const ReducedBasis& basis,
                                    const SnapshotMatrix& S) {
  if (basis.modes.rows() != S.data.rows())
    throw InvalidArgument("modal_coefficients: basis/matrix size mismatch");
  CoefficientTable t;
  t.variable = basis.variable;
  t.coeffs = basis.modes.transpose() * S.data;
  t.n_times = S.n_times();
  return t;
}

double projection_error(const ReducedBasis& basis, const Eigen::MatrixXd& S) {
  if (basis.modes.rows() != S.rows())
    throw InvalidArgument("projection_error: basis/matrix size mismatch");
  const double snorm = S.norm();
  if (snorm == 0.0)
    throw InvalidArgument("projection_error: zero snapshot matrix");
  const Eigen::MatrixXd residual = S - basis.modes * (basis.modes.transpose() * S);
  return residual.norm() / snorm;
}

double max_principal_angle(const Eigen::MatrixXd& Ua, const Eigen::MatrixXd& Ub) {
  if (Ua.rows() != Ub.rows() || Ua.cols() != Ub.cols())
    throw InvalidArgument("max_principal_angle: dimension mismatch");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Ua.transpose() * Ub);
  const double smin =
      std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  return std::acos(smin);
}

namespace {
constexpr char kBasisMagic[8] = {'Q', 'G', 'B', 'A', 'S', 'I', 'S', '1'};
}

void write_basis(const ReducedBasis& basis, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  Fnv1a hash;
  auto put = [&](const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    hash.update(p, n);
  };
  auto put_u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto put_u64 = [&](std::uint64_t v) { put(&v, 8); };

  put(kBasisMagic, 8);
  put_u32(static_cast<std::uint32_t>(basis.variable));
  put_u32(basis.provenance.randomized ? 1u : 0u);
  put_u64(basis.fingerprint);
  put_u64(static_cast<std::uint64_t>(basis.modes.rows()));
  put_u32(static_cast<std::uint32_t>(basis.modes.cols()));
  put_u32(static_cast<std::uint32_t>(basis.provenance.oversample));
  put_u32(static_cast<std::uint32_t>(basis.provenance.power_iterations));
  put_u32(0);  // reserved
  put_u64(basis.provenance.seed);
  put(basis.sigma.data(), basis.sigma.size() * sizeof(double));
  put(basis.modes.data(),
      static_cast<std::size_t>(basis.modes.size()) * sizeof(double));
  const std::uint64_t digest = hash.digest();
  os.write(reinterpret_cast<const char*>(&digest), 8);
  os.flush();
  if (!os) throw IoError("failed writing " + path);
}

ReducedBasis read_basis(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  Fnv1a hash;
  auto get = [&](void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n))
      throw FormatError(path + ": truncated basis archive");
    hash.update(p, n);
  };
  auto get_u32 = [&] {
    std::uint32_t v;
    get(&v, 4);
    return v;
  };
  auto get_u64 = [&] {
    std::uint64_t v;
    get(&v, 8);
    return v;
  };

  char magic[8];
  get(magic, 8);
  if (std::memcmp(magic, kBasisMagic, 8) != 0)
    throw FormatError(path + ": bad magic (not a QGBASIS1 file)");
  ReducedBasis b;
  const auto var = get_u32();
  if (var >= kNumVariables) throw FormatError(path + ": invalid variable tag");
  b.variable = static_cast<Variable>(var);
  b.provenance.randomized = get_u32() != 0;
  b.fingerprint = get_u64();
  const auto rows = get_u64();
  const auto cols = get_u32();
  b.provenance.oversample = static_cast<int>(get_u32());
  b.provenance.power_iterations = static_cast<int>(get_u32());
  (void)get_u32();
  b.provenance.seed = get_u64();
  b.sigma.resize(cols);
  get(b.sigma.data(), cols * sizeof(double));
  b.modes.resize(static_cast<Eigen::Index>(rows), cols);
  get(b.modes.data(), static_cast<std::size_t>(b.modes.size()) * sizeof(double));
  const std::uint64_t expected = hash.digest();
  std::uint64_t stored = 0;
  is.read(reinterpret_cast<char*>(&stored), 8);
  if (is.gcount() != 8) throw FormatError(path + ": missing checksum");
  if (stored != expected) throw FormatError(path + ": checksum mismatch");
  return b;
}

void write_spectrum_csv(const Eigen::VectorXd& sigma, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "index,sigma\n";
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    os << (i + 1) << ',' << format_full(sigma[i]) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace qgrom
