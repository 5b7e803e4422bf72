#include "core/snapshots.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace qgrom {

static_assert(std::endian::native == std::endian::little,
              "snapshot archives are little-endian; big-endian hosts are unsupported");

namespace {
constexpr char kMagic[8] = {'Q', 'G', 'S', 'N', 'A', 'P', '0', '1'};
}

const char* variable_name(Variable v) {
  switch (v) {
    case Variable::q1: return "q1";
    case Variable::q2: return "q2";
    case Variable::psi1: return "psi1";
    case Variable::psi2: return "psi2";
  }
  return "?";
}

Variable variable_from_name(const std::string& name) {
  for (int i = 0; i < kNumVariables; ++i)
    if (name == variable_name(static_cast<Variable>(i)))
      return static_cast<Variable>(i);
  throw InvalidArgument("unknown variable '" + name +
                        "' (expected q1, q2, psi1 or psi2)");
}

const std::vector<Field>& SnapshotSeries::fields(Variable v) const {
  switch (v) {
    case Variable::q1: return q1;
    case Variable::q2: return q2;
    case Variable::psi1: return psi1;
    case Variable::psi2: return psi2;
  }
  throw InvalidArgument("bad variable tag");
}

std::vector<Field>& SnapshotSeries::fields(Variable v) {
  return const_cast<std::vector<Field>&>(
      static_cast<const SnapshotSeries*>(this)->fields(v));
}

GridPtr SnapshotSeries::grid() const {
  if (q1.empty()) throw InvalidArgument("empty snapshot series");
  return q1.front().grid_ptr();
}

void SnapshotSeries::check_consistent() const {
  const auto n = times.size();
  if (n == 0) throw InvalidArgument("snapshot series has no instants");
  for (std::size_t p = 1; p < n; ++p)
    if (!(times[p] > times[p - 1]))
      throw InvalidArgument("snapshot times must be strictly increasing");
  for (int v = 0; v < kNumVariables; ++v) {
    const auto& f = fields(static_cast<Variable>(v));
    if (f.size() != n)
      throw InvalidArgument("snapshot series: field count mismatch for " +
                            std::string(variable_name(static_cast<Variable>(v))));
    for (const auto& fld : f)
      if (!fld.grid().same_geometry(*grid()))
        throw InvalidArgument("snapshot series: fields on different grids");
  }
}

Field time_average(const SnapshotSeries& series, Variable v) {
  const auto& fs = series.fields(v);
  if (fs.empty()) throw InvalidArgument("time_average: empty series");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(fs.front().values().size());
  for (const auto& f : fs) acc += f.values();
  acc /= static_cast<double>(fs.size());
  return Field(fs.front().grid_ptr(), std::move(acc));
}

std::vector<Field> fluctuations(const SnapshotSeries& series, Variable v) {
  const Field avg = time_average(series, v);
  const auto& fs = series.fields(v);
  std::vector<Field> out;
  out.reserve(fs.size());
  for (const auto& f : fs)
    out.emplace_back(f.grid_ptr(), f.values() - avg.values());
  return out;
}

Eigen::Index SnapshotMatrix::column_index(int k, int p) const {
  if (k < 0 || k >= n_samples() || p < 0 || p >= n_times())
    throw InvalidArgument("snapshot matrix: (sample,time) index out of range");
  return static_cast<Eigen::Index>(k) * n_times() + p;
}

std::pair<int, int> SnapshotMatrix::split_index(Eigen::Index j) const {
  if (j < 0 || j >= n_columns())
    throw InvalidArgument("snapshot matrix: column index out of range");
  const int nt = n_times();
  return {static_cast<int>(j / nt), static_cast<int>(j % nt)};
}

Field SnapshotMatrix::column_field(Eigen::Index j) const {
  if (j < 0 || j >= n_columns())
    throw InvalidArgument("snapshot matrix: column index out of range");
  return Field(grid, data.col(j));
}

Field SnapshotMatrix::average_field(int k) const {
  if (k < 0 || k >= n_samples())
    throw InvalidArgument("snapshot matrix: sample index out of range");
  return Field(grid, averages.col(k));
}

SnapshotMatrix assemble_matrix(const std::vector<SnapshotSeries>& all,
                               Variable v, std::uint64_t fingerprint) {
  if (all.empty()) throw InvalidArgument("assemble_matrix: no series");
  for (const auto& s : all) s.check_consistent();

  const auto& first = all.front();
  const int nt = first.n_times();
  const Eigen::Index d = first.mu.size();
  const GridPtr grid = first.grid();
  for (const auto& s : all) {
    if (s.n_times() != nt)
      throw InvalidArgument("assemble_matrix: snapshot counts differ across samples");
    if (s.mu.size() != d)
      throw InvalidArgument("assemble_matrix: parameter dimensions differ");
    if (!s.grid()->same_geometry(*grid))
      throw InvalidArgument("assemble_matrix: grids differ across samples");
    for (int p = 0; p < nt; ++p)
      if (std::abs(s.times[p] - first.times[p]) >
          1e-12 * std::max(1.0, std::abs(first.times[p])))
        throw InvalidArgument("assemble_matrix: sample instants differ across samples");
  }

  const int m = static_cast<int>(all.size());
  SnapshotMatrix out;
  out.variable = v;
  out.grid = grid;
  out.times = first.times;
  out.fingerprint = fingerprint;
  out.parameters.resize(m, d);
  out.averages.resize(grid->cell_count(), m);
  out.data.resize(grid->cell_count(), static_cast<Eigen::Index>(m) * nt);
  for (int k = 0; k < m; ++k) {
    out.parameters.row(k) = all[k].mu.transpose();
    const Field avg = time_average(all[k], v);
    out.averages.col(k) = avg.values();
    const auto& fs = all[k].fields(v);
    for (int p = 0; p < nt; ++p)
      out.data.col(static_cast<Eigen::Index>(k) * nt + p) =
          fs[p].values() - avg.values();
  }
  return out;
}

namespace {

class HashedWriter {
 public:
  explicit HashedWriter(const std::string& path) : os_(path, std::ios::binary) {
    if (!os_) throw IoError("cannot open " + path + " for writing");
    path_ = path;
  }
  void write(const void* data, std::size_t len) {
    os_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    hash_.update(data, len);
  }
  template <typename T>
  void write_pod(const T& v) {
    write(&v, sizeof(T));
  }
  void finish() {
    const std::uint64_t digest = hash_.digest();
    os_.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
    os_.flush();
    if (!os_) throw IoError("failed writing " + path_);
  }

 private:
  std::ofstream os_;
  Fnv1a hash_;
  std::string path_;
};

class HashedReader {
 public:
  explicit HashedReader(const std::string& path) : is_(path, std::ios::binary) {
    if (!is_) throw IoError("cannot open " + path);
    path_ = path;
  }
  void read(void* data, std::size_t len) {
    is_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (is_.gcount() != static_cast<std::streamsize>(len))
      throw FormatError(path_ + ": truncated payload");
    hash_.update(data, len);
  }
  template <typename T>
  T read_pod() {
    T v;
    read(&v, sizeof(T));
    return v;
  }
  void verify_checksum() {
    const std::uint64_t expected = hash_.digest();
    std::uint64_t stored = 0;
    is_.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (is_.gcount() != sizeof(stored))
      throw FormatError(path_ + ": missing checksum");
    if (stored != expected)
      throw FormatError(path_ + ": checksum mismatch");
  }

 private:
  std::ifstream is_;
  Fnv1a hash_;
  std::string path_;
};

}  // namespace

void write_snapshots(const SnapshotMatrix& m, const std::string& path) {
  if (!m.grid) throw InvalidArgument("write_snapshots: matrix has no grid");
  if (m.data.rows() != m.grid->cell_count())
    throw InvalidArgument("write_snapshots: row count does not match grid");
  if (m.data.cols() !=
      static_cast<Eigen::Index>(m.n_samples()) * m.n_times())
    throw InvalidArgument("write_snapshots: column count != M * N^t");
  if (!m.data.allFinite() || !m.averages.allFinite())
    throw InvalidArgument("write_snapshots: non-finite entries");

  HashedWriter w(path);
  w.write(kMagic, sizeof(kMagic));
  w.write_pod<std::uint32_t>(static_cast<std::uint32_t>(m.variable));
  w.write_pod<std::uint32_t>(0);  // flags
  w.write_pod<std::uint64_t>(m.fingerprint);
  w.write_pod<std::uint64_t>(static_cast<std::uint64_t>(m.n_cells()));
  w.write_pod<std::uint64_t>(static_cast<std::uint64_t>(m.n_columns()));
  w.write_pod<std::uint32_t>(static_cast<std::uint32_t>(m.dim()));
  w.write_pod<std::uint32_t>(static_cast<std::uint32_t>(m.n_samples()));
  w.write_pod<std::uint32_t>(static_cast<std::uint32_t>(m.n_times()));
  w.write_pod<std::uint32_t>(0);  // reserved
  w.write_pod<std::uint32_t>(static_cast<std::uint32_t>(m.grid->nx()));
  w.write_pod<std::uint32_t>(static_cast<std::uint32_t>(m.grid->ny()));
  w.write_pod<double>(m.grid->x0());
  w.write_pod<double>(m.grid->xf());
  w.write_pod<double>(m.grid->y_lo());
  w.write_pod<double>(m.grid->y_hi());
  w.write(m.times.data(), m.times.size() * sizeof(double));
  w.write(m.parameters.data(),
          static_cast<std::size_t>(m.parameters.size()) * sizeof(double));
  w.write(m.averages.data(),
          static_cast<std::size_t>(m.averages.size()) * sizeof(double));
  w.write(m.data.data(),
          static_cast<std::size_t>(m.data.size()) * sizeof(double));
  w.finish();
}

SnapshotMatrix read_snapshots(const std::string& path) {
  HashedReader r(path);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError(path + ": bad magic (not a QGSNAP01 file)");

  SnapshotMatrix m;
  const auto var = r.read_pod<std::uint32_t>();
  if (var >= kNumVariables)
    throw FormatError(path + ": invalid variable tag");
  m.variable = static_cast<Variable>(var);
  const auto flags = r.read_pod<std::uint32_t>();
  if (flags != 0) throw FormatError(path + ": unsupported flags");
  m.fingerprint = r.read_pod<std::uint64_t>();
  const auto n_cells = r.read_pod<std::uint64_t>();
  const auto n_cols = r.read_pod<std::uint64_t>();
  const auto dim = r.read_pod<std::uint32_t>();
  const auto m_samples = r.read_pod<std::uint32_t>();
  const auto n_times = r.read_pod<std::uint32_t>();
  (void)r.read_pod<std::uint32_t>();
  const auto nx = r.read_pod<std::uint32_t>();
  const auto ny = r.read_pod<std::uint32_t>();
  const auto x0 = r.read_pod<double>();
  const auto xf = r.read_pod<double>();
  const auto y_lo = r.read_pod<double>();
  const auto y_hi = r.read_pod<double>();

  if (n_cols != static_cast<std::uint64_t>(m_samples) * n_times)
    throw FormatError(path + ": inconsistent column count in header");
  if (n_cells != static_cast<std::uint64_t>(nx) * ny)
    throw FormatError(path + ": cell count does not match grid dims");

  m.grid = build_grid(static_cast<int>(nx), static_cast<int>(ny), x0, xf,
                      y_lo, y_hi);
  m.times.resize(n_times);
  r.read(m.times.data(), n_times * sizeof(double));
  m.parameters.resize(m_samples, dim);
  r.read(m.parameters.data(),
         static_cast<std::size_t>(m.parameters.size()) * sizeof(double));
  m.averages.resize(static_cast<Eigen::Index>(n_cells), m_samples);
  r.read(m.averages.data(),
         static_cast<std::size_t>(m.averages.size()) * sizeof(double));
  m.data.resize(static_cast<Eigen::Index>(n_cells),
                static_cast<Eigen::Index>(n_cols));
  r.read(m.data.data(),
         static_cast<std::size_t>(m.data.size()) * sizeof(double));
  r.verify_checksum();
  return m;
}

}  // namespace qgrom
