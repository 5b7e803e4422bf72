#include "qgrom/qgrom.h"

#include <iostream>
#include <memory>
#include <string>

#include "core/jsoncfg.hpp"
#include "core/reduction.hpp"
#include "core/snapshots.hpp"
#include "core/workflows.hpp"

namespace {

thread_local std::string g_last_error;

qgrom_status to_status(const qgrom::Error& e) {
  switch (e.kind()) {
    case qgrom::ErrorKind::invalid_argument: return QGROM_ERR_INVALID_ARGUMENT;
    case qgrom::ErrorKind::numeric: return QGROM_ERR_NUMERIC;
    case qgrom::ErrorKind::io: return QGROM_ERR_IO;
    case qgrom::ErrorKind::format: return QGROM_ERR_FORMAT;
    case qgrom::ErrorKind::internal: return QGROM_ERR_INTERNAL;
  }
  return QGROM_ERR_INTERNAL;
}

template <typename Fn>
qgrom_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return QGROM_OK;
  } catch (const qgrom::Error& e) {
    g_last_error = e.what();
    return to_status(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return QGROM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return QGROM_ERR_INTERNAL;
  }
}

qgrom_status require(bool ok, const char* msg) {
  if (ok) return QGROM_OK;
  g_last_error = msg;
  return QGROM_ERR_INVALID_ARGUMENT;
}

qgrom_status run_impl(const char* command, const char* config_json,
                      bool quiet) {
  if (command == nullptr || config_json == nullptr)
    return require(false, "command and config_json must be non-null");
  return guarded([&] {
    qgrom::WorkflowContext ctx;
    ctx.log = quiet ? nullptr : &std::cerr;
    ctx.events = &std::cout;
    // json_log is switched on by the config itself
    const auto cfg = qgrom::parse_json_text(config_json);
    ctx.json_log = cfg.contains("json_log") && cfg.at("json_log").is_boolean() &&
                   cfg.at("json_log").get<bool>();
    qgrom::run_command(command, config_json, ctx);
  });
}

}  // namespace

struct qgrom_snapshots {
  qgrom::SnapshotMatrix matrix;
};

struct qgrom_basis {
  qgrom::ReducedBasis basis;
};

extern "C" {

const char* qgrom_version(void) { return "0.1.0"; }

const char* qgrom_status_name(qgrom_status status) {
  switch (status) {
    case QGROM_OK: return "ok";
    case QGROM_ERR_INVALID_ARGUMENT: return "invalid argument";
    case QGROM_ERR_NUMERIC: return "numeric failure";
    case QGROM_ERR_IO: return "io error";
    case QGROM_ERR_FORMAT: return "format error";
    case QGROM_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* qgrom_last_error(void) { return g_last_error.c_str(); }

qgrom_status qgrom_run(const char* command, const char* config_json) {
  return run_impl(command, config_json, false);
}

qgrom_status qgrom_run_quiet(const char* command, const char* config_json) {
  return run_impl(command, config_json, true);
}

qgrom_status qgrom_snapshots_open(const char* path, qgrom_snapshots** out) {
  if (auto st = require(path != nullptr && out != nullptr,
                        "path and out must be non-null"))
    return st;
  return guarded([&] {
    auto handle = std::make_unique<qgrom_snapshots>();
    handle->matrix = qgrom::read_snapshots(path);
    *out = handle.release();
  });
}

void qgrom_snapshots_close(qgrom_snapshots* snapshots) { delete snapshots; }

qgrom_status qgrom_snapshots_info(const qgrom_snapshots* snapshots,
                                  int64_t* n_cells, int64_t* n_columns,
                                  int32_t* n_samples, int32_t* n_times,
                                  int32_t* param_dim) {
  if (auto st = require(snapshots != nullptr, "snapshots handle is null"))
    return st;
  if (n_cells) *n_cells = snapshots->matrix.n_cells();
  if (n_columns) *n_columns = snapshots->matrix.n_columns();
  if (n_samples) *n_samples = snapshots->matrix.n_samples();
  if (n_times) *n_times = snapshots->matrix.n_times();
  if (param_dim) *param_dim = snapshots->matrix.dim();
  g_last_error.clear();
  return QGROM_OK;
}

qgrom_status qgrom_snapshots_column(const qgrom_snapshots* snapshots,
                                    int64_t column, double* buffer,
                                    size_t buffer_len) {
  if (auto st = require(snapshots != nullptr && buffer != nullptr,
                        "snapshots handle and buffer must be non-null"))
    return st;
  return guarded([&] {
    const auto& m = snapshots->matrix;
    if (column < 0 || column >= m.n_columns())
      throw qgrom::InvalidArgument("column index out of range");
    if (buffer_len < static_cast<size_t>(m.n_cells()))
      throw qgrom::InvalidArgument("buffer too small for a column");
    Eigen::Map<Eigen::VectorXd>(buffer, m.n_cells()) = m.data.col(column);
  });
}

qgrom_status qgrom_pod(const qgrom_snapshots* snapshots, int32_t rank,
                       qgrom_basis** out) {
  if (auto st = require(snapshots != nullptr && out != nullptr,
                        "snapshots handle and out must be non-null"))
    return st;
  return guarded([&] {
    const auto svd = qgrom::deterministic_pod(snapshots->matrix);
    auto handle = std::make_unique<qgrom_basis>();
    handle->basis = qgrom::truncate_basis(
        svd, snapshots->matrix.variable,
        std::min<int>(rank, static_cast<int>(svd.rank())), {},
        snapshots->matrix.fingerprint);
    *out = handle.release();
  });
}

qgrom_status qgrom_rpod(const qgrom_snapshots* snapshots, int32_t rank,
                        int32_t oversample, int32_t power, uint64_t seed,
                        qgrom_basis** out) {
  if (auto st = require(snapshots != nullptr && out != nullptr,
                        "snapshots handle and out must be non-null"))
    return st;
  return guarded([&] {
    qgrom::RpodConfig cfg;
    cfg.rank = rank;
    cfg.oversample = oversample;
    cfg.power_iterations = power;
    cfg.seed = seed;
    const auto svd = qgrom::rpod(snapshots->matrix, cfg);
    qgrom::BasisProvenance prov;
    prov.randomized = true;
    prov.oversample = oversample;
    prov.power_iterations = power;
    prov.seed = seed;
    auto handle = std::make_unique<qgrom_basis>();
    handle->basis =
        qgrom::truncate_basis(svd, snapshots->matrix.variable, rank, prov,
                              snapshots->matrix.fingerprint);
    *out = handle.release();
  });
}

void qgrom_basis_close(qgrom_basis* basis) { delete basis; }

qgrom_status qgrom_basis_info(const qgrom_basis* basis, int64_t* n_cells,
                              int32_t* n_modes) {
  if (auto st = require(basis != nullptr, "basis handle is null")) return st;
  if (n_cells) *n_cells = basis->basis.modes.rows();
  if (n_modes) *n_modes = basis->basis.n_modes();
  g_last_error.clear();
  return QGROM_OK;
}

qgrom_status qgrom_basis_singular_values(const qgrom_basis* basis,
                                         double* buffer, size_t buffer_len) {
  if (auto st = require(basis != nullptr && buffer != nullptr,
                        "basis handle and buffer must be non-null"))
    return st;
  return guarded([&] {
    const auto& sigma = basis->basis.sigma;
    if (buffer_len < static_cast<size_t>(sigma.size()))
      throw qgrom::InvalidArgument("buffer too small for singular values");
    Eigen::Map<Eigen::VectorXd>(buffer, sigma.size()) = sigma;
  });
}

qgrom_status qgrom_basis_mode(const qgrom_basis* basis, int32_t mode,
                              double* buffer, size_t buffer_len) {
  if (auto st = require(basis != nullptr && buffer != nullptr,
                        "basis handle and buffer must be non-null"))
    return st;
  return guarded([&] {
    const auto& modes = basis->basis.modes;
    if (mode < 0 || mode >= modes.cols())
      throw qgrom::InvalidArgument("mode index out of range");
    if (buffer_len < static_cast<size_t>(modes.rows()))
      throw qgrom::InvalidArgument("buffer too small for a mode");
    Eigen::Map<Eigen::VectorXd>(buffer, modes.rows()) = modes.col(mode);
  });
}

}  // extern "C"
