#include "core/workflows.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "core/jsoncfg.hpp"
#include "core/pipeline.hpp"

namespace qgrom {

namespace fs = std::filesystem;
using nlohmann::json;

void WorkflowContext::stage(const std::string& name,
                            const std::string& status) const {
  if (json_log && events)
    *events << json{{"event", "stage"}, {"name", name}, {"status", status}}
                   .dump()
            << "\n";
  if (log) *log << "[" << name << "] " << status << "\n";
}

void WorkflowContext::info(const std::string& msg) const {
  if (json_log && events)
    *events << json{{"event", "info"}, {"message", msg}}.dump() << "\n";
  if (log) *log << msg << "\n";
}

namespace {

SnapshotWindow window_from_json(const json& j, const std::string& path) {
  check_keys(j, {"start", "end", "stride"}, path);
  SnapshotWindow w;
  w.start = get_number(j, "start", path);
  w.end = get_number(j, "end", path);
  w.stride = get_number(j, "stride", path);
  if (!(w.stride > 0.0))
    throw InvalidArgument("config error at " + path +
                          "/stride: must be positive");
  return w;
}

std::vector<double> horizon_times(const SnapshotWindow& h) {
  // prediction instants start + stride, ..., end (start itself excluded)
  std::vector<double> times;
  const long n = static_cast<long>(std::floor((h.end - h.start) / h.stride + 1e-9));
  for (long i = 1; i <= n; ++i) times.push_back(h.start + i * h.stride);
  return times;
}

json manifest_read(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void manifest_write(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifest " + path);
  os << j.dump(2) << '\n';
}

RpodConfig rpod_from_json(const json& j, const std::string& path) {
  RpodConfig rc;
  rc.rank = get_int_or(j, "rank", path, 10);
  rc.oversample = get_int_or(j, "oversample", path, 75);
  rc.power_iterations = get_int_or(j, "power", path, 1);
  rc.seed = get_u64_or(j, "seed", path, 0);
  return rc;
}

}  // namespace

void cmd_simulate(const json& config, const WorkflowContext& ctx) {
  check_keys(config,
             {"grid", "params", "time", "snapshots", "solver", "output",
              "json_log"},
             "");
  const GridPtr grid = grid_from_json(config.at("grid"), "/grid");
  const PhysParams params = params_from_json(config.at("params"), "/params");
  const json& time = config.at("time");
  check_keys(time, {"dt", "t_end"}, "/time");
  const double dt = get_number(time, "dt", "/time");
  const double t_end = get_number(time, "t_end", "/time");
  const SnapshotWindow window =
      window_from_json(config.at("snapshots"), "/snapshots");
  SolverOptions solve;
  if (config.contains("solver")) {
    check_keys(config.at("solver"), {"tol", "max_iter"}, "/solver");
    solve.tol = get_number_or(config.at("solver"), "tol", "/solver", 1e-8);
    solve.max_iter = get_int_or(config.at("solver"), "max_iter", "/solver", 0);
  }
  const json& output = config.at("output");
  check_keys(output, {"dir", "tag"}, "/output");
  const std::string dir = get_string(output, "dir", "/output");
  const std::string tag = get_string_or(output, "tag", "/output", "sim");

  ctx.stage("simulate", "start");
  RunStats stats;
  SnapshotSeries series = run_simulation(grid, params, dt, t_end, window,
                                         solve, ctx.log, &stats);
  Eigen::VectorXd mu(3);
  mu << params.delta, params.sigma, params.Fr;
  series.mu = mu;
  ctx.info("simulate: " + std::to_string(stats.steps) + " steps, " +
           std::to_string(series.n_times()) + " snapshots, wall " +
           format_full(stats.wall_seconds) + " s");

  if (series.times.empty()) {
    ctx.info("warning: no snapshots fell inside the collection window; "
             "nothing written");
    ctx.stage("simulate", "done");
    return;
  }
  fs::create_directories(dir);
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const SnapshotMatrix m = assemble_matrix({series}, var, 0);
    write_snapshots(m, (fs::path(dir) / (tag + "_" + variable_name(var) +
                                         ".qgs")).string());
  }
  ctx.stage("simulate", "done");
}

void cmd_sweep(const json& config, const WorkflowContext& ctx) {
  check_keys(config,
             {"grid", "sweep", "time", "snapshots", "solver", "output", "jobs",
              "json_log"},
             "");
  json plan_json = config;
  plan_json.erase("output");
  plan_json.erase("jobs");
  plan_json.erase("json_log");
  const SweepPlan plan = plan_from_json(plan_json, "");
  const json& output = config.at("output");
  check_keys(output, {"dir"}, "/output");
  const std::string dir = get_string(output, "dir", "/output");
  const int jobs = get_int_or(config, "jobs", "", 1);

  ctx.stage("sweep", "start");
  const std::uint64_t fp = plan.fingerprint();
  const int m = plan.n_samples();
  std::vector<SnapshotSeries> series(m);
  for (int k = 0; k < m; ++k) {
    if (jobs > 1) break;
    ctx.info("sweep: sample " + std::to_string(k + 1) + "/" +
             std::to_string(m));
    series[k] = run_fom(plan, plan.mu_at(k), plan.window, ctx.log);
  }
  if (jobs > 1) {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (int w = 0; w < std::min(jobs, m); ++w)
      workers.emplace_back([&, w] {
        try {
          for (int k = next.fetch_add(1); k < m; k = next.fetch_add(1))
            series[k] = run_fom(plan, plan.mu_at(k), plan.window, nullptr);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  fs::create_directories(dir);
  json files;
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const SnapshotMatrix mat = assemble_matrix(series, var, fp);
    const std::string name =
        std::string("snapshots_") + variable_name(var) + ".qgs";
    write_snapshots(mat, (fs::path(dir) / name).string());
    files["snapshots"][variable_name(var)] = name;
  }
  json manifest;
  manifest["format"] = "qgrom-manifest-v1";
  manifest["fingerprint"] = fingerprint_to_hex(fp);
  manifest["plan"] = plan_to_json(plan);
  manifest["files"] = files;
  manifest_write(manifest, (fs::path(dir) / "rom-manifest.json").string());
  ctx.stage("sweep", "done");
}

namespace {

void decompose_one(const std::string& in_path, bool deterministic,
                   const RpodConfig& rc, const std::string& out_basis,
                   const std::string& spectrum_csv, double energy_threshold,
                   const WorkflowContext& ctx) {
  const SnapshotMatrix S = read_snapshots(in_path);
  SvdTriple svd;
  if (deterministic) {
    svd = deterministic_pod(S);
  } else {
    svd = rpod(S, rc);
  }
  const int n_keep =
      static_cast<int>(std::min<Eigen::Index>(rc.rank, svd.rank()));
  BasisProvenance prov;
  prov.randomized = !deterministic;
  prov.oversample = deterministic ? 0 : rc.oversample;
  prov.power_iterations = deterministic ? 0 : rc.power_iterations;
  prov.seed = deterministic ? 0 : rc.seed;
  const ReducedBasis basis =
      truncate_basis(svd, S.variable, n_keep, prov, S.fingerprint);
  write_basis(basis, out_basis);
  if (!spectrum_csv.empty()) write_spectrum_csv(svd.sigma, spectrum_csv);

  const EnergyReport er = energy_retained(svd.sigma, n_keep);
  ctx.info(std::string(variable_name(S.variable)) + ": retained " +
           std::to_string(n_keep) + " modes, singular-value fraction " +
           format_full(er.value_fraction) + " (squared " +
           format_full(er.squared_fraction) + ")");
  if (energy_threshold > 0.0) {
    const int n_needed = energy_rank(svd.sigma, energy_threshold);
    ctx.info(std::string(variable_name(S.variable)) + ": " +
             std::to_string(n_needed) + " modes reach threshold " +
             format_full(energy_threshold));
  }
}

}  // namespace

void cmd_decompose(const json& config, const WorkflowContext& ctx) {
  check_keys(config,
             {"method", "in", "manifest", "rank", "oversample", "power",
              "seed", "out_basis", "spectrum_csv", "energy_threshold",
              "json_log"},
             "");
  const std::string method = get_string(config, "method", "");
  if (method != "pod" && method != "rpod")
    throw InvalidArgument("config error at /method: expected 'pod' or 'rpod'");
  const bool deterministic = method == "pod";
  const RpodConfig rc = rpod_from_json(config, "");
  const double energy_threshold =
      get_number_or(config, "energy_threshold", "", 0.0);

  ctx.stage(method, "start");
  if (config.contains("in")) {
    const std::string in_path = get_string(config, "in", "");
    std::string out_basis = get_string_or(config, "out_basis", "", "");
    if (out_basis.empty())
      out_basis = (fs::path(in_path).parent_path() /
                   (fs::path(in_path).stem().string() + ".qgb"))
                      .string();
    decompose_one(in_path, deterministic, rc, out_basis,
                  get_string_or(config, "spectrum_csv", "", ""),
                  energy_threshold, ctx);
  } else if (config.contains("manifest")) {
    const std::string manifest_path = get_string(config, "manifest", "");
    json manifest = manifest_read(manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    for (int v = 0; v < kNumVariables; ++v) {
      const Variable var = static_cast<Variable>(v);
      const std::string name = variable_name(var);
      const std::string in_path =
          (dir / manifest.at("files").at("snapshots").at(name).get<std::string>())
              .string();
      const std::string basis_name = "basis_" + name + ".qgb";
      const std::string spectrum =
          (dir / ("spectrum_" + name + ".csv")).string();
      decompose_one(in_path, deterministic, rc, (dir / basis_name).string(),
                    spectrum, energy_threshold, ctx);
      manifest["files"]["bases"][name] = basis_name;
    }
    manifest["reduction"] = {{"method", method},
                             {"rank", rc.rank},
                             {"oversample", rc.oversample},
                             {"power", rc.power_iterations},
                             {"seed", rc.seed}};
    manifest_write(manifest, manifest_path);
  } else {
    throw InvalidArgument("config error: either 'in' or 'manifest' is required");
  }
  ctx.stage(method, "done");
}

void cmd_train(const json& config, const WorkflowContext& ctx) {
  check_keys(config,
             {"manifest", "lookback", "seed", "hyper_q", "hyper_psi",
              "json_log"},
             "");
  const std::string manifest_path = get_string(config, "manifest", "");
  json manifest = manifest_read(manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();
  const std::uint64_t fp =
      fingerprint_from_hex(manifest.at("fingerprint").get<std::string>());

  const int lookback = get_int_or(config, "lookback", "", 3);
  const std::uint64_t seed = get_u64_or(config, "seed", "", 1);
  LstmHyper hyper_q = LstmHyper::preset_q();
  LstmHyper hyper_psi = LstmHyper::preset_psi();
  if (config.contains("hyper_q"))
    hyper_q = hyper_from_json(config.at("hyper_q"), "/hyper_q", hyper_q);
  if (config.contains("hyper_psi"))
    hyper_psi = hyper_from_json(config.at("hyper_psi"), "/hyper_psi", hyper_psi);
  hyper_q.lookback = lookback;
  hyper_psi.lookback = lookback;

  ctx.stage("train", "start");
  if (!manifest.contains("files") || !manifest.at("files").contains("bases"))
    throw InvalidArgument(manifest_path +
                          ": manifest has no bases; run rpod/pod first");
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const std::string name = variable_name(var);
    const SnapshotMatrix snaps = read_snapshots(
        (dir / manifest.at("files").at("snapshots").at(name).get<std::string>())
            .string());
    if (snaps.fingerprint != fp)
      throw InvalidArgument("manifest fingerprint does not match snapshots_" +
                            name);
    const ReducedBasis basis = read_basis(
        (dir / manifest.at("files").at("bases").at(name).get<std::string>())
            .string());
    if (basis.fingerprint != fp)
      throw InvalidArgument("manifest fingerprint does not match basis_" + name);

    const CoefficientTable table = modal_coefficients(basis, snaps);
    const SequenceDataset ds =
        build_dataset(table, snaps.parameters, snaps.times, lookback);
    const LstmHyper hyper =
        (var == Variable::q1 || var == Variable::q2) ? hyper_q : hyper_psi;
    ctx.info("train: " + name + " on " + std::to_string(ds.size()) +
             " windows");
    const TrainResult tr = train(ds, hyper, seed + static_cast<std::uint64_t>(v));
    ctx.info("train: " + name + " final train mse " +
             format_full(tr.train_loss.back()));
    const std::string model_name = "model_" + name + ".qgm";
    write_model(tr.model, (dir / model_name).string());
    write_loss_history_csv(tr, (dir / ("loss_" + name + ".csv")).string());
    manifest["files"]["models"][name] = model_name;
  }
  manifest["lstm"] = {{"lookback", lookback},
                      {"seed", seed},
                      {"hyper_q", hyper_to_json(hyper_q)},
                      {"hyper_psi", hyper_to_json(hyper_psi)}};
  manifest_write(manifest, manifest_path);
  ctx.stage("train", "done");
}

void cmd_predict(const json& config, const WorkflowContext& ctx) {
  check_keys(config, {"manifest", "mu", "horizon", "output", "json_log"}, "");
  const RomArtifacts art =
      load_artifacts(get_string(config, "manifest", ""));
  const auto mu_list = get_number_list(config, "mu", "");
  if (mu_list.size() != SweepPlan::dim)
    throw InvalidArgument("config error at /mu: expected 3 components");
  Eigen::VectorXd mu(3);
  mu << mu_list[0], mu_list[1], mu_list[2];
  const SnapshotWindow horizon =
      window_from_json(config.at("horizon"), "/horizon");
  const json& output = config.at("output");
  check_keys(output, {"dir", "tag"}, "/output");
  const std::string dir = get_string(output, "dir", "/output");
  const std::string tag = get_string_or(output, "tag", "/output", "predict");

  ctx.stage("predict", "start");
  const std::vector<double> times = horizon_times(horizon);
  fs::create_directories(dir);
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const std::vector<Field> fields = reconstruct(art, var, mu, times);

    // coefficient trajectory
    std::ofstream os(fs::path(dir) /
                     (tag + "_coeffs_" + variable_name(var) + ".csv"));
    if (!os) throw IoError("cannot write coefficient csv");
    const ReducedBasis& basis = art.basis(var);
    const Eigen::VectorXd avg = art.snaps(var).averages.col(
        nearest_sample(mu, art.snaps(var).parameters));
    os << "t";
    for (int i = 1; i <= basis.n_modes(); ++i) os << ",c" << i;
    os << "\n";
    for (std::size_t s = 0; s < times.size(); ++s) {
      os << format_full(times[s]);
      const Eigen::VectorXd c =
          basis.modes.transpose() * (fields[s].values() - avg);
      for (Eigen::Index i = 0; i < c.size(); ++i)
        os << ',' << format_full(c[i]);
      os << "\n";
    }

    // horizon-averaged field
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(fields.front().values().size());
    for (const auto& f : fields) mean += f.values();
    mean /= static_cast<double>(fields.size());
    write_field_csv(Field(fields.front().grid_ptr(), mean),
                    (fs::path(dir) /
                     (tag + "_mean_" + variable_name(var) + ".csv"))
                        .string());
  }
  ctx.stage("predict", "done");
}

namespace {

std::string mu_cache_key(const Eigen::VectorXd& mu, const SnapshotWindow& h) {
  Fnv1a hash;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const std::string s = format_full(mu[i]);
    hash.update(s.data(), s.size());
  }
  for (double v : {h.start, h.end, h.stride}) {
    const std::string s = format_full(v);
    hash.update(s.data(), s.size());
  }
  return fingerprint_to_hex(hash.digest());
}

}  // namespace

void cmd_evaluate(const json& config, const WorkflowContext& ctx) {
  check_keys(config,
             {"manifest", "horizon", "test_points", "out_csv", "json_log"}, "");
  const std::string manifest_path = get_string(config, "manifest", "");
  const RomArtifacts art = load_artifacts(manifest_path);
  const SnapshotWindow horizon =
      window_from_json(config.at("horizon"), "/horizon");
  const std::string out_csv = get_string(config, "out_csv", "");

  std::vector<Eigen::VectorXd> mus;
  const json& tp = config.at("test_points");
  if (tp.is_array()) {
    for (const auto& entry : tp) {
      if (!entry.is_array() || entry.size() != SweepPlan::dim)
        throw InvalidArgument(
            "config error at /test_points: each point needs 3 components");
      Eigen::VectorXd mu(3);
      for (int c = 0; c < 3; ++c) mu[c] = entry[c].get<double>();
      mus.push_back(mu);
    }
  } else {
    check_keys(tp, {"count", "seed"}, "/test_points");
    const int count = get_int(tp, "count", "/test_points");
    const std::uint64_t seed = get_u64_or(tp, "seed", "/test_points", 0);
    if (!tp.contains("seed"))
      throw InvalidArgument("config error at /test_points: seed is required");
    Rng rng(seed);
    auto range = [](const std::vector<double>& xs) {
      const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
      return std::pair<double, double>(*mn, *mx);
    };
    const auto [dlo, dhi] = range(art.plan.deltas);
    const auto [slo, shi] = range(art.plan.sigmas);
    const auto [flo, fhi] = range(art.plan.frs);
    for (int i = 0; i < count; ++i) {
      Eigen::VectorXd mu(3);
      mu << dlo + (dhi - dlo) * rng.next_double(),
          slo + (shi - slo) * rng.next_double(),
          flo + (fhi - flo) * rng.next_double();
      mus.push_back(mu);
    }
  }
  if (mus.empty())
    throw InvalidArgument("config error at /test_points: no test points");

  ctx.stage("evaluate", "start");
  const fs::path ref_dir =
      fs::path(manifest_path).parent_path() / "references";
  fs::create_directories(ref_dir);

  std::vector<ErrorReport> reports;
  for (const auto& mu : mus) {
    // full-order reference over the prediction horizon, cached on disk
    const std::string key = mu_cache_key(mu, horizon);
    std::array<SnapshotMatrix, kNumVariables> ref_mats;
    bool cached = true;
    for (int v = 0; v < kNumVariables && cached; ++v)
      if (!fs::exists(ref_dir / ("ref_" + key + "_" +
                                 variable_name(static_cast<Variable>(v)) +
                                 ".qgs")))
        cached = false;
    SnapshotSeries reference;
    if (cached) {
      ctx.info("evaluate: cached reference for mu=(" +
               format_full(mu[0]) + ", " + format_full(mu[1]) + ", " +
               format_full(mu[2]) + ")");
      for (int v = 0; v < kNumVariables; ++v) {
        const Variable var = static_cast<Variable>(v);
        const SnapshotMatrix m = read_snapshots(
            (ref_dir / ("ref_" + key + "_" + variable_name(var) + ".qgs"))
                .string());
        if (m.fingerprint != art.fingerprint)
          throw InvalidArgument("reference cache fingerprint mismatch for " +
                                key);
        if (v == 0) {
          reference.mu = mu;
          reference.times = m.times;
        }
        auto& fields = reference.fields(var);
        for (int p = 0; p < m.n_times(); ++p)
          fields.emplace_back(m.grid,
                              Eigen::VectorXd(m.data.col(p) + m.averages.col(0)));
      }
    } else {
      ctx.info("evaluate: running FOM reference for mu=(" +
               format_full(mu[0]) + ", " + format_full(mu[1]) + ", " +
               format_full(mu[2]) + ")");
      reference = run_fom(art.plan, mu, horizon, ctx.log);
      for (int v = 0; v < kNumVariables; ++v) {
        const Variable var = static_cast<Variable>(v);
        const SnapshotMatrix m =
            assemble_matrix({reference}, var, art.fingerprint);
        write_snapshots(m, (ref_dir / ("ref_" + key + "_" +
                                       variable_name(var) + ".qgs"))
                               .string());
      }
    }
    reports.push_back(evaluate(art, mu, reference));
  }
  write_error_csv(reports, out_csv);
  ctx.stage("evaluate", "done");
}

void cmd_bench(const json& config, const WorkflowContext& ctx) {
  check_keys(config, {"manifest", "horizon", "matrix", "out_csv", "json_log"},
             "");
  const RomArtifacts art = load_artifacts(get_string(config, "manifest", ""));
  const SnapshotWindow horizon =
      window_from_json(config.at("horizon"), "/horizon");
  const std::string out_csv = get_string(config, "out_csv", "");

  ctx.stage("bench", "start");
  Eigen::MatrixXd synthetic;
  const Eigen::MatrixXd* matrix = nullptr;
  if (config.contains("matrix")) {
    const json& mj = config.at("matrix");
    check_keys(mj, {"rows", "cols", "seed"}, "/matrix");
    const int rows = get_int(mj, "rows", "/matrix");
    const int cols = get_int(mj, "cols", "/matrix");
    const std::uint64_t seed = get_u64_or(mj, "seed", "/matrix", 0);
    ctx.info("bench: generating synthetic " + std::to_string(rows) + "x" +
             std::to_string(cols) + " matrix");
    // low-rank structure with decaying weights plus small dense noise
    Rng rng(seed);
    const int r0 = 40;
    Eigen::MatrixXd G1(rows, r0), G2(cols, r0);
    for (Eigen::Index i = 0; i < G1.size(); ++i)
      G1.data()[i] = rng.next_gaussian();
    for (Eigen::Index i = 0; i < G2.size(); ++i)
      G2.data()[i] = rng.next_gaussian();
    Eigen::VectorXd w(r0);
    for (int i = 0; i < r0; ++i) w[i] = std::pow(0.8, i);
    synthetic.noalias() = G1 * w.asDiagonal() * G2.transpose();
    for (Eigen::Index i = 0; i < synthetic.size(); ++i)
      synthetic.data()[i] += 1e-6 * rng.next_gaussian();
    matrix = &synthetic;
  }
  const BenchmarkReport report =
      benchmark(art, horizon_times(horizon), matrix, ctx.log);
  write_benchmark_csv(report, out_csv);
  ctx.stage("bench", "done");
}

void run_command(const std::string& command, const std::string& config_text,
                 const WorkflowContext& ctx) {
  const json config = parse_json_text(config_text);
  if (command == "simulate")
    cmd_simulate(config, ctx);
  else if (command == "sweep")
    cmd_sweep(config, ctx);
  else if (command == "pod" || command == "rpod") {
    json c = config;
    c["method"] = command;
    cmd_decompose(c, ctx);
  } else if (command == "train")
    cmd_train(config, ctx);
  else if (command == "predict")
    cmd_predict(config, ctx);
  else if (command == "evaluate")
    cmd_evaluate(config, ctx);
  else if (command == "bench")
    cmd_bench(config, ctx);
  else
    throw InvalidArgument("unknown command '" + command + "'");
}

}  // namespace qgrom
