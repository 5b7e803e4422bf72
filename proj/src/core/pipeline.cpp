#include "core/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include "core/jsoncfg.hpp"

namespace qgrom {

namespace fs = std::filesystem;

int SweepPlan::n_samples() const {
  return static_cast<int>(deltas.size() * sigmas.size() * frs.size());
}

Eigen::VectorXd SweepPlan::mu_at(int k) const {
  if (k < 0 || k >= n_samples())
    throw InvalidArgument("sweep plan: sample index out of range");
  const int nf = static_cast<int>(frs.size());
  const int ns = static_cast<int>(sigmas.size());
  const int i_fr = k % nf;
  const int i_sigma = (k / nf) % ns;
  const int i_delta = k / (nf * ns);
  Eigen::VectorXd mu(3);
  mu << deltas[i_delta], sigmas[i_sigma], frs[i_fr];
  return mu;
}

PhysParams SweepPlan::params_for(const Eigen::VectorXd& mu) const {
  if (mu.size() != dim)
    throw InvalidArgument("sweep plan: mu must have 3 components (delta, sigma, Fr)");
  PhysParams p;
  p.Re = Re;
  p.Ro = Ro;
  p.delta = mu[0];
  p.sigma = mu[1];
  p.Fr = mu[2];
  p.alpha1 = alpha1;
  p.alpha2 = alpha2;
  p.forcing = forcing;
  p.validate();
  return p;
}

GridPtr SweepPlan::make_grid() const {
  return build_grid(nx, ny, x0, xf, y_lo, y_hi);
}

SolverOptions SweepPlan::solver_options() const {
  SolverOptions o;
  o.tol = solver_tol;
  o.max_iter = solver_max_iter;
  return o;
}

void SweepPlan::validate() const {
  if (deltas.empty() || sigmas.empty() || frs.empty())
    throw InvalidArgument("sweep plan: empty sampling list");
  for (int k = 0; k < n_samples(); ++k) (void)params_for(mu_at(k));
  if (!(dt > 0.0)) throw InvalidArgument("sweep plan: dt must be positive");
  if (!(window.stride > 0.0))
    throw InvalidArgument("sweep plan: snapshot stride must be positive");
  if (window.end < window.start)
    throw InvalidArgument("sweep plan: snapshot window end before start");
  if (!(solver_tol > 0.0))
    throw InvalidArgument("sweep plan: solver tolerance must be positive");
  (void)make_grid();
}

std::uint64_t SweepPlan::fingerprint() const {
  std::string s;
  auto add = [&s](const std::string& k, const std::string& v) {
    s += k;
    s += '=';
    s += v;
    s += ';';
  };
  auto add_d = [&](const std::string& k, double v) { add(k, format_full(v)); };
  auto add_list = [&](const std::string& k, const std::vector<double>& vs) {
    std::string v;
    for (double x : vs) {
      v += format_full(x);
      v += ',';
    }
    add(k, v);
  };
  add("nx", std::to_string(nx));
  add("ny", std::to_string(ny));
  add_d("x0", x0);
  add_d("xf", xf);
  add_d("y_lo", y_lo);
  add_d("y_hi", y_hi);
  add_list("deltas", deltas);
  add_list("sigmas", sigmas);
  add_list("frs", frs);
  add_d("Re", Re);
  add_d("Ro", Ro);
  add_d("alpha1", alpha1);
  add_d("alpha2", alpha2);
  add("forcing", forcing.kind == ForcingSpec::Kind::zero ? "zero" : "sin_pi_y");
  add_d("forcing_amplitude", forcing.amplitude);
  add_d("dt", dt);
  add_d("window_start", window.start);
  add_d("window_end", window.end);
  add_d("stride", window.stride);
  add_d("solver_tol", solver_tol);
  add("solver_max_iter", std::to_string(solver_max_iter));
  Fnv1a h;
  h.update(s.data(), s.size());
  return h.digest();
}

CoefficientTable RomArtifacts::coefficients(Variable v) const {
  return modal_coefficients(basis(v), snaps(v));
}

SnapshotSeries run_fom(const SweepPlan& plan, const Eigen::VectorXd& mu,
                       const SnapshotWindow& window, std::ostream* log,
                       RunStats* stats) {
  const PhysParams params = plan.params_for(mu);
  SnapshotSeries series =
      run_simulation(plan.make_grid(), params, plan.dt, window.end, window,
                     plan.solver_options(), log, stats);
  series.mu = mu;
  return series;
}

namespace {

std::string snapshot_file(Variable v) {
  return std::string("snapshots_") + variable_name(v) + ".qgs";
}
std::string basis_file(Variable v) {
  return std::string("basis_") + variable_name(v) + ".qgb";
}
std::string model_file(Variable v) {
  return std::string("model_") + variable_name(v) + ".qgm";
}
std::string loss_file(Variable v) {
  return std::string("loss_") + variable_name(v) + ".csv";
}

}  // namespace

RomArtifacts offline(const SweepPlan& plan, const OfflineConfig& cfg,
                     std::ostream* log, int jobs) {
  plan.validate();
  if (cfg.n_modes < 1) throw InvalidArgument("offline: n_modes must be >= 1");
  const std::uint64_t fp = plan.fingerprint();

  RomArtifacts art;
  art.fingerprint = fp;
  art.plan = plan;

  const int m = plan.n_samples();
  bool loaded_from_cache = false;
  if (!cfg.out_dir.empty()) {
    // reuse a previous sweep when every snapshot archive is present
    bool all_present = true;
    for (int v = 0; v < kNumVariables; ++v)
      if (!fs::exists(fs::path(cfg.out_dir) /
                      snapshot_file(static_cast<Variable>(v))))
        all_present = false;
    if (all_present) {
      for (int v = 0; v < kNumVariables; ++v) {
        const auto path =
            (fs::path(cfg.out_dir) / snapshot_file(static_cast<Variable>(v)))
                .string();
        SnapshotMatrix s = read_snapshots(path);
        if (s.fingerprint != fp)
          throw InvalidArgument("offline: cached " + path +
                                " carries a different sweep fingerprint; "
                                "remove stale artifacts or change out_dir");
        art.snapshots[v] = std::move(s);
      }
      loaded_from_cache = true;
      if (log) *log << "offline: reusing cached snapshot archives\n";
    }
  }

  if (!loaded_from_cache) {
    std::vector<SnapshotSeries> series(m);
    if (jobs <= 1 || m == 1) {
      for (int k = 0; k < m; ++k) {
        if (log)
          *log << "offline: FOM sample " << (k + 1) << "/" << m << " mu=("
               << plan.mu_at(k).transpose() << ")\n";
        series[k] = run_fom(plan, plan.mu_at(k), plan.window, log);
      }
    } else {
      std::atomic<int> next{0};
      std::vector<std::thread> workers;
      std::vector<std::exception_ptr> errors(jobs);
      const int n_workers = std::min(jobs, m);
      for (int w = 0; w < n_workers; ++w)
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
    for (int v = 0; v < kNumVariables; ++v)
      art.snapshots[v] = assemble_matrix(series, static_cast<Variable>(v), fp);
  }

  BasisProvenance prov;
  prov.randomized = !cfg.use_deterministic_pod;
  prov.oversample = cfg.rpod.oversample;
  prov.power_iterations = cfg.rpod.power_iterations;
  prov.seed = cfg.rpod.seed;
  for (int v = 0; v < kNumVariables; ++v) {
    const auto& S = art.snapshots[v];
    RpodConfig rc = cfg.rpod;
    rc.rank = cfg.n_modes;
    const SvdTriple svd =
        cfg.use_deterministic_pod ? deterministic_pod(S) : rpod(S, rc);
    art.bases[v] = truncate_basis(svd, static_cast<Variable>(v), cfg.n_modes,
                                  prov, fp);
    if (log)
      *log << "offline: basis " << variable_name(static_cast<Variable>(v))
           << " retained sigma_1=" << svd.sigma[0] << "\n";
  }

  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const CoefficientTable table = art.coefficients(var);
    SequenceDataset ds = build_dataset(table, art.snapshots[v].parameters,
                                       art.snapshots[v].times, cfg.lookback);
    LstmHyper hyper =
        (var == Variable::q1 || var == Variable::q2) ? cfg.hyper_q
                                                     : cfg.hyper_psi;
    hyper.lookback = cfg.lookback;
    const std::uint64_t seed = cfg.lstm_seed + static_cast<std::uint64_t>(v);
    if (log)
      *log << "offline: training " << variable_name(var) << " ("
           << ds.size() << " windows)\n";
    TrainResult tr = train(ds, hyper, seed);
    if (log)
      *log << "offline: " << variable_name(var)
           << " final train mse=" << tr.train_loss.back() << "\n";
    art.models[v] = std::move(tr.model);
    if (!cfg.out_dir.empty())
      write_loss_history_csv(tr, (fs::path(cfg.out_dir) / loss_file(var)).string());
  }

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    for (int v = 0; v < kNumVariables; ++v) {
      const Variable var = static_cast<Variable>(v);
      if (!loaded_from_cache)
        write_snapshots(art.snapshots[v],
                        (fs::path(cfg.out_dir) / snapshot_file(var)).string());
      write_basis(art.bases[v],
                  (fs::path(cfg.out_dir) / basis_file(var)).string());
      write_model(art.models[v],
                  (fs::path(cfg.out_dir) / model_file(var)).string());
    }
    write_manifest(art, cfg, cfg.out_dir);
  }
  return art;
}

int nearest_sample(const Eigen::VectorXd& mu, const Eigen::MatrixXd& samples,
                   bool scale_by_range) {
  if (samples.rows() == 0) throw InvalidArgument("nearest_sample: no samples");
  if (mu.size() != samples.cols())
    throw InvalidArgument("nearest_sample: dimension mismatch (mu has " +
                          std::to_string(mu.size()) + ", table has " +
                          std::to_string(samples.cols()) + ")");
  Eigen::VectorXd weight = Eigen::VectorXd::Ones(mu.size());
  if (scale_by_range) {
    const Eigen::VectorXd range = samples.colwise().maxCoeff().transpose() -
                                  samples.colwise().minCoeff().transpose();
    for (Eigen::Index c = 0; c < range.size(); ++c)
      weight[c] = range[c] > 0.0 ? 1.0 / range[c] : 1.0;
  }
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples.rows(); ++k) {
    const double d2 =
        ((samples.row(k).transpose() - mu).cwiseProduct(weight)).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return best;
}

std::vector<Field> reconstruct(const RomArtifacts& artifacts, Variable v,
                               const Eigen::VectorXd& mu,
                               const std::vector<double>& horizon_times,
                               CoefficientSource source) {
  const SnapshotMatrix& snaps = artifacts.snaps(v);
  const ReducedBasis& basis = artifacts.basis(v);
  if (basis.modes.size() == 0 || snaps.data.size() == 0)
    throw InvalidArgument("reconstruct: artifacts incomplete for " +
                          std::string(variable_name(v)));
  const int k = nearest_sample(mu, snaps.parameters);
  const Eigen::VectorXd avg = snaps.averages.col(k);

  Eigen::MatrixXd coeffs;  // steps x N_r
  if (source == CoefficientSource::lstm) {
    const LstmModel& model = artifacts.model(v);
    if (model.layers.empty())
      throw InvalidArgument("reconstruct: no trained model for " +
                            std::string(variable_name(v)));
    const int T = model.hyper.lookback;
    const int nt = snaps.n_times();
    if (T > nt)
      throw InvalidArgument("reconstruct: lookback exceeds training window");
    const int n_modes = basis.n_modes();
    Eigen::MatrixXd seed(T, model.input_width);
    for (int r = 0; r < T; ++r) {
      const int p = nt - 1 - r;  // newest first
      seed.block(r, 0, 1, mu.size()) = mu.transpose();
      seed(r, mu.size()) = snaps.times[p];
      seed.block(r, static_cast<int>(mu.size()) + 1, 1, n_modes) =
          (basis.modes.transpose() * snaps.data.col(snaps.column_index(k, p)))
              .transpose();
    }
    coeffs = predict_autoregressive(artifacts.model(v), seed, mu, horizon_times)
                 .coeffs;
  } else {
    coeffs.resize(static_cast<Eigen::Index>(horizon_times.size()),
                  basis.n_modes());
    for (std::size_t i = 0; i < horizon_times.size(); ++i) {
      const double t = horizon_times[i];
      int p = -1;
      for (int pp = 0; pp < snaps.n_times(); ++pp)
        if (std::abs(snaps.times[pp] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
          p = pp;
          break;
        }
      if (p < 0)
        throw InvalidArgument(
            "reconstruct: time " + format_full(t) +
            " is not a training instant (training-table coefficients)");
      coeffs.row(static_cast<Eigen::Index>(i)) =
          (basis.modes.transpose() * snaps.data.col(snaps.column_index(k, p)))
              .transpose();
    }
  }

  std::vector<Field> out;
  out.reserve(horizon_times.size());
  for (Eigen::Index i = 0; i < coeffs.rows(); ++i)
    out.emplace_back(snaps.grid,
                     avg + basis.modes * coeffs.row(i).transpose());
  return out;
}

double relative_l2_error(const Field& fom_mean, const Field& rom_mean) {
  if (!fom_mean.grid().same_geometry(rom_mean.grid()))
    throw InvalidArgument("relative_l2_error: grids differ");
  const double denom = l2_norm(fom_mean);
  if (denom == 0.0)
    throw InvalidArgument("relative_l2_error: zero reference norm");
  const Field diff(fom_mean.grid_ptr(),
                   fom_mean.values() - rom_mean.values());
  return l2_norm(diff) / denom;
}

ErrorReport evaluate(const RomArtifacts& artifacts, const Eigen::VectorXd& mu,
                     const SnapshotSeries& fom_reference) {
  fom_reference.check_consistent();
  if (!fom_reference.grid()->same_geometry(*artifacts.snaps(Variable::q1).grid))
    throw InvalidArgument("evaluate: reference grid differs from artifacts");

  ErrorReport rep;
  rep.mu = mu;
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const std::vector<Field> rom =
        reconstruct(artifacts, var, mu, fom_reference.times);
    Eigen::VectorXd rom_mean =
        Eigen::VectorXd::Zero(rom.front().values().size());
    for (const auto& f : rom) rom_mean += f.values();
    rom_mean /= static_cast<double>(rom.size());

    const Field fom_mean = time_average(fom_reference, var);
    if (l2_norm(fom_mean) == 0.0) {
      rep.undefined[v] = true;
      rep.eps[v] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    rep.eps[v] = relative_l2_error(fom_mean,
                                   Field(fom_mean.grid_ptr(), rom_mean));
  }
  return rep;
}

double consistency_error(const RomArtifacts& artifacts, Variable v,
                         int sample_index) {
  const SnapshotMatrix& snaps = artifacts.snaps(v);
  if (sample_index < 0 || sample_index >= snaps.n_samples())
    throw InvalidArgument("consistency_error: sample index out of range");
  const Eigen::VectorXd mu = snaps.parameters.row(sample_index).transpose();
  const std::vector<Field> rec = reconstruct(
      artifacts, v, mu, snaps.times, CoefficientSource::training_table);

  const int nt = snaps.n_times();
  const Eigen::VectorXd avg = snaps.averages.col(sample_index);
  double num = 0.0, den = 0.0;
  for (int p = 0; p < nt; ++p) {
    const Eigen::VectorXd fluct =
        snaps.data.col(snaps.column_index(sample_index, p));
    const Eigen::VectorXd rec_fluct = rec[p].values() - avg;
    num += (fluct - rec_fluct).squaredNorm();
    den += fluct.squaredNorm();
  }
  if (den == 0.0)
    throw InvalidArgument("consistency_error: zero fluctuations for sample " +
                          std::to_string(sample_index));
  return std::sqrt(num / den);
}

BenchmarkReport benchmark(const RomArtifacts& artifacts,
                          const std::vector<double>& horizon_times,
                          const Eigen::MatrixXd* pod_matrix,
                          std::ostream* log) {
  using clock = std::chrono::steady_clock;
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  BenchmarkReport rep;
  {
    if (log) *log << "bench: timing one FOM run\n";
    const auto t0 = clock::now();
    (void)run_fom(artifacts.plan, artifacts.plan.mu_at(0),
                  artifacts.plan.window, nullptr);
    rep.phases.push_back({"fom_run", seconds_since(t0), 1.0});
  }

  const Eigen::MatrixXd& S =
      pod_matrix ? *pod_matrix : artifacts.snaps(Variable::q1).data;
  double pod_seconds = 0.0;
  {
    if (log)
      *log << "bench: deterministic POD on " << S.rows() << "x" << S.cols()
           << "\n";
    const auto t0 = clock::now();
    (void)deterministic_pod(S);
    pod_seconds = seconds_since(t0);
    rep.phases.push_back({"pod", pod_seconds, 1.0});
  }
  {
    RpodConfig rc;
    const auto& prov = artifacts.basis(Variable::q1).provenance;
    rc.rank = std::max(1, artifacts.basis(Variable::q1).n_modes());
    rc.oversample = prov.randomized ? prov.oversample : 75;
    rc.power_iterations = prov.randomized ? std::max(1, prov.power_iterations) : 1;
    rc.seed = prov.seed;
    if (log) *log << "bench: rPOD rank=" << rc.rank << " p=" << rc.oversample << "\n";
    const auto t0 = clock::now();
    (void)rpod(S, rc);
    const double s = seconds_since(t0);
    rep.phases.push_back({"rpod", s, s > 0.0 ? pod_seconds / s : 0.0});
  }
  {
    if (log) *log << "bench: online reconstruction\n";
    const Eigen::VectorXd mu = artifacts.plan.mu_at(0);
    const auto t0 = clock::now();
    for (int v = 0; v < kNumVariables; ++v)
      (void)reconstruct(artifacts, static_cast<Variable>(v), mu, horizon_times);
    const double s = seconds_since(t0);
    rep.phases.push_back(
        {"online_reconstruct", s, s > 0.0 ? rep.phases[0].seconds / s : 0.0});
  }
  return rep;
}

void write_benchmark_csv(const BenchmarkReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "phase,seconds,speedup_vs_baseline\n";
  for (const auto& p : report.phases)
    os << p.phase << ',' << format_full(p.seconds) << ','
       << format_full(p.speedup) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

void write_error_csv(const std::vector<ErrorReport>& reports,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "delta,sigma,fr,eps_q1,eps_q2,eps_psi1,eps_psi2\n";
  for (const auto& r : reports) {
    for (Eigen::Index c = 0; c < r.mu.size(); ++c)
      os << format_full(r.mu[c]) << ',';
    for (int v = 0; v < kNumVariables; ++v)
      os << format_full(r.eps[v]) << (v + 1 < kNumVariables ? "," : "\n");
  }
  if (!os) throw IoError("failed writing " + path);
}

void write_manifest(const RomArtifacts& artifacts, const OfflineConfig& cfg,
                    const std::string& dir) {
  nlohmann::json j;
  j["format"] = "qgrom-manifest-v1";
  j["fingerprint"] = fingerprint_to_hex(artifacts.fingerprint);
  j["plan"] = plan_to_json(artifacts.plan);
  j["reduction"] = {{"method", cfg.use_deterministic_pod ? "pod" : "rpod"},
                    {"rank", cfg.n_modes},
                    {"oversample", cfg.rpod.oversample},
                    {"power", cfg.rpod.power_iterations},
                    {"seed", cfg.rpod.seed}};
  j["lstm"] = {{"lookback", cfg.lookback},
               {"seed", cfg.lstm_seed},
               {"hyper_q", hyper_to_json(cfg.hyper_q)},
               {"hyper_psi", hyper_to_json(cfg.hyper_psi)}};
  nlohmann::json files;
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    files["snapshots"][variable_name(var)] = snapshot_file(var);
    files["bases"][variable_name(var)] = basis_file(var);
    files["models"][variable_name(var)] = model_file(var);
  }
  j["files"] = files;

  std::ofstream os(fs::path(dir) / "rom-manifest.json");
  if (!os) throw IoError("cannot write manifest in " + dir);
  os << j.dump(2) << '\n';
}

RomArtifacts load_artifacts(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest " + manifest_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(manifest_path + ": " + e.what());
  }
  if (j.value("format", "") != "qgrom-manifest-v1")
    throw FormatError(manifest_path + ": not a qgrom manifest");

  RomArtifacts art;
  art.plan = plan_from_json(j.at("plan"), "plan");
  art.fingerprint = fingerprint_from_hex(j.at("fingerprint").get<std::string>());
  if (art.plan.fingerprint() != art.fingerprint)
    throw InvalidArgument(manifest_path +
                          ": stored fingerprint does not match the plan");

  const fs::path dir = fs::path(manifest_path).parent_path();
  const auto& files = j.at("files");
  for (int v = 0; v < kNumVariables; ++v) {
    const Variable var = static_cast<Variable>(v);
    const std::string name = variable_name(var);
    const auto snap_path =
        (dir / files.at("snapshots").at(name).get<std::string>()).string();
    art.snapshots[v] = read_snapshots(snap_path);
    if (art.snapshots[v].fingerprint != art.fingerprint)
      throw InvalidArgument("manifest fingerprint does not match " + snap_path);
    const auto basis_path =
        (dir / files.at("bases").at(name).get<std::string>()).string();
    art.bases[v] = read_basis(basis_path);
    if (art.bases[v].fingerprint != art.fingerprint)
      throw InvalidArgument("manifest fingerprint does not match " + basis_path);
    const auto model_path =
        (dir / files.at("models").at(name).get<std::string>()).string();
    art.models[v] = read_model(model_path);
  }
  return art;
}

}  // namespace qgrom
