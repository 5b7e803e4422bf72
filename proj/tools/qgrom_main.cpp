// qgrom command-line front end. Builds a JSON config from the subcommand's
// flags (optionally starting from --config FILE) and hands it to the shared
// library through the C API.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "qgrom/qgrom.h"

namespace {

using nlohmann::json;

// Relative paths resolve under QGROM_DATA_DIR when it is set.
std::string resolve_path(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  const char* root = std::getenv("QGROM_DATA_DIR");
  if (root == nullptr || *root == '\0') return path;
  std::string out = root;
  if (out.back() != '/') out += '/';
  return out + path;
}

json load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    std::cerr << "error: cannot open config file " << path << "\n";
    std::exit(1);
  }
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    std::cerr << "error: " << path << ": " << e.what() << "\n";
    std::exit(1);
  }
}

int exit_code_for(qgrom_status status) {
  switch (status) {
    case QGROM_OK: return 0;
    case QGROM_ERR_INVALID_ARGUMENT:
    case QGROM_ERR_IO:
    case QGROM_ERR_FORMAT: return 1;
    case QGROM_ERR_NUMERIC:
    case QGROM_ERR_INTERNAL: return 2;
  }
  return 2;
}

int run(const std::string& command, const json& config) {
  const std::string text = config.dump();
  const qgrom_status status = qgrom_run(command.c_str(), text.c_str());
  if (status != QGROM_OK)
    std::cerr << "error (" << qgrom_status_name(status)
              << "): " << qgrom_last_error() << "\n";
  return exit_code_for(status);
}

json window_json(double start, double end, double stride) {
  return {{"start", start}, {"end", end}, {"stride", stride}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-layer quasi-geostrophic solver with an rPOD-LSTM reduced order model"};
  app.require_subcommand(1);
  bool json_log = false;
  app.add_flag("--json-log", json_log,
               "emit machine-readable stage events on stdout");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "run one full-order simulation");
  std::string sim_config;
  double sim_dt = -1, sim_t_end = -1;
  std::string sim_out, sim_tag;
  sim->add_option("--config", sim_config, "JSON config file")->required();
  sim->add_option("--dt", sim_dt, "time step override");
  sim->add_option("--t-end", sim_t_end, "final time override");
  sim->add_option("--out", sim_out, "output directory override");
  sim->add_option("--tag", sim_tag, "output file tag");

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "run the parameter sweep");
  std::string sweep_config, sweep_out;
  int sweep_jobs = 1;
  sweep->add_option("--config", sweep_config, "JSON config file")->required();
  sweep->add_option("--jobs", sweep_jobs, "parallel full-order runs");
  sweep->add_option("--out", sweep_out, "output directory override");

  // ---- pod / rpod ----
  std::string dec_in, dec_manifest, dec_out, dec_spectrum;
  int dec_rank = 10, dec_oversample = 75, dec_power = 1;
  std::uint64_t dec_seed = 0;
  double dec_energy = 0.0;
  auto add_decompose_opts = [&](CLI::App* cmd, bool randomized) {
    cmd->add_option("--in", dec_in, "snapshot archive (.qgs)");
    cmd->add_option("--manifest", dec_manifest,
                    "rom-manifest.json (all four variables)");
    cmd->add_option("--rank", dec_rank, "modes to retain");
    if (randomized) {
      cmd->add_option("--oversample", dec_oversample, "extra sketch columns p");
      cmd->add_option("--power", dec_power, "subspace iterations q");
      cmd->add_option("--seed", dec_seed, "sketch seed");
    }
    cmd->add_option("--out", dec_out, "basis archive to write");
    cmd->add_option("--spectrum", dec_spectrum, "singular-value CSV to write");
    cmd->add_option("--energy-threshold", dec_energy,
                    "report the rank reaching this singular-value fraction");
  };
  auto* pod = app.add_subcommand("pod", "deterministic POD of a snapshot matrix");
  add_decompose_opts(pod, false);
  auto* rpodc = app.add_subcommand("rpod", "randomized POD of a snapshot matrix");
  add_decompose_opts(rpodc, true);

  // ---- train ----
  auto* trainc = app.add_subcommand("train", "train the four LSTM forecasters");
  std::string train_manifest, train_config;
  int train_lookback = 3;
  std::uint64_t train_seed = 1;
  trainc->add_option("--manifest", train_manifest, "rom-manifest.json")->required();
  trainc->add_option("--lookback", train_lookback, "window length sigma_L");
  trainc->add_option("--seed", train_seed, "training seed");
  trainc->add_option("--config", train_config,
                     "JSON file with hyper_q / hyper_psi overrides");

  // ---- predict ----
  auto* predict = app.add_subcommand("predict", "online rollout at one parameter point");
  std::string pred_manifest, pred_out, pred_tag = "predict";
  std::vector<double> pred_mu;
  double pred_start = 0, pred_end = 0, pred_stride = 0;
  predict->add_option("--manifest", pred_manifest, "rom-manifest.json")->required();
  predict->add_option("--mu", pred_mu, "parameter point: delta sigma fr")
      ->expected(3)
      ->required();
  predict->add_option("--start", pred_start, "horizon start (exclusive)")->required();
  predict->add_option("--end", pred_end, "horizon end (inclusive)")->required();
  predict->add_option("--stride", pred_stride, "horizon stride")->required();
  predict->add_option("--out", pred_out, "output directory")->required();
  predict->add_option("--tag", pred_tag, "output file tag");

  // ---- evaluate ----
  auto* eval = app.add_subcommand("evaluate", "reduced-vs-full errors at test points");
  std::string eval_manifest, eval_out;
  std::vector<double> eval_mu;
  int eval_count = 0;
  std::uint64_t eval_seed = 0;
  bool eval_seed_set = false;
  double eval_start = 0, eval_end = 0, eval_stride = 0;
  eval->add_option("--manifest", eval_manifest, "rom-manifest.json")->required();
  eval->add_option("--mu", eval_mu,
                   "explicit test point(s), 3 values each (repeatable)");
  eval->add_option("--count", eval_count, "number of random test points");
  eval->add_option("--seed", eval_seed, "random test point seed")
      ->each([&](const std::string&) { eval_seed_set = true; });
  eval->add_option("--start", eval_start, "horizon start (exclusive)")->required();
  eval->add_option("--end", eval_end, "horizon end (inclusive)")->required();
  eval->add_option("--stride", eval_stride, "horizon stride")->required();
  eval->add_option("--out", eval_out, "error CSV to write")->required();

  // ---- bench ----
  auto* bench = app.add_subcommand("bench", "timing report for the three phases");
  std::string bench_manifest, bench_out;
  double bench_start = 0, bench_end = 0, bench_stride = 0;
  int bench_rows = 0, bench_cols = 0;
  std::uint64_t bench_matrix_seed = 0;
  bench->add_option("--manifest", bench_manifest, "rom-manifest.json")->required();
  bench->add_option("--start", bench_start, "horizon start (exclusive)")->required();
  bench->add_option("--end", bench_end, "horizon end (inclusive)")->required();
  bench->add_option("--stride", bench_stride, "horizon stride")->required();
  bench->add_option("--rows", bench_rows, "synthetic matrix rows (with --cols)");
  bench->add_option("--cols", bench_cols, "synthetic matrix cols");
  bench->add_option("--matrix-seed", bench_matrix_seed, "synthetic matrix seed");
  bench->add_option("--out", bench_out, "timing CSV to write")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      json cfg = load_config_file(resolve_path(sim_config));
      if (sim_dt > 0) cfg["time"]["dt"] = sim_dt;
      if (sim_t_end >= 0) cfg["time"]["t_end"] = sim_t_end;
      if (!sim_out.empty()) cfg["output"]["dir"] = resolve_path(sim_out);
      else if (cfg.contains("output") && cfg["output"].contains("dir"))
        cfg["output"]["dir"] = resolve_path(cfg["output"]["dir"].get<std::string>());
      if (!sim_tag.empty()) cfg["output"]["tag"] = sim_tag;
      if (json_log) cfg["json_log"] = true;
      return run("simulate", cfg);
    }
    if (sweep->parsed()) {
      json cfg = load_config_file(resolve_path(sweep_config));
      if (!sweep_out.empty()) cfg["output"]["dir"] = resolve_path(sweep_out);
      else if (cfg.contains("output") && cfg["output"].contains("dir"))
        cfg["output"]["dir"] = resolve_path(cfg["output"]["dir"].get<std::string>());
      if (sweep_jobs > 1) cfg["jobs"] = sweep_jobs;
      if (json_log) cfg["json_log"] = true;
      return run("sweep", cfg);
    }
    if (pod->parsed() || rpodc->parsed()) {
      json cfg;
      if (!dec_in.empty()) cfg["in"] = resolve_path(dec_in);
      if (!dec_manifest.empty()) cfg["manifest"] = resolve_path(dec_manifest);
      cfg["rank"] = dec_rank;
      if (rpodc->parsed()) {
        cfg["oversample"] = dec_oversample;
        cfg["power"] = dec_power;
        cfg["seed"] = dec_seed;
      }
      if (!dec_out.empty()) cfg["out_basis"] = resolve_path(dec_out);
      if (!dec_spectrum.empty()) cfg["spectrum_csv"] = resolve_path(dec_spectrum);
      if (dec_energy > 0) cfg["energy_threshold"] = dec_energy;
      if (json_log) cfg["json_log"] = true;
      return run(pod->parsed() ? "pod" : "rpod", cfg);
    }
    if (trainc->parsed()) {
      json cfg;
      if (!train_config.empty()) cfg = load_config_file(resolve_path(train_config));
      cfg["manifest"] = resolve_path(train_manifest);
      cfg["lookback"] = train_lookback;
      cfg["seed"] = train_seed;
      if (json_log) cfg["json_log"] = true;
      return run("train", cfg);
    }
    if (predict->parsed()) {
      json cfg;
      cfg["manifest"] = resolve_path(pred_manifest);
      cfg["mu"] = pred_mu;
      cfg["horizon"] = window_json(pred_start, pred_end, pred_stride);
      cfg["output"] = {{"dir", resolve_path(pred_out)}, {"tag", pred_tag}};
      if (json_log) cfg["json_log"] = true;
      return run("predict", cfg);
    }
    if (eval->parsed()) {
      json cfg;
      cfg["manifest"] = resolve_path(eval_manifest);
      cfg["horizon"] = window_json(eval_start, eval_end, eval_stride);
      if (!eval_mu.empty()) {
        if (eval_mu.size() % 3 != 0) {
          std::cerr << "error: --mu needs 3 values per test point\n";
          return 1;
        }
        json points = json::array();
        for (std::size_t i = 0; i < eval_mu.size(); i += 3)
          points.push_back({eval_mu[i], eval_mu[i + 1], eval_mu[i + 2]});
        cfg["test_points"] = points;
      } else {
        if (eval_count <= 0 || !eval_seed_set) {
          std::cerr << "error: random test points need --count and --seed\n";
          return 1;
        }
        cfg["test_points"] = {{"count", eval_count}, {"seed", eval_seed}};
      }
      cfg["out_csv"] = resolve_path(eval_out);
      if (json_log) cfg["json_log"] = true;
      return run("evaluate", cfg);
    }
    if (bench->parsed()) {
      json cfg;
      cfg["manifest"] = resolve_path(bench_manifest);
      cfg["horizon"] = window_json(bench_start, bench_end, bench_stride);
      if (bench_rows > 0 && bench_cols > 0)
        cfg["matrix"] = {{"rows", bench_rows},
                         {"cols", bench_cols},
                         {"seed", bench_matrix_seed}};
      cfg["out_csv"] = resolve_path(bench_out);
      if (json_log) cfg["json_log"] = true;
      return run("bench", cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
