#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/common.hpp"
#include "core/jsoncfg.hpp"
#include "core/pipeline.hpp"
#include "core/workflows.hpp"

using namespace qgrom;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

json tiny_sweep_config(const std::string& out_dir) {
  return json{
      {"grid",
       {{"nx", 8}, {"ny", 16}, {"x0", 0.0}, {"xf", 1.0}, {"y_lo", -1.0},
        {"y_hi", 1.0}}},
      {"sweep",
       {{"delta", {0.35, 0.5}},
        {"sigma", {0.008}},
        {"fr", {0.1}},
        {"Re", 450.0},
        {"Ro", 0.001},
        {"alpha1", 0.125},
        {"alpha2", 0.125},
        {"forcing", {{"type", "sin_pi_y"}, {"amplitude", 1.0}}}}},
      {"time", {{"dt", 2.5e-3}}},
      {"snapshots", {{"start", 0.5}, {"end", 1.0}, {"stride", 0.1}}},
      {"solver", {{"tol", 1e-8}, {"max_iter", 0}}},
      {"output", {{"dir", out_dir}}}};
}

// sweep -> rpod -> train, once, into a shared directory
const fs::path& staged_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "qgrom_workflows_fixture";
    fs::remove_all(d);
    fs::create_directories(d);
    WorkflowContext ctx;  // silent
    cmd_sweep(tiny_sweep_config(d.string()), ctx);
    run_command("rpod",
                json{{"manifest", (d / "rom-manifest.json").string()},
                     {"rank", 3},
                     {"oversample", 5},
                     {"power", 1},
                     {"seed", 7}}
                    .dump(),
                ctx);
    run_command("train",
                json{{"manifest", (d / "rom-manifest.json").string()},
                     {"lookback", 2},
                     {"seed", 3},
                     {"hyper_q",
                      {{"layers", 1}, {"cells", 6}, {"batch_size", 4},
                       {"epochs", 15}}},
                     {"hyper_psi",
                      {{"layers", 2}, {"cells", 6}, {"batch_size", 4},
                       {"epochs", 15}, {"dropout", 0.1}}}}
                    .dump(),
                ctx);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("workflows") {

TEST_CASE("unknown config keys are rejected with their path") {
  WorkflowContext ctx;
  json cfg = tiny_sweep_config("/tmp/unused");
  cfg["grid"]["nz"] = 4;
  CHECK_THROWS_WITH_AS(cmd_sweep(cfg, ctx), doctest::Contains("/grid/nz"),
                       InvalidArgument);
}

TEST_CASE("missing fields name the offending path") {
  WorkflowContext ctx;
  json cfg = tiny_sweep_config("/tmp/unused");
  cfg["time"].erase("dt");
  CHECK_THROWS_WITH_AS(cmd_sweep(cfg, ctx), doctest::Contains("/time"),
                       InvalidArgument);
}

TEST_CASE("malformed json text is a validation error") {
  WorkflowContext ctx;
  CHECK_THROWS_WITH_AS(run_command("sweep", "{not json", ctx),
                       doctest::Contains("parse error"), InvalidArgument);
  CHECK_THROWS_AS(run_command("frobnicate", "{}", ctx), InvalidArgument);
}

TEST_CASE("simulate with an empty collection window warns and writes nothing") {
  const fs::path dir = fs::temp_directory_path() / "qgrom_sim_empty";
  fs::remove_all(dir);
  json cfg{{"grid",
            {{"nx", 4}, {"ny", 4}, {"x0", 0.0}, {"xf", 1.0}, {"y_lo", -1.0},
             {"y_hi", 1.0}}},
           {"params",
            {{"Re", 450.0}, {"Ro", 0.001}, {"Fr", 0.1}, {"delta", 0.4},
             {"sigma", 0.008}, {"alpha1", 0.25}, {"alpha2", 0.25}}},
           {"time", {{"dt", 1e-3}, {"t_end", 5e-3}}},
           {"snapshots", {{"start", 1.0}, {"end", 2.0}, {"stride", 0.1}}},
           {"output", {{"dir", dir.string()}}}};
  std::ostringstream log;
  WorkflowContext ctx;
  ctx.log = &log;
  cmd_simulate(cfg, ctx);  // must not throw
  CHECK(log.str().find("no snapshots") != std::string::npos);
  CHECK(!fs::exists(dir / "sim_q1.qgs"));
  fs::remove_all(dir);
}

TEST_CASE("simulate writes one archive per variable") {
  const fs::path dir = fs::temp_directory_path() / "qgrom_sim_out";
  fs::remove_all(dir);
  json cfg{{"grid",
            {{"nx", 4}, {"ny", 8}, {"x0", 0.0}, {"xf", 1.0}, {"y_lo", -1.0},
             {"y_hi", 1.0}}},
           {"params",
            {{"Re", 450.0}, {"Ro", 0.001}, {"Fr", 0.1}, {"delta", 0.4},
             {"sigma", 0.008}, {"alpha1", 0.25}, {"alpha2", 0.25}}},
           {"time", {{"dt", 2.5e-3}, {"t_end", 0.2}}},
           {"snapshots", {{"start", 0.0}, {"end", 0.2}, {"stride", 0.05}}},
           {"output", {{"dir", dir.string()}, {"tag", "run"}}}};
  WorkflowContext ctx;
  cmd_simulate(cfg, ctx);
  for (const char* v : {"q1", "q2", "psi1", "psi2"}) {
    const SnapshotMatrix m =
        read_snapshots((dir / ("run_" + std::string(v) + ".qgs")).string());
    CHECK(m.n_times() == 5);
    CHECK(m.n_samples() == 1);
  }
  fs::remove_all(dir);
}

TEST_CASE("staged sweep/rpod/train pipeline yields loadable artifacts") {
  const fs::path& dir = staged_dir();
  const RomArtifacts art = load_artifacts((dir / "rom-manifest.json").string());
  for (int v = 0; v < kNumVariables; ++v) {
    CHECK(art.bases[v].n_modes() == 3);
    CHECK(art.snapshots[v].n_times() == 6);
    CHECK(!art.models[v].layers.empty());
  }
  CHECK(fs::exists(dir / "spectrum_q1.csv"));
  CHECK(fs::exists(dir / "loss_psi2.csv"));
}

TEST_CASE("predict emits coefficient and mean-field csvs") {
  const fs::path& dir = staged_dir();
  WorkflowContext ctx;
  run_command("predict",
              json{{"manifest", (dir / "rom-manifest.json").string()},
                   {"mu", {0.4, 0.008, 0.1}},
                   {"horizon", {{"start", 1.0}, {"end", 1.3}, {"stride", 0.1}}},
                   {"output", {{"dir", (dir / "pred").string()}}}}
                  .dump(),
              ctx);
  const std::string coeffs = slurp(dir / "pred" / "predict_coeffs_q1.csv");
  CHECK(coeffs.find("t,c1,c2,c3\n") == 0);
  CHECK(std::count(coeffs.begin(), coeffs.end(), '\n') == 4);  // header + 3
  const std::string mean = slurp(dir / "pred" / "predict_mean_psi1.csv");
  CHECK(mean.find("x,y,value\n") == 0);
}

TEST_CASE("evaluate writes the error csv and reruns byte-identically") {
  const fs::path& dir = staged_dir();
  WorkflowContext ctx;
  const json cfg{{"manifest", (dir / "rom-manifest.json").string()},
                 {"horizon", {{"start", 1.0}, {"end", 1.2}, {"stride", 0.1}}},
                 {"test_points", {{0.4, 0.008, 0.1}}},
                 {"out_csv", (dir / "errors.csv").string()}};
  run_command("evaluate", cfg.dump(), ctx);
  const std::string first = slurp(dir / "errors.csv");
  CHECK(first.find("delta,sigma,fr,eps_q1,eps_q2,eps_psi1,eps_psi2\n") == 0);

  // second run hits the reference cache and reproduces the csv byte for byte
  run_command("evaluate", cfg.dump(), ctx);
  CHECK(slurp(dir / "errors.csv") == first);
  CHECK(fs::exists(dir / "references"));
}

TEST_CASE("random test points require a seed") {
  const fs::path& dir = staged_dir();
  WorkflowContext ctx;
  const json cfg{{"manifest", (dir / "rom-manifest.json").string()},
                 {"horizon", {{"start", 1.0}, {"end", 1.1}, {"stride", 0.1}}},
                 {"test_points", {{"count", 2}}},
                 {"out_csv", (dir / "errors2.csv").string()}};
  CHECK_THROWS_WITH_AS(run_command("evaluate", cfg.dump(), ctx),
                       doctest::Contains("seed"), InvalidArgument);
}

TEST_CASE("fingerprint tampering is rejected before any output") {
  const fs::path& dir = staged_dir();
  const fs::path tampered = dir / "tampered";
  fs::create_directories(tampered);
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".json" || ext == ".qgs" || ext == ".qgb" || ext == ".qgm")
      fs::copy_file(entry.path(), tampered / entry.path().filename(),
                    fs::copy_options::overwrite_existing);
  }

  json manifest = parse_json_text(slurp(tampered / "rom-manifest.json"));
  manifest["plan"]["time"]["dt"] = 1e-3;  // plan no longer matches fingerprint
  std::ofstream(tampered / "rom-manifest.json") << manifest.dump(2);

  WorkflowContext ctx;
  const json cfg{{"manifest", (tampered / "rom-manifest.json").string()},
                 {"horizon", {{"start", 1.0}, {"end", 1.1}, {"stride", 0.1}}},
                 {"test_points", {{0.4, 0.008, 0.1}}},
                 {"out_csv", (tampered / "errors.csv").string()}};
  CHECK_THROWS_WITH_AS(run_command("evaluate", cfg.dump(), ctx),
                       doctest::Contains("fingerprint"), InvalidArgument);
  CHECK(!fs::exists(tampered / "errors.csv"));
  fs::remove_all(tampered);
}

TEST_CASE("standalone rpod on a single archive matches the spec invocation") {
  const fs::path& dir = staged_dir();
  WorkflowContext ctx;
  run_command("rpod",
              json{{"in", (dir / "snapshots_q1.qgs").string()},
                   {"rank", 3},
                   {"oversample", 5},
                   {"power", 1},
                   {"seed", 7},
                   {"out_basis", (dir / "standalone.qgb").string()},
                   {"spectrum_csv", (dir / "standalone_spectrum.csv").string()}}
                  .dump(),
              ctx);
  const ReducedBasis b = read_basis((dir / "standalone.qgb").string());
  CHECK(b.n_modes() == 3);
  CHECK(b.provenance.randomized);
  CHECK(b.provenance.oversample == 5);
  // deterministic: identical to the manifest-mode basis from the fixture
  const ReducedBasis b2 = read_basis((dir / "basis_q1.qgb").string());
  CHECK((b.modes - b2.modes).norm() == 0.0);

  const std::string spectrum = slurp(dir / "standalone_spectrum.csv");
  CHECK(spectrum == slurp(dir / "spectrum_q1.csv"));
}

TEST_CASE("json event stream reports stage boundaries") {
  const fs::path& dir = staged_dir();
  std::ostringstream events;
  WorkflowContext ctx;
  ctx.events = &events;
  ctx.json_log = true;
  run_command("rpod",
              json{{"in", (dir / "snapshots_q2.qgs").string()},
                   {"rank", 2},
                   {"oversample", 4},
                   {"power", 1},
                   {"seed", 1},
                   {"out_basis", (dir / "tmp_events.qgb").string()}}
                  .dump(),
              ctx);
  std::istringstream is(events.str());
  std::string line;
  int stages = 0;
  while (std::getline(is, line)) {
    const json j = parse_json_text(line);
    if (j.at("event") == "stage") ++stages;
  }
  CHECK(stages == 2);  // start + done
}

}  // TEST_SUITE
