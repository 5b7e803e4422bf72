#include "core/jsoncfg.hpp"

#include <algorithm>
#include <cstdio>

#include "core/pipeline.hpp"

namespace qgrom {

using nlohmann::json;

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& path) {
  if (!j.is_object())
    throw InvalidArgument("config error at " + path + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw InvalidArgument("config error at " + path + "/" + key +
                            ": unknown key");
}

namespace {

const json& require(const json& j, const std::string& key,
                    const std::string& path) {
  const auto it = j.find(key);
  if (it == j.end())
    throw InvalidArgument("config error at " + path + ": missing field '" +
                          key + "'");
  return *it;
}

}  // namespace

double get_number(const json& j, const std::string& key,
                  const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number())
    throw InvalidArgument("config error at " + path + "/" + key +
                          ": expected a number");
  return v.get<double>();
}

double get_number_or(const json& j, const std::string& key,
                     const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  return get_number(j, key, path);
}

int get_int(const json& j, const std::string& key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number_integer())
    throw InvalidArgument("config error at " + path + "/" + key +
                          ": expected an integer");
  return v.get<int>();
}

int get_int_or(const json& j, const std::string& key, const std::string& path,
               int fallback) {
  if (!j.contains(key)) return fallback;
  return get_int(j, key, path);
}

std::uint64_t get_u64_or(const json& j, const std::string& key,
                         const std::string& path, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0))
    throw InvalidArgument("config error at " + path + "/" + key +
                          ": expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& key,
                       const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_string())
    throw InvalidArgument("config error at " + path + "/" + key +
                          ": expected a string");
  return v.get<std::string>();
}

std::string get_string_or(const json& j, const std::string& key,
                          const std::string& path,
                          const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  return get_string(j, key, path);
}

bool get_bool_or(const json& j, const std::string& key, const std::string& path,
                 bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean())
    throw InvalidArgument("config error at " + path + "/" + key +
                          ": expected a boolean");
  return v.get<bool>();
}

std::vector<double> get_number_list(const json& j, const std::string& key,
                                    const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_array() || v.empty())
    throw InvalidArgument("config error at " + path + "/" + key +
                          ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number())
      throw InvalidArgument("config error at " + path + "/" + key +
                            ": expected a non-empty array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config parse error: ") + e.what());
  }
}

std::string fingerprint_to_hex(std::uint64_t fp) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fp));
  return buf;
}

std::uint64_t fingerprint_from_hex(const std::string& hex) {
  if (hex.size() != 16)
    throw FormatError("fingerprint must be 16 hex digits, got '" + hex + "'");
  std::uint64_t v = 0;
  for (char c : hex) {
    v <<= 4;
    if (c >= '0' && c <= '9')
      v |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f')
      v |= static_cast<std::uint64_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F')
      v |= static_cast<std::uint64_t>(c - 'A' + 10);
    else
      throw FormatError("fingerprint must be hex, got '" + hex + "'");
  }
  return v;
}

json forcing_to_json(const ForcingSpec& f) {
  return {{"type", f.kind == ForcingSpec::Kind::zero ? "zero" : "sin_pi_y"},
          {"amplitude", f.amplitude}};
}

ForcingSpec forcing_from_json(const json& j, const std::string& path) {
  check_keys(j, {"type", "amplitude"}, path);
  ForcingSpec f;
  const std::string type = get_string(j, "type", path);
  if (type == "zero")
    f.kind = ForcingSpec::Kind::zero;
  else if (type == "sin_pi_y")
    f.kind = ForcingSpec::Kind::sin_pi_y;
  else
    throw InvalidArgument("config error at " + path +
                          "/type: expected 'zero' or 'sin_pi_y'");
  f.amplitude = get_number_or(j, "amplitude", path, 1.0);
  return f;
}

json plan_to_json(const SweepPlan& p) {
  json j;
  j["grid"] = {{"nx", p.nx},     {"ny", p.ny},     {"x0", p.x0},
               {"xf", p.xf},     {"y_lo", p.y_lo}, {"y_hi", p.y_hi}};
  j["sweep"] = {{"delta", p.deltas}, {"sigma", p.sigmas}, {"fr", p.frs},
                {"Re", p.Re},        {"Ro", p.Ro},        {"alpha1", p.alpha1},
                {"alpha2", p.alpha2}, {"forcing", forcing_to_json(p.forcing)}};
  j["time"] = {{"dt", p.dt}};
  j["snapshots"] = {{"start", p.window.start},
                    {"end", p.window.end},
                    {"stride", p.window.stride}};
  j["solver"] = {{"tol", p.solver_tol}, {"max_iter", p.solver_max_iter}};
  return j;
}

SweepPlan plan_from_json(const json& j, const std::string& path) {
  check_keys(j, {"grid", "sweep", "time", "snapshots", "solver"}, path);
  SweepPlan p;

  const json& grid = require(j, "grid", path);
  check_keys(grid, {"nx", "ny", "x0", "xf", "y_lo", "y_hi"}, path + "/grid");
  p.nx = get_int(grid, "nx", path + "/grid");
  p.ny = get_int(grid, "ny", path + "/grid");
  p.x0 = get_number(grid, "x0", path + "/grid");
  p.xf = get_number(grid, "xf", path + "/grid");
  p.y_lo = get_number(grid, "y_lo", path + "/grid");
  p.y_hi = get_number(grid, "y_hi", path + "/grid");

  const json& sweep = require(j, "sweep", path);
  check_keys(sweep,
             {"delta", "sigma", "fr", "Re", "Ro", "alpha1", "alpha2", "forcing"},
             path + "/sweep");
  p.deltas = get_number_list(sweep, "delta", path + "/sweep");
  p.sigmas = get_number_list(sweep, "sigma", path + "/sweep");
  p.frs = get_number_list(sweep, "fr", path + "/sweep");
  p.Re = get_number(sweep, "Re", path + "/sweep");
  p.Ro = get_number(sweep, "Ro", path + "/sweep");
  p.alpha1 = get_number(sweep, "alpha1", path + "/sweep");
  p.alpha2 = get_number(sweep, "alpha2", path + "/sweep");
  if (sweep.contains("forcing"))
    p.forcing = forcing_from_json(sweep.at("forcing"), path + "/sweep/forcing");

  const json& time = require(j, "time", path);
  check_keys(time, {"dt"}, path + "/time");
  p.dt = get_number(time, "dt", path + "/time");

  const json& snaps = require(j, "snapshots", path);
  check_keys(snaps, {"start", "end", "stride"}, path + "/snapshots");
  p.window.start = get_number(snaps, "start", path + "/snapshots");
  p.window.end = get_number(snaps, "end", path + "/snapshots");
  p.window.stride = get_number(snaps, "stride", path + "/snapshots");

  if (j.contains("solver")) {
    const json& solver = j.at("solver");
    check_keys(solver, {"tol", "max_iter"}, path + "/solver");
    p.solver_tol = get_number_or(solver, "tol", path + "/solver", 1e-8);
    p.solver_max_iter = get_int_or(solver, "max_iter", path + "/solver", 0);
  }
  p.validate();
  return p;
}

json hyper_to_json(const LstmHyper& h) {
  return {{"layers", h.layers},
          {"cells", h.cells},
          {"batch_size", h.batch_size},
          {"epochs", h.epochs},
          {"validation_fraction", h.validation_fraction},
          {"learning_rate", h.learning_rate},
          {"dropout", h.dropout},
          {"weight_decay", h.weight_decay},
          {"lookback", h.lookback}};
}

LstmHyper hyper_from_json(const json& j, const std::string& path,
                          const LstmHyper& defaults) {
  check_keys(j,
             {"layers", "cells", "batch_size", "epochs", "validation_fraction",
              "learning_rate", "dropout", "weight_decay", "lookback"},
             path);
  LstmHyper h = defaults;
  h.layers = get_int_or(j, "layers", path, h.layers);
  h.cells = get_int_or(j, "cells", path, h.cells);
  h.batch_size = get_int_or(j, "batch_size", path, h.batch_size);
  h.epochs = get_int_or(j, "epochs", path, h.epochs);
  h.validation_fraction =
      get_number_or(j, "validation_fraction", path, h.validation_fraction);
  h.learning_rate = get_number_or(j, "learning_rate", path, h.learning_rate);
  h.dropout = get_number_or(j, "dropout", path, h.dropout);
  h.weight_decay = get_number_or(j, "weight_decay", path, h.weight_decay);
  h.lookback = get_int_or(j, "lookback", path, h.lookback);
  h.validate();
  return h;
}

GridPtr grid_from_json(const json& j, const std::string& path) {
  check_keys(j, {"nx", "ny", "x0", "xf", "y_lo", "y_hi"}, path);
  return build_grid(get_int(j, "nx", path), get_int(j, "ny", path),
                    get_number(j, "x0", path), get_number(j, "xf", path),
                    get_number(j, "y_lo", path), get_number(j, "y_hi", path));
}

PhysParams params_from_json(const json& j, const std::string& path) {
  check_keys(j, {"Re", "Ro", "Fr", "delta", "sigma", "alpha1", "alpha2",
                 "forcing"},
             path);
  PhysParams p;
  p.Re = get_number(j, "Re", path);
  p.Ro = get_number(j, "Ro", path);
  p.Fr = get_number(j, "Fr", path);
  p.delta = get_number(j, "delta", path);
  p.sigma = get_number(j, "sigma", path);
  p.alpha1 = get_number_or(j, "alpha1", path, 0.0);
  p.alpha2 = get_number_or(j, "alpha2", path, 0.0);
  if (j.contains("forcing"))
    p.forcing = forcing_from_json(j.at("forcing"), path + "/forcing");
  p.validate();
  return p;
}

}  // namespace qgrom
