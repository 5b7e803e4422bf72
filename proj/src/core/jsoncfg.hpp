#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "core/lstm.hpp"
#include "core/solver.hpp"

namespace qgrom {

struct SweepPlan;

/// Rejects keys outside `allowed`, naming the offending JSON pointer path.
void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                const std::string& path);

/// Typed getters with InvalidArgument diagnostics carrying the field path.
double get_number(const nlohmann::json& j, const std::string& key,
                  const std::string& path);
double get_number_or(const nlohmann::json& j, const std::string& key,
                     const std::string& path, double fallback);
int get_int(const nlohmann::json& j, const std::string& key,
            const std::string& path);
int get_int_or(const nlohmann::json& j, const std::string& key,
               const std::string& path, int fallback);
std::uint64_t get_u64_or(const nlohmann::json& j, const std::string& key,
                         const std::string& path, std::uint64_t fallback);
std::string get_string(const nlohmann::json& j, const std::string& key,
                       const std::string& path);
std::string get_string_or(const nlohmann::json& j, const std::string& key,
                          const std::string& path, const std::string& fallback);
bool get_bool_or(const nlohmann::json& j, const std::string& key,
                 const std::string& path, bool fallback);
std::vector<double> get_number_list(const nlohmann::json& j,
                                    const std::string& key,
                                    const std::string& path);

nlohmann::json parse_json_text(const std::string& text);

std::string fingerprint_to_hex(std::uint64_t fp);
std::uint64_t fingerprint_from_hex(const std::string& hex);

nlohmann::json forcing_to_json(const ForcingSpec& f);
ForcingSpec forcing_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json plan_to_json(const SweepPlan& plan);
SweepPlan plan_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json hyper_to_json(const LstmHyper& h);
LstmHyper hyper_from_json(const nlohmann::json& j, const std::string& path,
                          const LstmHyper& defaults);

/// Grid block {nx, ny, x0, xf, y_lo, y_hi}.
GridPtr grid_from_json(const nlohmann::json& j, const std::string& path);

/// Physical-parameter block {Re, Ro, Fr, delta, sigma, alpha1, alpha2,
/// forcing}.
PhysParams params_from_json(const nlohmann::json& j, const std::string& path);

}  // namespace qgrom
