#pragma once

#include <iosfwd>
#include <json.hpp>
#include <string>

namespace qgrom {

/// Output streams and event options shared by the config-driven commands.
struct WorkflowContext {
  std::ostream* log = nullptr;       ///< human-readable progress
  std::ostream* events = nullptr;    ///< one JSON object per line when json_log
  bool json_log = false;

  void stage(const std::string& name, const std::string& status) const;
  void info(const std::string& msg) const;
};

/// Config-driven commands behind the CLI subcommands. Each validates its
/// config (unknown keys rejected) before doing any work and throws
/// qgrom::Error subclasses on failure.
void cmd_simulate(const nlohmann::json& config, const WorkflowContext& ctx);
void cmd_sweep(const nlohmann::json& config, const WorkflowContext& ctx);
void cmd_decompose(const nlohmann::json& config, const WorkflowContext& ctx);
void cmd_train(const nlohmann::json& config, const WorkflowContext& ctx);
void cmd_predict(const nlohmann::json& config, const WorkflowContext& ctx);
void cmd_evaluate(const nlohmann::json& config, const WorkflowContext& ctx);
void cmd_bench(const nlohmann::json& config, const WorkflowContext& ctx);

/// Dispatch by command name ("simulate", "sweep", "pod", "rpod", "train",
/// "predict", "evaluate", "bench").
void run_command(const std::string& command, const std::string& config_text,
                 const WorkflowContext& ctx);

}  // namespace qgrom
